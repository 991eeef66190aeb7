//! Compressed sparse rows and a Jacobi-preconditioned conjugate gradient for
//! the singular Neumann systems.

use crate::error::{Error, Result};

/// Symmetric matrix in CSR form with a fixed sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Pattern holding every pair of nodes that share an element. Also returns,
    /// per element, the value slot of each of its 6×6 local entries.
    pub fn from_elements(n: usize, elements: &[[usize; 6]]) -> (Self, Vec<[usize; 36]>) {
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in elements {
            for &a in t {
                neighbours[a].extend_from_slice(t);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let m = Self { n, row_ptr, values: vec![0.0; cols.len()], cols };
        let slots = elements
            .iter()
            .map(|t| {
                let mut s = [0; 36];
                for (i, &a) in t.iter().enumerate() {
                    for (j, &b) in t.iter().enumerate() {
                        s[6 * i + j] = m.slot(a, b).expect("pattern contains element pairs");
                    }
                }
                s
            })
            .collect();
        (m, slots)
    }

    pub(crate) fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let r = &self.cols[self.row_ptr[row]..self.row_ptr[row + 1]];
        r.binary_search(&col).ok().map(|k| self.row_ptr[row] + k)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.slot(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[row]..self.row_ptr[row + 1]).map(move |k| (self.cols[k], self.values[k]))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `max |A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative residual `‖b − Ax‖ / ‖b‖` at which to stop.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `A x = b` for a positive semidefinite `A` whose kernel is the
/// constants, with `b ⟂ 1`. The residual is kept orthogonal to the kernel so
/// that iterates do not drift. `x` holds the initial guess on entry.
pub fn pcg_singular(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgStats> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len().min(x.len()) });
    }
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = a.apply(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    remove_mean(&mut r);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        remove_mean(&mut r);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
    }
    Ok(CgStats { iterations: it, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Path-graph Laplacian on `n` nodes as a CSR matrix.
    fn path(n: usize) -> CsrMatrix {
        let elements: Vec<[usize; 6]> = (0..n - 1).map(|i| [i, i + 1, i, i + 1, i, i + 1]).collect();
        let (mut m, _) = CsrMatrix::from_elements(n, &elements);
        for i in 0..n - 1 {
            for (a, b, v) in [(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)] {
                let k = m.slot(a, b).unwrap();
                m.values_mut()[k] += v;
            }
        }
        m
    }

    #[test]
    fn solves_singular_laplacian() {
        let a = path(50);
        let mut b: Vec<f64> = (0..50).map(|i| ((i * 7) % 11) as f64).collect();
        remove_mean(&mut b);
        let mut x = vec![0.0; 50];
        let stats = pcg_singular(&a, &b, &mut x, CgOptions::default()).unwrap();
        let r = a.apply(&x);
        let err = r.iter().zip(&b).map(|(r, b)| (r - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err} after {}", stats.iterations);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = path(5);
        let mut x = vec![1.0; 5];
        pcg_singular(&a, &[0.0; 5], &mut x, CgOptions::default()).unwrap();
        assert_eq!(x, vec![0.0; 5]);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let a = path(200);
        let mut b = vec![0.0; 200];
        b[0] = 1.0;
        b[199] = -1.0;
        let mut x = vec![0.0; 200];
        let r = pcg_singular(&a, &b, &mut x, CgOptions { tol: 1e-12, max_iter: 3 });
        assert!(matches!(r, Err(Error::NoConvergence { iterations: 3, .. })));
    }
}
