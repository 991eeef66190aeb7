//! P2 finite elements for the pure-Neumann conductivity equation.
//!
//! Conductivities and perturbations are never interpolated: they are sampled
//! at the quadrature points of [`FeSpace`], which fixes one global ordering
//! (element-major, then quadrature point) for every sampled field.

mod sparse;

use std::sync::Arc;

pub use sparse::{pcg_singular, CgOptions, CgStats, CsrMatrix};

use crate::error::{Error, Result};
use crate::mesh::{element, Mesh, Region};
use crate::par;
use crate::quadrature::{self, gauss_legendre_unit, QuadratureRule};

/// Support threshold for perturbations sampled outside `Ω`.
pub const SUPPORT_TOL: f64 = 1e-14;
/// Relative size of `Σ b_p` above which a Neumann load is rejected.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Mesh plus precomputed quadrature geometry and the stiffness pattern.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    rule: QuadratureRule,
    shapes: Vec<[f64; 6]>,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    gradients: Vec<[[f64; 2]; 6]>,
    pattern: CsrMatrix,
    slots: Vec<[usize; 36]>,
    mass: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    All,
    InsideOmega,
}

/// A scalar field either as P2 coefficients or sampled at quadrature points.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldOnMesh {
    Nodal(Vec<f64>),
    Sampled(Vec<f64>),
}

impl FieldOnMesh {
    pub fn at_quadrature(&self, space: &FeSpace) -> Result<Vec<f64>> {
        match self {
            FieldOnMesh::Nodal(c) => fe_values_at_quadrature(space, c),
            FieldOnMesh::Sampled(v) => {
                if v.len() != space.num_quad() {
                    return Err(Error::DimensionMismatch { expected: space.num_quad(), got: v.len() });
                }
                Ok(v.clone())
            }
        }
    }
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        Self::with_degree(mesh, quadrature::DEFAULT_DEGREE)
    }

    pub fn with_degree(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        let rule = quadrature::triangle(degree)?;
        let nq = rule.len();
        let shapes: Vec<[f64; 6]> = (0..nq)
            .map(|q| {
                let [xi, eta] = rule.reference_point(q);
                element::shape(xi, eta)
            })
            .collect();
        let per_element = par::map_range(mesh.num_elements(), |e| {
            let nodes = mesh.element_nodes(e);
            (0..nq)
                .map(|q| {
                    let [xi, eta] = rule.reference_point(q);
                    let j = element::jacobian(&nodes, xi, eta);
                    let g = element::physical_gradients(&j, &element::shape_gradients(xi, eta));
                    (element::map_point(&nodes, xi, eta), rule.weights[q] * element::det(&j).abs(), g)
                })
                .collect::<Vec<_>>()
        });
        let total = mesh.num_elements() * nq;
        let (mut points, mut weights, mut gradients) =
            (Vec::with_capacity(total), Vec::with_capacity(total), Vec::with_capacity(total));
        for el in per_element {
            for (p, w, g) in el {
                points.push(p);
                weights.push(w);
                gradients.push(g);
            }
        }
        let (pattern, slots) = CsrMatrix::from_elements(mesh.num_nodes(), mesh.triangles());
        let mut mass = vec![0.0; mesh.num_nodes()];
        for (e, t) in mesh.triangles().iter().enumerate() {
            for q in 0..nq {
                let w = weights[e * nq + q];
                for (k, &node) in t.iter().enumerate() {
                    mass[node] += w * shapes[q][k];
                }
            }
        }
        Ok(Self { mesh, rule, shapes, points, weights, gradients, pattern, slots, mass })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_nodes()
    }

    pub fn quad_per_element(&self) -> usize {
        self.rule.len()
    }

    pub fn num_quad(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Quadrature weights including the Jacobian determinant.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shape_gradients(&self) -> &[[[f64; 2]; 6]] {
        &self.gradients
    }

    /// `∫_D φ_p` for every node.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn element_of(&self, q: usize) -> usize {
        q / self.rule.len()
    }

    pub fn region_of(&self, q: usize) -> Region {
        self.mesh.tag(q / self.rule.len())
    }

    pub fn element_quad(&self, e: usize) -> std::ops::Range<usize> {
        let nq = self.rule.len();
        e * nq..(e + 1) * nq
    }

    /// Evaluates `f` at every quadrature point.
    pub fn sample<F: Fn([f64; 2]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        par::map_range(self.num_quad(), |q| f(self.points[q]))
    }

    /// Evaluates `f` at the quadrature points of `INSIDE_OMEGA` elements and
    /// sets the field to zero elsewhere.
    pub fn sample_in_omega<F: Fn([f64; 2]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        par::map_range(
            self.num_quad(),
            |q| {
                if self.region_of(q) == Region::InsideOmega {
                    f(self.points[q])
                } else {
                    0.0
                }
            },
        )
    }

    /// Fallible variant of [`FeSpace::sample`].
    pub fn try_sample<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn([f64; 2]) -> Result<T> + Sync,
    {
        par::map_range(self.num_quad(), |q| f(self.points[q])).into_iter().collect()
    }

    /// P2 interpolant of `f` through the mesh nodes.
    pub fn interpolate<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        self.mesh.nodes().iter().map(|&p| f(p)).collect()
    }
}

/// `A_pq = ∫_D σ ∇φ_p·∇φ_q` with `σ` sampled at the quadrature points.
pub fn assemble_stiffness(space: &FeSpace, sigma: &[f64]) -> Result<CsrMatrix> {
    if sigma.len() != space.num_quad() {
        return Err(Error::DimensionMismatch { expected: space.num_quad(), got: sigma.len() });
    }
    let (imin, vmin) =
        sigma.iter().enumerate().fold((0, f64::INFINITY), |m, (i, &v)| if v < m.1 || v.is_nan() { (i, v) } else { m });
    if !(vmin > 0.0) {
        return Err(Error::NonpositiveConductivity { value: vmin, point: space.points[imin] });
    }
    let nq = space.quad_per_element();
    let locals = par::map_range(space.mesh.num_elements(), |e| {
        let mut k = [0.0; 36];
        for q in e * nq..(e + 1) * nq {
            let g = &space.gradients[q];
            let w = space.weights[q] * sigma[q];
            for i in 0..6 {
                for j in i..6 {
                    k[6 * i + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..i {
                k[6 * i + j] = k[6 * j + i];
            }
        }
        k
    });
    let mut a = space.pattern.clone();
    let values = a.values_mut();
    for (k, slots) in locals.iter().zip(&space.slots) {
        for (v, &s) in k.iter().zip(slots) {
            values[s] += v;
        }
    }
    Ok(a)
}

/// `b_p = ∫_Ω κ ∇u·∇φ_p` with `κ` and `∇u` sampled at the quadrature points.
pub fn assemble_corrector_load(space: &FeSpace, kappa: &[f64], grad_u: &[[f64; 2]]) -> Result<Vec<f64>> {
    let nqt = space.num_quad();
    for len in [kappa.len(), grad_u.len()] {
        if len != nqt {
            return Err(Error::DimensionMismatch { expected: nqt, got: len });
        }
    }
    for (q, &k) in kappa.iter().enumerate() {
        if space.region_of(q) == Region::OutsideOmega && k.abs() > SUPPORT_TOL {
            return Err(Error::SupportViolation { value: k, point: space.points[q] });
        }
    }
    let nq = space.quad_per_element();
    let mut b = vec![0.0; space.num_dofs()];
    for (e, t) in space.mesh.triangles().iter().enumerate() {
        if space.mesh.tag(e) == Region::OutsideOmega {
            continue;
        }
        for q in e * nq..(e + 1) * nq {
            let w = space.weights[q] * kappa[q];
            let gu = grad_u[q];
            for (i, &node) in t.iter().enumerate() {
                let g = space.gradients[q][i];
                b[node] += w * (gu[0] * g[0] + gu[1] * g[1]);
            }
        }
    }
    Ok(b)
}

/// Solves the Neumann problem `A u = load` on `H¹(D)/ℝ` and returns the
/// representative with `∫_D u = 0`. `initial` seeds the iteration.
pub fn solve_neumann(
    space: &FeSpace,
    a: &CsrMatrix,
    load: &[f64],
    opts: CgOptions,
    initial: Option<&[f64]>,
) -> Result<(Vec<f64>, CgStats)> {
    let n = space.num_dofs();
    if load.len() != n || a.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: load.len() });
    }
    let sum: f64 = load.iter().sum();
    let l1: f64 = load.iter().map(|v| v.abs()).sum();
    if sum.abs() > COMPATIBILITY_TOL * l1 {
        return Err(Error::IncompatibleLoad { sum });
    }
    let mean = sum / n as f64;
    let b: Vec<f64> = load.iter().map(|v| v - mean).collect();
    let mut u = initial.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    let stats = pcg_singular(a, &b, &mut u, opts)?;
    let total: f64 = space.mass.iter().sum();
    let shift = space.mass.iter().zip(&u).map(|(m, u)| m * u).sum::<f64>() / total;
    u.iter_mut().for_each(|v| *v -= shift);
    Ok((u, stats))
}

pub fn fe_values_at_quadrature(space: &FeSpace, coeffs: &[f64]) -> Result<Vec<f64>> {
    check_len(space, coeffs)?;
    let nq = space.quad_per_element();
    let tris = space.mesh.triangles();
    Ok(par::map_range(space.num_quad(), |q| {
        let t = &tris[q / nq];
        let s = &space.shapes[q % nq];
        (0..6).map(|i| coeffs[t[i]] * s[i]).sum()
    }))
}

/// Gradients of the P2 function with the given coefficients at every
/// quadrature point.
pub fn fe_gradient_at_quadrature(space: &FeSpace, coeffs: &[f64]) -> Result<Vec<[f64; 2]>> {
    check_len(space, coeffs)?;
    let nq = space.quad_per_element();
    let tris = space.mesh.triangles();
    Ok(par::map_range(space.num_quad(), |q| {
        let t = &tris[q / nq];
        let g = &space.gradients[q];
        let mut out = [0.0; 2];
        for i in 0..6 {
            out[0] += coeffs[t[i]] * g[i][0];
            out[1] += coeffs[t[i]] * g[i][1];
        }
        out
    }))
}

/// Gradients at a subset of the quadrature points, given by global index.
pub fn fe_gradient_at(space: &FeSpace, coeffs: &[f64], quad: &[usize]) -> Result<Vec<[f64; 2]>> {
    check_len(space, coeffs)?;
    let nq = space.quad_per_element();
    let tris = space.mesh.triangles();
    Ok(quad
        .iter()
        .map(|&q| {
            let t = &tris[q / nq];
            let g = &space.gradients[q];
            let mut out = [0.0; 2];
            for i in 0..6 {
                out[0] += coeffs[t[i]] * g[i][0];
                out[1] += coeffs[t[i]] * g[i][1];
            }
            out
        })
        .collect())
}

fn check_len(space: &FeSpace, coeffs: &[f64]) -> Result<()> {
    if coeffs.len() != space.num_dofs() {
        return Err(Error::DimensionMismatch { expected: space.num_dofs(), got: coeffs.len() });
    }
    Ok(())
}

/// Quadrature sum of sampled values over the requested elements.
pub fn integrate(space: &FeSpace, values: &[f64], domain: Domain) -> f64 {
    let nq = space.quad_per_element();
    let mut s = 0.0;
    for e in 0..space.mesh.num_elements() {
        if domain == Domain::InsideOmega && space.mesh.tag(e) != Region::InsideOmega {
            continue;
        }
        for q in e * nq..(e + 1) * nq {
            s += space.weights[q] * values[q];
        }
    }
    s
}

/// Value and gradient of a P2 function at an arbitrary point of the mesh.
pub fn evaluate(mesh: &Mesh, coeffs: &[f64], x: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let (e, [xi, eta]) = mesh.locate(x)?;
    let t = mesh.triangles()[e];
    let nodes = mesh.element_nodes(e);
    let s = element::shape(xi, eta);
    let g = element::physical_gradients(&element::jacobian(&nodes, xi, eta), &element::shape_gradients(xi, eta));
    let mut v = 0.0;
    let mut grad = [0.0; 2];
    for i in 0..6 {
        v += coeffs[t[i]] * s[i];
        grad[0] += coeffs[t[i]] * g[i][0];
        grad[1] += coeffs[t[i]] * g[i][1];
    }
    Some((v, grad))
}

/// Quadrature point on a curved boundary edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub edge: usize,
    /// Start vertex, end vertex, midside node.
    pub nodes: [usize; 3],
    pub point: [f64; 2],
    /// Gauss weight times the arc-length element.
    pub weight: f64,
    /// Traces of the three edge shape functions.
    pub shape: [f64; 3],
}

/// Gauss–Legendre points on each boundary edge, integrating along the
/// isoparametric P2 curve.
pub fn boundary_quadrature(mesh: &Mesh, points_per_edge: usize) -> Vec<BoundaryPoint> {
    let (ts, ws) = gauss_legendre_unit(points_per_edge);
    let nodes = mesh.nodes();
    let mut out = Vec::with_capacity(mesh.boundary_edges().len() * ts.len());
    for (k, e) in mesh.boundary_edges().iter().enumerate() {
        let p = e.nodes.map(|i| nodes[i]);
        for (&t, &w) in ts.iter().zip(&ws) {
            let shape = [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)];
            let dshape = [4.0 * t - 3.0, 4.0 * t - 1.0, 4.0 - 8.0 * t];
            let mut x = [0.0; 2];
            let mut dx = [0.0; 2];
            for i in 0..3 {
                for d in 0..2 {
                    x[d] += shape[i] * p[i][d];
                    dx[d] += dshape[i] * p[i][d];
                }
            }
            out.push(BoundaryPoint { edge: k, nodes: e.nodes, point: x, weight: w * dx[0].hypot(dx[1]), shape });
        }
    }
    out
}
