//! Dual perturbation basis on `Ω` and the projected seed `κ₀`.
//!
//! With `ψ_k = ∇u_i·∇u_j` and the Gram matrix `𝔸 = ∫_Ω ψ ψᵀ`, the dual
//! functions are `κ̃_k = Σ (𝔸⁻¹)_{kl} ψ_l` on `Ω` and zero elsewhere.
//!
//! `𝔸` is severely ill-conditioned once a dozen electrodes are involved, so
//! the tabulated dual functions are not formed through `𝔸⁻¹`. Instead the
//! weighted table `B = W^{1/2} Ψ` is factorized by column-pivoted QR,
//! `B Π = Q R`, and `κ̃ = W^{-1/2} Q R⁻ᵀ Πᵀ`. The pairing `Ψᵀ W κ̃ = I` then
//! holds to working precision independently of the conditioning of `𝔸`.
//! The squared diagonal of `R` equals the pivots of a pivoted Cholesky
//! factorization of `𝔸`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::mesh::Region;
use crate::potentials::{PairIndex, ReferencePotentials};

/// Relative pivot size below which the Gram matrix counts as singular.
pub const GRAM_PIVOT_TOL: f64 = 1e-13;
/// Relative residual norm below which a seed counts as lying in the span.
pub const SEED_SPAN_TOL: f64 = 1e-12;

pub type Seed = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Reference gradients and `ψ_k` at the quadrature points of `Ω`.
pub struct PsiTable {
    potentials: Arc<dyn ReferencePotentials>,
    pairs: PairIndex,
    num_quad: usize,
    omega_quad: Vec<usize>,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// `gradients[q * N + (n - 1)] = ∇u_n` at Ω point `q`.
    gradients: Vec<[f64; 2]>,
    psi: DMatrix<f64>,
}

impl PsiTable {
    pub fn new(space: &FeSpace, potentials: Arc<dyn ReferencePotentials>) -> Result<Self> {
        let n = potentials.electrodes().potential_count();
        let pairs = PairIndex::new(n);
        let omega_quad: Vec<usize> =
            (0..space.num_quad()).filter(|&q| space.region_of(q) == Region::InsideOmega).collect();
        if omega_quad.is_empty() {
            return Err(Error::InvalidOmega("no mesh elements inside Omega".into()));
        }
        let points: Vec<[f64; 2]> = omega_quad.iter().map(|&q| space.points()[q]).collect();
        let weights: Vec<f64> = omega_quad.iter().map(|&q| space.weights()[q]).collect();
        let per_point = crate::par::map_range(points.len(), |q| {
            (1..=n).map(|i| potentials.gradient(i, points[q])).collect::<Result<Vec<_>>>()
        });
        let mut gradients = Vec::with_capacity(points.len() * n);
        for g in per_point {
            gradients.extend(g?);
        }
        let psi = DMatrix::from_fn(points.len(), pairs.len(), |q, k| {
            let (i, j) = pairs.pair(k);
            let (a, b) = (gradients[q * n + i - 1], gradients[q * n + j - 1]);
            a[0] * b[0] + a[1] * b[1]
        });
        Ok(Self { potentials, pairs, num_quad: space.num_quad(), omega_quad, points, weights, gradients, psi })
    }

    pub fn potentials(&self) -> &Arc<dyn ReferencePotentials> {
        &self.potentials
    }

    pub fn pairs(&self) -> PairIndex {
        self.pairs
    }

    /// Number of reference potentials `N`.
    pub fn n(&self) -> usize {
        self.pairs.n()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Global quadrature index of each Ω point.
    pub fn omega_quad(&self) -> &[usize] {
        &self.omega_quad
    }

    pub fn num_quad(&self) -> usize {
        self.num_quad
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∇u_n` at Ω point `q`, `n` one-based.
    pub fn gradient(&self, q: usize, n: usize) -> [f64; 2] {
        self.gradients[q * self.n() + n - 1]
    }

    /// `len() × K` table of `ψ_k`.
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// `∫_Ω f ψ_k` for a field tabulated on the Ω points.
    pub fn pair_with_psi(&self, f: &[f64]) -> DVector<f64> {
        let wf = DVector::from_iterator(f.len(), f.iter().zip(&self.weights).map(|(f, w)| f * w));
        self.psi.tr_mul(&wf)
    }

    /// Scatters an Ω table onto all quadrature points, zero outside `Ω`.
    pub fn extend_by_zero(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_quad];
        for (&q, &v) in self.omega_quad.iter().zip(values) {
            out[q] = v;
        }
        out
    }
}

/// `𝔸_{kl} = ∫_Ω ψ_k ψ_l` by the quadrature of the table.
pub fn build_gram(table: &PsiTable) -> DMatrix<f64> {
    let b = weighted(table);
    let g = b.tr_mul(&b);
    (&g + g.transpose()) * 0.5
}

fn weighted(table: &PsiTable) -> DMatrix<f64> {
    let mut b = table.psi.clone();
    for (q, w) in table.weights.iter().enumerate() {
        let s = w.sqrt();
        b.row_mut(q).scale_mut(s);
    }
    b
}

/// The dual functions `κ̃_k` together with the Gram data.
pub struct PerturbationBasis {
    table: PsiTable,
    gram: DMatrix<f64>,
    gram_inverse: DMatrix<f64>,
    pivots: Vec<f64>,
    condition: f64,
    /// Orthonormal basis of `W^{1/2} span{ψ}` on the Ω points.
    q: DMatrix<f64>,
    /// `len() × K` table of `κ̃_k`.
    dual: DMatrix<f64>,
}

impl std::fmt::Debug for PerturbationBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbationBasis")
            .field("k", &self.gram.nrows())
            .field("points", &self.table.len())
            .field("condition", &self.condition)
            .finish()
    }
}

pub fn build_dual_basis(table: PsiTable) -> Result<PerturbationBasis> {
    let k = table.pairs.len();
    if table.len() < k {
        return Err(Error::GramSingular { pivot: 0.0, threshold: 0.0 });
    }
    let gram = build_gram(&table);
    let trace = gram.trace();
    let qr = weighted(&table).col_piv_qr();
    let r = qr.r();
    let pivots: Vec<f64> = (0..k).map(|i| r[(i, i)] * r[(i, i)]).collect();
    let threshold = GRAM_PIVOT_TOL * trace;
    let min_pivot = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_pivot > threshold) {
        return Err(Error::GramSingular { pivot: min_pivot, threshold });
    }
    let q = qr.q();
    // B Π = Q R with Π the permuted identity below
    let mut perm = DMatrix::<f64>::identity(k, k);
    qr.p().permute_columns(&mut perm);

    // X = Q R⁻ᵀ, i.e. R Xᵀ = Qᵀ
    let xt = r.solve_upper_triangular(&q.transpose()).expect("nonzero pivots");
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k)).expect("nonzero pivots");
    let gram_inverse = {
        let a = &perm * &r_inv;
        let g = &a * a.transpose();
        (&g + g.transpose()) * 0.5
    };
    let mut dual = xt.transpose() * perm.transpose();
    for (qi, w) in table.weights.iter().enumerate() {
        dual.row_mut(qi).scale_mut(1.0 / w.sqrt());
    }
    let sv = r.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = (smax / smin).powi(2);
    Ok(PerturbationBasis { table, gram, gram_inverse, pivots, condition, q, dual })
}

impl PerturbationBasis {
    pub fn table(&self) -> &PsiTable {
        &self.table
    }

    pub fn pairs(&self) -> PairIndex {
        self.table.pairs
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `𝔸⁻¹`; row `k` holds the ψ-coefficients of `κ̃_k`.
    pub fn kappa_coeffs(&self) -> &DMatrix<f64> {
        &self.gram_inverse
    }

    /// Pivots of the pivoted Cholesky factorization of `𝔸`, in pivot order.
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// Spectral condition number of `𝔸`.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// `len() × K` table of the dual functions on the Ω points.
    pub fn dual_table(&self) -> &DMatrix<f64> {
        &self.dual
    }

    /// `max_{k,l} |∫_Ω κ̃_k ψ_l − δ_kl|`.
    pub fn duality_error(&self) -> f64 {
        let mut wd = self.dual.clone();
        for (q, w) in self.table.weights.iter().enumerate() {
            wd.row_mut(q).scale_mut(*w);
        }
        let p = self.table.psi.tr_mul(&wd);
        let k = p.nrows();
        (p - DMatrix::<f64>::identity(k, k)).amax()
    }

    /// `κ̃_k(x)` through the ψ-coefficients; zero outside `Ω`.
    pub fn dual_at(&self, k: usize, x: [f64; 2], inside: bool) -> Result<f64> {
        if !inside {
            return Ok(0.0);
        }
        let pot = &self.table.potentials;
        let mut s = 0.0;
        for l in 0..self.gram.nrows() {
            s += self.gram_inverse[(k, l)] * pot.psi(l, x)?;
        }
        Ok(s)
    }

    /// `Σ_k c_k κ̃_k` on the Ω points.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let c = DVector::from_column_slice(coeffs);
        (&self.dual * c).as_slice().to_vec()
    }

    /// Basis diagnostics as a two-line CSV block.
    pub fn diagnostics_csv(&self) -> String {
        let trace = self.gram.trace();
        let min_pivot = self.pivots.iter().copied().fold(f64::INFINITY, f64::min);
        format!(
            "pairs,quadrature_points,condition_estimate,min_pivot_ratio,duality_error\n{},{},{:e},{:e},{:e}\n",
            self.gram.nrows(),
            self.table.len(),
            self.condition,
            min_pivot / trace,
            self.duality_error()
        )
    }
}

/// The seed projected onto the orthogonal complement of `span{ψ_k}`.
pub struct Kappa0 {
    seed: Seed,
    values: Vec<f64>,
    coeffs: DVector<f64>,
    seed_norm2: f64,
    norm2: f64,
}

impl std::fmt::Debug for Kappa0 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kappa0").field("seed_norm2", &self.seed_norm2).field("norm2", &self.norm2).finish()
    }
}

/// `κ₀ = κ₀^# − Σ_k (∫_Ω κ₀^# ψ_k) κ̃_k`, so that `∫_Ω κ₀ ψ_k = 0` for all `k`.
pub fn project_kappa0(basis: &PerturbationBasis, seed: Seed) -> Result<Kappa0> {
    let t = &basis.table;
    let sqrt_w: Vec<f64> = t.weights.iter().map(|w| w.sqrt()).collect();
    let raw: Vec<f64> = t.points.iter().map(|&p| seed(p)).collect();
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Expression { column: 0, message: format!("seed is not finite at {:?}", t.points[i]) });
    }
    let s = DVector::from_iterator(raw.len(), raw.iter().zip(&sqrt_w).map(|(v, w)| v * w));
    let seed_norm2 = s.norm_squared();
    let mut r = s.clone();
    for _ in 0..2 {
        let c = basis.q.tr_mul(&r);
        r -= &basis.q * c;
    }
    let norm2 = r.norm_squared();
    if !(norm2 >= SEED_SPAN_TOL * seed_norm2) || seed_norm2 == 0.0 {
        return Err(Error::SeedInSpan { ratio: if seed_norm2 > 0.0 { norm2 / seed_norm2 } else { 0.0 } });
    }
    let values: Vec<f64> = r.iter().zip(&sqrt_w).map(|(v, w)| v / w).collect();
    let coeffs = &basis.gram_inverse * t.pair_with_psi(&raw);
    Ok(Kappa0 { seed, values, coeffs, seed_norm2, norm2 })
}

impl Kappa0 {
    /// The zero perturbation base, for which the construction is trivial.
    pub fn zero(basis: &PerturbationBasis) -> Self {
        let t = &basis.table;
        Self {
            seed: Arc::new(|_| 0.0),
            values: vec![0.0; t.len()],
            coeffs: DVector::zeros(t.pairs().len()),
            seed_norm2: 0.0,
            norm2: 0.0,
        }
    }

    /// `κ₀` on the Ω points.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// ψ-coefficients of the part removed from the seed.
    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    /// `∫_Ω (κ₀^#)²`.
    pub fn seed_norm2(&self) -> f64 {
        self.seed_norm2
    }

    /// `∫_Ω κ₀²`.
    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    /// Pointwise `κ₀(x)`; zero outside `Ω`.
    pub fn at(&self, basis: &PerturbationBasis, x: [f64; 2], inside: bool) -> Result<f64> {
        if !inside {
            return Ok(0.0);
        }
        let pot = &basis.table.potentials;
        let mut v = (self.seed)(x);
        for (k, c) in self.coeffs.iter().enumerate() {
            v -= c * pot.psi(k, x)?;
        }
        Ok(v)
    }
}

/// `κ = κ₀ + Σ_k τ_k κ̃_k` on the Ω points; `tau` is in pair order.
pub fn kappa_table(basis: &PerturbationBasis, kappa0: &Kappa0, tau: &[f64]) -> Vec<f64> {
    let mut v = basis.combine(tau);
    v.iter_mut().zip(&kappa0.values).for_each(|(a, b)| *a += b);
    v
}

/// Pointwise `κ(x)`; zero outside `Ω`.
pub fn kappa_at(basis: &PerturbationBasis, kappa0: &Kappa0, tau: &[f64], x: [f64; 2], inside: bool) -> Result<f64> {
    if !inside {
        return Ok(0.0);
    }
    let mut v = kappa0.at(basis, x, true)?;
    let pot = &basis.table.potentials;
    let psi: Vec<f64> = (0..tau.len()).map(|l| pot.psi(l, x)).collect::<Result<_>>()?;
    for (k, t) in tau.iter().enumerate() {
        if *t != 0.0 {
            let c: f64 = (0..psi.len()).map(|l| basis.gram_inverse[(k, l)] * psi[l]).sum();
            v += t * c;
        }
    }
    Ok(v)
}
