//! Fixed-point construction of invisible perturbations and the PEM
//! measurement matrix.
//!
//! For `σ = 1 + εκ(τ)` with `κ(τ) = κ₀ + Σ τ_k κ̃_k`, each iteration solves
//! the `N` corrector problems `div(σ∇ũ_n) = −div(κ∇u_n)` and forms
//!
//! ```text
//! G_ij = ∫_Ω κ ∇(u_i + ε ũ_i) · ∇u_j,
//! ```
//!
//! so that `𝓜(σ) = −ε sym(G)` and the update reads `τ ← τ − sym(G)`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{kappa_at, kappa_table, Kappa0, PerturbationBasis, PsiTable};
use crate::error::{Error, Result};
use crate::fem::{self, CgOptions, FeSpace};
use crate::mesh::Region;
use crate::potentials::PairIndex;

/// Symmetric `N × N` matrix stored as its upper triangle in pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, upper: vec![0.0; n * (n + 1) / 2] }
    }

    /// From entries in pair order `(1,1), (1,2), (2,2), (1,3), …`.
    pub fn from_pairs(n: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::DimensionMismatch { expected: n * (n + 1) / 2, got: upper.len() });
        }
        Ok(Self { n, upper })
    }

    /// `(A + Aᵀ) / 2` of a square matrix.
    pub fn symmetrized(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let pairs = PairIndex::new(n);
        let upper = pairs.iter().map(|(i, j)| 0.5 * (a[(i - 1, j - 1)] + a[(j - 1, i - 1)])).collect();
        Self { n, upper }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[f64] {
        &self.upper
    }

    /// Entry `(i, j)`, zero-based.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[PairIndex::new(self.n).index(i + 1, j + 1)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = PairIndex::new(self.n).index(i + 1, j + 1);
        self.upper[k] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `Σ_{i,j} |a_ij|` over the full matrix; off-diagonals count twice.
    pub fn full_abs_sum(&self) -> f64 {
        let pairs = PairIndex::new(self.n);
        pairs.iter().zip(&self.upper).map(|((i, j), v)| if i == j { v.abs() } else { 2.0 * v.abs() }).sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { n: self.n, upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { n: self.n, upper: self.upper.iter().map(|a| s * a).collect() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        (0..m.n).map(|i| (0..m.n).map(|j| m.get(i, j)).collect()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(format!("matrix rows must all have length {n}"));
        }
        let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let pairs = PairIndex::new(n);
        let mut upper = Vec::with_capacity(pairs.len());
        for (i, j) in pairs.iter() {
            let (a, b) = (rows[i - 1][j - 1], rows[j - 1][i - 1]);
            if (a - b).abs() > 1e-12 * scale {
                return Err(format!("matrix is not symmetric at ({i}, {j})"));
            }
            upper.push(a);
        }
        Ok(Self { n, upper })
    }
}

impl fmt::Display for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{:+.6e}", self.get(i, j))).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epsilon: f64,
    /// Starting point; `None` is the zero matrix.
    pub tau0: Option<SymMatrix>,
    pub stop_tol: f64,
    pub max_iter: usize,
    /// Divergence guard on `max |τ_ij|`.
    pub gamma_max: f64,
    pub epsilon_backoff: f64,
    pub max_backoffs: usize,
    /// Positivity floor for `σ`.
    pub min_sigma: f64,
    /// Relative residual of the corrector solves.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            tau0: None,
            stop_tol: 1e-8,
            max_iter: 200,
            gamma_max: 1e3,
            epsilon_backoff: 0.5,
            max_backoffs: 5,
            min_sigma: 1e-3,
            solver_tol: 1e-12,
            solver_max_iter: 20_000,
        }
    }
}

impl RunConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidRunConfig(m.into()));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.epsilon) {
            return bad("epsilon must be positive");
        }
        if !(pos(self.stop_tol) && self.stop_tol < 1.0) {
            return bad("stop_tol must lie in (0, 1)");
        }
        if self.max_iter == 0 || self.solver_max_iter == 0 {
            return bad("iteration caps must be positive");
        }
        if !pos(self.gamma_max) || !pos(self.min_sigma) || !pos(self.solver_tol) {
            return bad("gamma_max, min_sigma and solver_tol must be positive");
        }
        if !(self.epsilon_backoff > 0.0 && self.epsilon_backoff < 1.0) {
            return bad("epsilon_backoff must lie in (0, 1)");
        }
        if let Some(t) = &self.tau0 {
            if t.n() != n {
                return Err(Error::DimensionMismatch { expected: n, got: t.n() });
            }
        }
        Ok(())
    }

    fn cg(&self) -> CgOptions {
        CgOptions { tol: self.solver_tol, max_iter: self.solver_max_iter }
    }
}

/// Everything the iteration needs: discretization, dual basis and `κ₀`.
#[derive(Clone, Copy)]
pub struct Construction<'a> {
    pub space: &'a FeSpace,
    pub basis: &'a PerturbationBasis,
    pub kappa0: &'a Kappa0,
}

/// State of one evaluation at fixed `τ` and `ε`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `G_ij = ∫_Ω κ ∇(u_i + ε ũ_i)·∇u_j`, full and unsymmetrized.
    pub g: DMatrix<f64>,
    pub correctors: Vec<Vec<f64>>,
    pub min_sigma: f64,
    pub solver_iterations: usize,
}

impl Construction<'_> {
    fn table(&self) -> &PsiTable {
        self.basis.table()
    }

    pub fn n(&self) -> usize {
        self.table().n()
    }

    /// `κ(τ)` on the Ω quadrature points.
    pub fn kappa(&self, tau: &SymMatrix) -> Vec<f64> {
        kappa_table(self.basis, self.kappa0, tau.pairs())
    }

    /// `σ = 1 + εκ(τ)` on all quadrature points.
    pub fn sigma(&self, tau: &SymMatrix, epsilon: f64) -> Vec<f64> {
        let kappa = self.kappa(tau);
        let mut sigma = vec![1.0; self.space.num_quad()];
        for (&q, k) in self.table().omega_quad().iter().zip(&kappa) {
            sigma[q] = 1.0 + epsilon * k;
        }
        sigma
    }

    /// Pointwise `σ(x)`; the region is taken from the mesh element holding `x`.
    pub fn sigma_at(&self, tau: &SymMatrix, epsilon: f64, x: [f64; 2]) -> Result<f64> {
        let inside = self.space.mesh().locate(x).is_some_and(|(e, _)| self.space.mesh().tag(e) == Region::InsideOmega);
        Ok(1.0 + epsilon * kappa_at(self.basis, self.kappa0, tau.pairs(), x, inside)?)
    }

    /// `σ` sampled pointwise at the quadrature points of another space whose
    /// mesh carries its own `Ω` tags.
    pub fn sigma_on(&self, other: &FeSpace, tau: &SymMatrix, epsilon: f64) -> Result<Vec<f64>> {
        let values = crate::par::map_range(other.num_quad(), |q| -> Result<f64> {
            if epsilon == 0.0 || other.region_of(q) == Region::OutsideOmega {
                return Ok(1.0);
            }
            Ok(1.0 + epsilon * kappa_at(self.basis, self.kappa0, tau.pairs(), other.points()[q], true)?)
        });
        values.into_iter().collect()
    }

    /// Solves all correctors at `(τ, ε)` and forms `G`. `warm` holds previous
    /// correctors used as initial guesses.
    pub fn evaluate(
        &self,
        tau: &SymMatrix,
        epsilon: f64,
        config: &RunConfig,
        warm: Option<&[Vec<f64>]>,
    ) -> Result<Evaluation> {
        let n = self.n();
        if tau.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: tau.n() });
        }
        let table = self.table();
        let kappa = self.kappa(tau);
        let (imin, kmin) =
            kappa.iter().enumerate().fold((0, f64::INFINITY), |m, (i, &k)| if k < m.1 { (i, k) } else { m });
        let min_sigma = if kappa.is_empty() { 1.0 } else { (1.0 + epsilon * kmin).min(1.0) };
        if !(min_sigma >= config.min_sigma) {
            return Err(Error::PositivityViolation {
                value: min_sigma,
                point: table.points()[imin],
                floor: config.min_sigma,
            });
        }
        let sigma = self.sigma(tau, epsilon);
        let a = fem::assemble_stiffness(self.space, &sigma)?;
        let results = crate::par::map_range(n, |i| -> Result<(Vec<f64>, usize)> {
            let mut b = vec![0.0; self.space.num_dofs()];
            let tris = self.space.mesh().triangles();
            let nq = self.space.quad_per_element();
            for (p, &q) in table.omega_quad().iter().enumerate() {
                let w = table.weights()[p] * kappa[p];
                if w == 0.0 {
                    continue;
                }
                let gu = table.gradient(p, i + 1);
                let t = &tris[q / nq];
                let g = &self.space.shape_gradients()[q];
                for (l, &node) in t.iter().enumerate() {
                    // corrector load −∫κ∇u_i·∇φ
                    b[node] -= w * (gu[0] * g[l][0] + gu[1] * g[l][1]);
                }
            }
            let init = warm.map(|w| w[i].as_slice());
            let (u, stats) = fem::solve_neumann(self.space, &a, &b, config.cg(), init)?;
            Ok((u, stats.iterations))
        });
        let mut correctors = Vec::with_capacity(n);
        let mut solver_iterations = 0;
        for r in results {
            let (u, it) = r?;
            solver_iterations += it;
            correctors.push(u);
        }
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            let du = fem::fe_gradient_at(self.space, &correctors[i], table.omega_quad())?;
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..table.len() {
                    let gi = table.gradient(p, i + 1);
                    let gj = table.gradient(p, j + 1);
                    let v = [gi[0] + epsilon * du[p][0], gi[1] + epsilon * du[p][1]];
                    s += table.weights()[p] * kappa[p] * (v[0] * gj[0] + v[1] * gj[1]);
                }
                g[(i, j)] = s;
            }
        }
        Ok(Evaluation { g, correctors, min_sigma, solver_iterations })
    }
}

/// Zero-mean corrector `ũ_n` for electrode index `n` (one-based).
pub fn solve_corrector(
    c: &Construction,
    tau: &SymMatrix,
    epsilon: f64,
    n: usize,
    config: &RunConfig,
) -> Result<Vec<f64>> {
    if n == 0 || n > c.n() {
        return Err(Error::DimensionMismatch { expected: c.n(), got: n });
    }
    let mut e = c.evaluate(tau, epsilon, config, None)?;
    Ok(e.correctors.swap_remove(n - 1))
}

/// `τ − sym(G(τ))`.
pub fn fixed_point_step(c: &Construction, tau: &SymMatrix, epsilon: f64, config: &RunConfig) -> Result<SymMatrix> {
    let e = c.evaluate(tau, epsilon, config, None)?;
    Ok(tau.sub(&SymMatrix::symmetrized(&e.g)))
}

/// `𝓜(1 + εκ(τ)) = −ε sym(G(τ))`.
pub fn pem_measurement_matrix(
    c: &Construction,
    tau: &SymMatrix,
    epsilon: f64,
    config: &RunConfig,
) -> Result<SymMatrix> {
    if epsilon == 0.0 {
        return Ok(SymMatrix::zeros(c.n()));
    }
    let e = c.evaluate(tau, epsilon, config, None)?;
    Ok(SymMatrix::symmetrized(&e.g).scale(-epsilon))
}

/// Relative electrode potentials for the current pattern `current`
/// (length `N + 1`, mean-free), as the mean-free representative.
pub fn measurement_map_apply(m: &SymMatrix, current: &[f64]) -> Result<Vec<f64>> {
    if current.len() != m.n() + 1 {
        return Err(Error::DimensionMismatch { expected: m.n() + 1, got: current.len() });
    }
    let sum: f64 = current.iter().sum();
    let scale = current.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if sum.abs() > 1e-12 * scale {
        return Err(Error::NotMeanFree(sum));
    }
    // I = Σ_{n≥1} I_n (e^n − e^0); entries of 𝓜a are V_n − V_0
    let v = m.mul_vec(&current[1..]);
    let mut out = Vec::with_capacity(current.len());
    out.push(0.0);
    out.extend(v);
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    out.iter_mut().for_each(|x| *x -= mean);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackoffReason {
    TauBound,
    IncreasingDiscrepancy,
    Positivity,
    SolverFailure,
    /// The observed contraction rate cannot reach `stop_tol` within the
    /// remaining iteration budget.
    Stagnation,
}

/// Iterations over which the contraction rate is measured.
const RATE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    /// The value of ε that was abandoned.
    pub epsilon: f64,
    pub reason: BackoffReason,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `Σ_{i,j} |τ^{k+1}_ij − τ^k_ij|` over the full matrix.
    pub discrepancy: f64,
    pub tau_max: f64,
    pub min_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub converged: bool,
    pub iterations: usize,
    /// Records of the final attempt, one per iteration.
    pub history: Vec<IterationRecord>,
    pub tau: SymMatrix,
    /// `max |𝓜_ij|` at the returned `τ`.
    pub measurement_max: f64,
    pub epsilon_requested: f64,
    pub epsilon_used: f64,
    pub min_sigma: f64,
    pub backoffs: Vec<Backoff>,
}

impl RunReport {
    /// Per-iteration history as CSV.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,discrepancy,tau_max,min_sigma\n");
        for r in &self.history {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.iteration, r.discrepancy, r.tau_max, r.min_sigma));
        }
        s
    }

    /// Observed linear convergence factor: geometric mean of successive
    /// discrepancy ratios.
    pub fn contraction_estimate(&self) -> Option<f64> {
        let h = &self.history;
        if h.len() < 3 {
            return None;
        }
        let (a, b) = (h[1].discrepancy, h[h.len() - 1].discrepancy);
        Some((b / a).powf(1.0 / (h.len() - 2) as f64))
    }
}

enum Attempt {
    Done { converged: bool, tau: SymMatrix, history: Vec<IterationRecord>, warm: Vec<Vec<f64>> },
    Diverged { reason: BackoffReason, iteration: usize },
}

/// Runs the fixed-point iteration from `τ⁰`, halving ε on divergence.
///
/// Returns the report of the final attempt. Exhausting `max_iter` is not an
/// error: the report then has `converged == false`.
pub fn run_algorithm(c: &Construction, config: &RunConfig) -> Result<RunReport> {
    run_algorithm_with(c, config, |_| {})
}

/// [`run_algorithm`] with a callback invoked after every iteration.
pub fn run_algorithm_with<F: FnMut(&IterationRecord)>(
    c: &Construction,
    config: &RunConfig,
    mut on_iteration: F,
) -> Result<RunReport> {
    let n = c.n();
    config.validate(n)?;
    let tau0 = config.tau0.clone().unwrap_or_else(|| SymMatrix::zeros(n));
    let mut epsilon = config.epsilon;
    let mut backoffs = Vec::new();
    loop {
        match attempt(c, config, &tau0, epsilon, &mut on_iteration)? {
            Attempt::Done { converged, tau, history, warm } => {
                let e = c.evaluate(&tau, epsilon, config, Some(&warm))?;
                let m = SymMatrix::symmetrized(&e.g).scale(-epsilon);
                return Ok(RunReport {
                    converged,
                    iterations: history.len(),
                    history,
                    tau,
                    measurement_max: m.max_abs(),
                    epsilon_requested: config.epsilon,
                    epsilon_used: epsilon,
                    min_sigma: e.min_sigma,
                    backoffs,
                });
            }
            Attempt::Diverged { reason, iteration } => {
                backoffs.push(Backoff { epsilon, reason, iteration });
                if backoffs.len() > config.max_backoffs {
                    return Err(Error::MaxBackoffsExceeded(config.max_backoffs));
                }
                epsilon *= config.epsilon_backoff;
            }
        }
    }
}

fn attempt<F: FnMut(&IterationRecord)>(
    c: &Construction,
    config: &RunConfig,
    tau0: &SymMatrix,
    epsilon: f64,
    on_iteration: &mut F,
) -> Result<Attempt> {
    let mut tau = tau0.clone();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut warm: Option<Vec<Vec<f64>>> = None;
    let mut increases = 0;
    for it in 1..=config.max_iter {
        let e = match c.evaluate(&tau, epsilon, config, warm.as_deref()) {
            Ok(e) => e,
            Err(Error::PositivityViolation { .. }) => {
                return Ok(Attempt::Diverged { reason: BackoffReason::Positivity, iteration: it })
            }
            Err(Error::NoConvergence { .. } | Error::NonpositiveConductivity { .. }) => {
                return Ok(Attempt::Diverged { reason: BackoffReason::SolverFailure, iteration: it })
            }
            Err(other) => return Err(other),
        };
        let next = tau.sub(&SymMatrix::symmetrized(&e.g));
        let discrepancy = next.sub(&tau).full_abs_sum();
        let record = IterationRecord { iteration: it, discrepancy, tau_max: next.max_abs(), min_sigma: e.min_sigma };
        on_iteration(&record);
        if !(record.tau_max <= config.gamma_max) || !discrepancy.is_finite() {
            return Ok(Attempt::Diverged { reason: BackoffReason::TauBound, iteration: it });
        }
        if history.last().is_some_and(|p| discrepancy > p.discrepancy) {
            increases += 1;
            if increases >= 3 {
                return Ok(Attempt::Diverged { reason: BackoffReason::IncreasingDiscrepancy, iteration: it });
            }
        } else {
            increases = 0;
        }
        history.push(record);
        tau = next;
        warm = Some(e.correctors);
        if discrepancy < config.stop_tol {
            return Ok(Attempt::Done { converged: true, tau, history, warm: warm.unwrap() });
        }
        if stagnating(&history, config) {
            return Ok(Attempt::Diverged { reason: BackoffReason::Stagnation, iteration: it });
        }
    }
    let warm = warm.unwrap_or_else(|| vec![vec![0.0; c.space.num_dofs()]; c.n()]);
    Ok(Attempt::Done { converged: false, tau, history, warm })
}

/// Whether the rate over the last `RATE_WINDOW` iterations needs more than
/// the remaining budget to reach `stop_tol`.
fn stagnating(history: &[IterationRecord], config: &RunConfig) -> bool {
    let k = history.len();
    if k <= RATE_WINDOW || k >= config.max_iter {
        return false;
    }
    let (old, now) = (history[k - 1 - RATE_WINDOW].discrepancy, history[k - 1].discrepancy);
    let rate = (now / old).powf(1.0 / RATE_WINDOW as f64);
    if !(rate < 1.0) {
        return true;
    }
    (config.stop_tol / now).ln() / rate.ln() > (config.max_iter - k) as f64
}

/// `σ = 1 + εκ(τ)` on all quadrature points, for export.
pub fn sigma_table(c: &Construction, tau: &SymMatrix, epsilon: f64) -> Vec<f64> {
    c.sigma(tau, epsilon)
}
