//! The demo operations, independent of the JavaScript bindings.

use invisible_eit::config::{ElectrodeSpec, Experiment, ExperimentConfig};
use invisible_eit::mesh::OmegaSpec;
use invisible_eit::potentials::{psi_value, u0_value, ElectrodeConfig};
use invisible_eit::solver::{run_algorithm_with, Backoff, IterationRecord};
use invisible_eit::{Error, Result};
use serde::{Deserialize, Serialize};

/// Square raster over `[-1, 1]²`, row-major from the top row (`y = 1`);
/// `NaN` outside the disk and at singular points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Raster {
    pub size: usize,
    pub values: Vec<f64>,
}

impl Raster {
    fn sample<F: Fn([f64; 2]) -> Option<f64>>(size: usize, f: F) -> Self {
        let size = size.max(2);
        let mut values = Vec::with_capacity(size * size);
        for j in 0..size {
            let y = 1.0 - 2.0 * j as f64 / (size - 1) as f64;
            for i in 0..size {
                let x = -1.0 + 2.0 * i as f64 / (size - 1) as f64;
                let v = if x * x + y * y < 1.0 { f([x, y]) } else { None };
                values.push(v.unwrap_or(f64::NAN));
            }
        }
        Self { size, values }
    }
}

/// Parameters shared by the construction and the dual-basis view.
#[derive(Debug, Clone, Deserialize)]
pub struct Request {
    pub degrees: Vec<f64>,
    pub omega: OmegaSpec,
    #[serde(default = "default_h")]
    pub target_h: f64,
    #[serde(default = "default_seed")]
    pub seed: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_size")]
    pub size: usize,
    /// Pair index for the dual-basis view.
    #[serde(default)]
    pub k: usize,
}

fn default_h() -> f64 {
    0.1
}

fn default_seed() -> String {
    "1".into()
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_size() -> usize {
    96
}

impl Request {
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    fn experiment(&self) -> Result<Experiment> {
        let config = ExperimentConfig {
            electrodes: ElectrodeSpec::Degrees { degrees: self.degrees.clone() },
            omega: self.omega.clone(),
            epsilon: self.epsilon,
            kappa0_seed: self.seed.clone(),
            target_h: self.target_h,
            cem: None,
            ..ExperimentConfig::minimal(self.degrees.len().max(2), 1.0)
        };
        Experiment::prepare(&config)
    }
}

/// `u_n` for `index = n ≥ 1`, or `ψ_k` for pair index `k` when `psi` is set.
pub fn potential_raster(degrees: &[f64], index: usize, psi: bool, size: usize) -> Result<Raster> {
    let cfg = ElectrodeConfig::from_degrees(degrees)?;
    let n = cfg.potential_count();
    let limit = if psi { n * (n + 1) / 2 } else { n };
    let valid = if psi { index < limit } else { (1..=limit).contains(&index) };
    if !valid {
        return Err(Error::DimensionMismatch { expected: limit, got: index });
    }
    Ok(Raster::sample(size, |x| {
        let v = if psi { psi_value(index, x, &cfg) } else { u0_value(index, x, &cfg) };
        v.ok().filter(|v| v.is_finite())
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstructOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub epsilon_used: f64,
    pub measurement_max: f64,
    pub unbalanced_max: f64,
    pub min_sigma: f64,
    pub elements: usize,
    pub history: Vec<IterationRecord>,
    pub backoffs: Vec<Backoff>,
    pub sigma: Raster,
}

/// Runs the construction and rasterizes `σ^ε`.
pub fn construct(req: &Request) -> Result<ConstructOutcome> {
    let exp = req.experiment()?;
    let con = exp.construction();
    let run = exp.config.run_config();
    let report = run_algorithm_with(&con, &run, |_| {})?;
    let n = exp.basis.table().n();
    let zero = invisible_eit::solver::SymMatrix::zeros(n);
    let unbalanced = invisible_eit::solver::pem_measurement_matrix(&con, &zero, report.epsilon_used, &run)?;
    let sigma = Raster::sample(req.size, |x| con.sigma_at(&report.tau, report.epsilon_used, x).ok());
    Ok(ConstructOutcome {
        converged: report.converged,
        iterations: report.iterations,
        epsilon_used: report.epsilon_used,
        measurement_max: report.measurement_max,
        unbalanced_max: unbalanced.max_abs(),
        min_sigma: report.min_sigma,
        elements: exp.space.mesh().num_elements(),
        history: report.history,
        backoffs: report.backoffs,
        sigma,
    })
}

/// `κ̃_k` on a raster, zero outside `Ω`.
pub fn dual_basis_raster(req: &Request) -> Result<Raster> {
    let exp = req.experiment()?;
    let len = exp.basis.pairs().len();
    if req.k >= len {
        return Err(Error::DimensionMismatch { expected: len, got: req.k });
    }
    Ok(Raster::sample(req.size, |x| exp.basis.dual_at(req.k, x, req.omega.contains(x, 0.0)).ok()))
}
