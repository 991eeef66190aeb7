use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use invisible_eit::cem::{e_cem, trig_current_basis};
use invisible_eit::config::{ElectrodeSpec, Experiment, ExperimentConfig};
use invisible_eit::export::{element_means, raster_csv, vtk_cells};
use invisible_eit::fem::FeSpace;
use invisible_eit::mesh::{build_disk_mesh, Region};
use invisible_eit::solver::{
    pem_measurement_matrix, run_algorithm_with, Backoff, IterationRecord, RunReport, SymMatrix,
};
use invisible_eit::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::{Common, Field, EXIT_DIVERGED};

/// What `generate` leaves behind for the verification commands.
#[derive(Serialize, Deserialize)]
struct Solution {
    config: ExperimentConfig,
    tau: SymMatrix,
    epsilon_used: f64,
    converged: bool,
}

/// Run summary; every field is written on success and failure alike.
#[derive(Serialize, Default)]
struct Summary {
    status: &'static str,
    error: Option<&'static str>,
    error_message: Option<String>,
    converged: bool,
    iterations: usize,
    epsilon_requested: Option<f64>,
    epsilon_used: Option<f64>,
    measurement_max: Option<f64>,
    min_sigma: Option<f64>,
    backoffs: Vec<Backoff>,
    elements: Option<usize>,
    duality_error: Option<f64>,
    condition_estimate: Option<f64>,
}

fn say(c: &Common, msg: impl AsRef<str>) {
    if !c.quiet {
        println!("{}", msg.as_ref());
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(dir.join(name), contents).map_err(|e| Error::Io(format!("{}: {e}", dir.join(name).display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("summary serializes") + "\n"
}

/// Reads the config and applies command-line overrides.
fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(&c.config).map_err(|e| Error::Io(format!("cannot read {}: {e}", c.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = &c.seed_expr {
        cfg.kappa0_seed = s.clone();
    }
    if let Some(e) = c.epsilon {
        cfg.epsilon = e;
    }
    if let Some(n) = c.electrodes {
        cfg.electrodes = ElectrodeSpec::Count(n);
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn history_csv(records: &[IterationRecord]) -> String {
    let report = RunReport {
        converged: false,
        iterations: records.len(),
        history: records.to_vec(),
        tau: SymMatrix::zeros(0),
        measurement_max: f64::NAN,
        epsilon_requested: f64::NAN,
        epsilon_used: f64::NAN,
        min_sigma: f64::NAN,
        backoffs: Vec::new(),
    };
    report.history_csv()
}

pub fn generate(c: &Common) -> Result<u8> {
    let cfg = load_config(c)?;
    let dir = output_dir(&cfg)?;
    let mut summary = Summary { status: "failed", epsilon_requested: Some(cfg.epsilon), ..Summary::default() };
    let fail = |mut summary: Summary, e: Error| -> Result<u8> {
        summary.status = if matches!(e, Error::MaxBackoffsExceeded(_)) { "diverged" } else { "failed" };
        summary.error = Some(e.name());
        summary.error_message = Some(e.to_string());
        write(&dir, "summary.json", json(&summary))?;
        Err(e)
    };
    say(c, format!("meshing with target h = {}", cfg.target_h));
    let exp = match Experiment::prepare(&cfg) {
        Ok(e) => e,
        Err(e) => return fail(summary, e),
    };
    summary.elements = Some(exp.space.mesh().num_elements());
    summary.duality_error = Some(exp.basis.duality_error());
    summary.condition_estimate = Some(exp.basis.condition_estimate());
    say(
        c,
        format!(
            "{} elements, {} perturbation functions, duality error {:.2e}",
            exp.space.mesh().num_elements(),
            exp.basis.pairs().len(),
            exp.basis.duality_error()
        ),
    );
    let con = exp.construction();
    let mut seen = Vec::new();
    let result = run_algorithm_with(&con, &cfg.run_config(), |r| {
        say(c, format!("iteration {:3}  discrepancy {:.3e}  max|tau| {:.3e}", r.iteration, r.discrepancy, r.tau_max));
        seen.push(*r);
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            write(&dir, "convergence.csv", history_csv(&seen))?;
            return fail(summary, e);
        }
    };
    summary.status = if report.converged { "converged" } else { "not_converged" };
    summary.converged = report.converged;
    summary.iterations = report.iterations;
    summary.epsilon_used = Some(report.epsilon_used);
    summary.measurement_max = Some(report.measurement_max);
    summary.min_sigma = Some(report.min_sigma);
    summary.backoffs = report.backoffs.clone();

    let eps = report.epsilon_used;
    let sigma = con.sigma(&report.tau, eps);
    let kappa = exp.basis.table().extend_by_zero(&con.kappa(&report.tau));
    let kappa0 = exp.basis.table().extend_by_zero(exp.kappa0.values());
    let mesh = exp.space.mesh();
    let cells = |v: &[f64]| element_means(&exp.space, v);
    write(&dir, "sigma_eps.vtk", vtk_cells(mesh, "sigma_eps", &[("sigma_eps", &cells(&sigma))]))?;
    write(&dir, "kappa.vtk", vtk_cells(mesh, "kappa", &[("kappa", &cells(&kappa)), ("kappa0", &cells(&kappa0))]))?;
    write(&dir, "convergence.csv", report.history_csv())?;
    write(&dir, "basis_diagnostics.csv", exp.basis.diagnostics_csv())?;
    let raster = raster_csv(cfg.raster_size, |x| con.sigma_at(&report.tau, eps, x).ok());
    write(&dir, "sigma_raster.csv", raster)?;
    let solution =
        Solution { config: cfg.clone(), tau: report.tau.clone(), epsilon_used: eps, converged: report.converged };
    write(&dir, "solution.json", json(&solution))?;
    write(&dir, "summary.json", json(&summary))?;
    say(
        c,
        format!(
            "{} after {} iterations at epsilon {eps}; max|M| = {:.3e}, min sigma = {:.4}",
            summary.status, report.iterations, report.measurement_max, report.min_sigma
        ),
    );
    Ok(if report.converged { 0 } else { EXIT_DIVERGED })
}

fn load_solution(dir: &Path) -> Result<Solution> {
    let path = dir.join("solution.json");
    let text = fs::read_to_string(&path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PemReport {
    field: &'static str,
    epsilon: f64,
    measurement_max: f64,
    unbalanced_max: f64,
    ratio: f64,
    threshold: f64,
    pass: bool,
    matrix: SymMatrix,
}

pub fn verify_pem(c: &Common, field: Field) -> Result<u8> {
    let cfg = load_config(c)?;
    let dir = PathBuf::from(&cfg.output_dir);
    let sol = load_solution(&dir)?;
    let exp = Experiment::prepare(&sol.config)?;
    let con = exp.construction();
    let run = sol.config.run_config();
    let eps = sol.epsilon_used;
    let n = exp.basis.table().n();
    let zero = SymMatrix::zeros(n);
    let unbalanced = pem_measurement_matrix(&con, &zero, eps, &run)?;
    let (name, m) = match field {
        Field::Solution => ("solution", pem_measurement_matrix(&con, &sol.tau, eps, &run)?),
        Field::Kappa0 => ("kappa0", unbalanced.clone()),
        Field::Zero => ("zero", SymMatrix::zeros(n)),
    };
    let threshold = eps * sol.config.stop_tol * 10.0;
    let report = PemReport {
        field: name,
        epsilon: eps,
        measurement_max: m.max_abs(),
        unbalanced_max: unbalanced.max_abs(),
        ratio: m.max_abs() / unbalanced.max_abs(),
        threshold,
        pass: m.max_abs() <= threshold,
        matrix: m,
    };
    write(&dir, &format!("verify_pem_{name}.json"), json(&report))?;
    println!("max|M| = {:.6e}", report.measurement_max);
    println!("max|M| without correction = {:.6e}", report.unbalanced_max);
    println!("ratio = {:.6e}", report.ratio);
    println!("threshold = {:.6e}", threshold);
    println!("{}", if report.pass { "PASS" } else { "FAIL" });
    Ok(if report.pass { 0 } else { EXIT_DIVERGED })
}

#[derive(Serialize)]
struct CemReport {
    field: &'static str,
    width_scale: f64,
    e_cem: f64,
    per_current: Vec<f64>,
    elements: usize,
}

pub fn validate_cem(c: &Common, field: Field, width_scale: f64) -> Result<u8> {
    let cfg = load_config(c)?;
    if cfg.cem.is_none() {
        return Err(Error::Validation { field: "cem".into(), message: "a [cem] block is required".into() });
    }
    if !(width_scale > 0.0 && width_scale.is_finite()) {
        return Err(Error::Validation { field: "width_scale".into(), message: "must be positive".into() });
    }
    let dir = PathBuf::from(&cfg.output_dir);
    let sol = load_solution(&dir)?;
    let exp = Experiment::prepare(&sol.config)?;
    let con = exp.construction();
    let electrodes = sol.config.cem_electrodes()?.scaled(width_scale);
    let tau = match field {
        Field::Solution => sol.tau.clone(),
        _ => SymMatrix::zeros(exp.basis.table().n()),
    };
    let eps = if field == Field::Zero { 0.0 } else { sol.epsilon_used };
    let rescaled;
    let (space, sigma) = if width_scale == 1.0 {
        (&exp.space, con.sigma(&tau, eps))
    } else {
        let mesh =
            build_disk_mesh(&sol.config.omega, sol.config.target_h, exp.electrodes.angles(), Some(&electrodes.widths))?;
        rescaled = FeSpace::new(Arc::new(mesh))?;
        let sigma = con.sigma_on(&rescaled, &tau, eps)?;
        (&rescaled, sigma)
    };
    let currents = trig_current_basis(exp.electrodes.angles());
    let cmp = e_cem(space, &sigma, &electrodes, &currents)?;
    let name = match field {
        Field::Solution => "solution",
        Field::Kappa0 => "kappa0",
        Field::Zero => "zero",
    };
    write(&dir, "cem_voltages.csv", cmp.voltages_csv())?;
    let report = CemReport {
        field: name,
        width_scale,
        e_cem: cmp.e_cem,
        per_current: cmp.per_current.clone(),
        elements: space.mesh().num_elements(),
    };
    write(&dir, "cem_summary.json", json(&report))?;
    println!("E_CEM = {:.6e}", cmp.e_cem);
    for (j, e) in cmp.per_current.iter().enumerate() {
        println!("current {:2}: {:.6e}", j + 1, e);
    }
    Ok(0)
}

#[derive(Serialize)]
struct MeshInfo {
    nodes: usize,
    vertices: usize,
    elements: usize,
    elements_in_omega: usize,
    curved_elements: usize,
    boundary_edges: usize,
    h_max: f64,
    area: f64,
}

pub fn mesh_info(c: &Common) -> Result<u8> {
    let cfg = load_config(c)?;
    let angles = cfg.electrode_config()?.angles().to_vec();
    let widths = cfg.cem.as_ref().map(|c| vec![c.width]);
    let mesh = build_disk_mesh(&cfg.omega, cfg.target_h, &angles, widths.as_deref())?;
    let ne = mesh.num_elements();
    let inside: Vec<f64> = (0..ne).map(|e| if mesh.tag(e) == Region::InsideOmega { 1.0 } else { 0.0 }).collect();
    let space = FeSpace::new(Arc::new(mesh))?;
    let mesh = space.mesh();
    let info = MeshInfo {
        nodes: mesh.num_nodes(),
        vertices: mesh.num_vertices(),
        elements: ne,
        elements_in_omega: inside.iter().filter(|v| **v == 1.0).count(),
        curved_elements: (0..ne).filter(|&e| mesh.is_curved(e)).count(),
        boundary_edges: mesh.boundary_edges().len(),
        h_max: mesh.h_max(),
        area: space.weights().iter().sum(),
    };
    let dir = output_dir(&cfg)?;
    write(&dir, "mesh.vtk", vtk_cells(mesh, "mesh", &[("inside_omega", &inside)]))?;
    print!("{}", json(&info));
    Ok(0)
}
