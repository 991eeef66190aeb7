//! Experiment configuration files and the setup they describe.
//!
//! A configuration is a TOML document. Only `epsilon` is required:
//!
//! ```toml
//! electrodes = 4          # θ_j = 1° + j·360°/4
//! epsilon = 6.0
//! kappa0_seed = "1"       # expression in x, y or a built-in name
//! target_h = 0.04
//!
//! [omega]
//! shape = "concentric_disk"
//! radius = 0.5
//!
//! [cem]                   # optional
//! width = 0.0981747704    # arc length, π/32 by default
//! impedance = 0.01
//! ```
//!
//! `electrodes` also accepts `{ degrees = [...] }` or
//! `{ count = 8, offset_deg = 1.0 }`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::{build_dual_basis, project_kappa0, Kappa0, PerturbationBasis, PsiTable};
use crate::cem::{CemElectrodes, DEFAULT_IMPEDANCE, DEFAULT_WIDTH};
use crate::error::{Error, Result};
use crate::expr::{builtin_seed, Expr};
use crate::fem::FeSpace;
use crate::mesh::{build_disk_mesh, OmegaSpec};
use crate::potentials::{DiskPotentials, ElectrodeConfig, ReferencePotentials};
use crate::solver::{Construction, RunConfig, SymMatrix};

/// Offset of the default angle rule, in degrees.
pub const DEFAULT_OFFSET_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ElectrodeSpec {
    Count(usize),
    Rule { count: usize, offset_deg: f64 },
    Degrees { degrees: Vec<f64> },
}

impl ElectrodeSpec {
    pub fn build(&self) -> Result<ElectrodeConfig> {
        match self {
            ElectrodeSpec::Count(n) => ElectrodeConfig::equispaced(*n, DEFAULT_OFFSET_DEG),
            ElectrodeSpec::Rule { count, offset_deg } => ElectrodeConfig::equispaced(*count, *offset_deg),
            ElectrodeSpec::Degrees { degrees } => ElectrodeConfig::from_degrees(degrees),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CemSpec {
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_impedance")]
    pub impedance: f64,
}

fn default_width() -> f64 {
    DEFAULT_WIDTH
}

fn default_impedance() -> f64 {
    DEFAULT_IMPEDANCE
}

fn default_electrodes() -> ElectrodeSpec {
    ElectrodeSpec::Count(4)
}

fn default_omega() -> OmegaSpec {
    OmegaSpec::concentric(0.5)
}

fn default_seed() -> String {
    "1".into()
}

fn default_h() -> f64 {
    0.04
}

fn default_output() -> String {
    "out".into()
}

fn default_raster() -> usize {
    129
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_electrodes")]
    pub electrodes: ElectrodeSpec,
    #[serde(default = "default_omega")]
    pub omega: OmegaSpec,
    pub epsilon: f64,
    #[serde(default = "default_seed")]
    pub kappa0_seed: String,
    #[serde(default = "default_h")]
    pub target_h: f64,
    #[serde(default)]
    pub tau0: Option<SymMatrix>,
    #[serde(default = "stop_tol")]
    pub stop_tol: f64,
    #[serde(default = "max_iter")]
    pub max_iter: usize,
    #[serde(default = "gamma_max")]
    pub gamma_max: f64,
    #[serde(default = "epsilon_backoff")]
    pub epsilon_backoff: f64,
    #[serde(default = "max_backoffs")]
    pub max_backoffs: usize,
    #[serde(default = "min_sigma")]
    pub min_sigma: f64,
    #[serde(default)]
    pub cem: Option<CemSpec>,
    #[serde(default = "default_output")]
    pub output_dir: String,
    /// Points per side of the raster export.
    #[serde(default = "default_raster")]
    pub raster_size: usize,
}

fn stop_tol() -> f64 {
    RunConfig::default().stop_tol
}

fn max_iter() -> usize {
    RunConfig::default().max_iter
}

fn gamma_max() -> f64 {
    RunConfig::default().gamma_max
}

fn epsilon_backoff() -> f64 {
    RunConfig::default().epsilon_backoff
}

fn max_backoffs() -> usize {
    RunConfig::default().max_backoffs
}

fn min_sigma() -> f64 {
    RunConfig::default().min_sigma
}

/// One-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// First backquoted identifier of a serde message, naming the offending field.
fn field_of(message: &str) -> String {
    message.split('`').nth(1).unwrap_or("config").to_string()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse { line: 1, column: 1, message: "empty configuration".into() });
        }
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
            Error::Parse { line, column, message: e.message().trim().to_string() }
        })?;
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| {
            let message = e.message().trim().to_string();
            Error::Validation { field: field_of(&message), message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn minimal(electrodes: usize, epsilon: f64) -> Self {
        Self::parse(&format!("electrodes = {electrodes}\nepsilon = {epsilon:?}\n")).expect("valid minimal config")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Validation { field: field.into(), message });
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", format!("must be positive, got {}", self.epsilon));
        }
        if !(self.target_h > 0.0 && self.target_h < 1.0) {
            return bad("target_h", format!("must lie in (0, 1), got {}", self.target_h));
        }
        if self.raster_size < 2 {
            return bad("raster_size", "must be at least 2".into());
        }
        let electrodes = self
            .electrodes
            .build()
            .map_err(|e| Error::Validation { field: "electrodes".into(), message: e.to_string() })?;
        if electrodes.count() < 2 {
            return bad("electrodes", "at least two electrodes are required".into());
        }
        self.omega.validate().map_err(|e| Error::Validation { field: "omega".into(), message: e.to_string() })?;
        self.seed_expr().map_err(|e| Error::Validation { field: "kappa0_seed".into(), message: e.to_string() })?;
        self.run_config()
            .validate(electrodes.potential_count())
            .map_err(|e| Error::Validation { field: "run".into(), message: e.to_string() })?;
        if self.cem.is_some() {
            self.cem_electrodes().map_err(|e| Error::Validation { field: "cem".into(), message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn electrode_config(&self) -> Result<ElectrodeConfig> {
        self.electrodes.build()
    }

    /// The seed as an expression, resolving built-in names.
    pub fn seed_expr(&self) -> Result<Expr> {
        Expr::parse(builtin_seed(self.kappa0_seed.trim()).unwrap_or(&self.kappa0_seed))
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            epsilon: self.epsilon,
            tau0: self.tau0.clone(),
            stop_tol: self.stop_tol,
            max_iter: self.max_iter,
            gamma_max: self.gamma_max,
            epsilon_backoff: self.epsilon_backoff,
            max_backoffs: self.max_backoffs,
            min_sigma: self.min_sigma,
            ..RunConfig::default()
        }
    }

    /// The CEM electrodes at the PEM electrode centres; defaults apply
    /// without a `[cem]` block.
    pub fn cem_electrodes(&self) -> Result<CemElectrodes> {
        let spec = self.cem.clone().unwrap_or(CemSpec { width: DEFAULT_WIDTH, impedance: DEFAULT_IMPEDANCE });
        CemElectrodes::uniform(self.electrode_config()?.angles(), spec.width, spec.impedance)
    }
}

/// Mesh, dual basis and `κ₀` for a configuration.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub electrodes: ElectrodeConfig,
    pub space: FeSpace,
    pub basis: PerturbationBasis,
    pub kappa0: Kappa0,
}

impl Experiment {
    /// Meshes with electrode arcs resolved whenever a `[cem]` block is present.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let electrodes = config.electrode_config()?;
        let widths = config.cem.as_ref().map(|c| vec![c.width]);
        let mesh = build_disk_mesh(&config.omega, config.target_h, electrodes.angles(), widths.as_deref())?;
        let space = FeSpace::new(Arc::new(mesh))?;
        let potentials: Arc<dyn ReferencePotentials> = Arc::new(DiskPotentials::new(electrodes.clone()));
        let basis = build_dual_basis(PsiTable::new(&space, potentials)?)?;
        let expr = config.seed_expr()?;
        let kappa0 = project_kappa0(&basis, Arc::new(move |x| expr.eval(x[0], x[1])))?;
        Ok(Self { config: config.clone(), electrodes, space, basis, kappa0 })
    }

    pub fn construction(&self) -> Construction<'_> {
        Construction { space: &self.space, basis: &self.basis, kappa0: &self.kappa0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_config_is_the_four_electrode_setup() {
        let c = ExperimentConfig::parse("electrodes = 4\nepsilon = 6.0\n").unwrap();
        let deg: Vec<f64> = c.electrode_config().unwrap().angles().iter().map(|a| a.to_degrees()).collect();
        for (a, b) in deg.iter().zip([1.0, 91.0, 181.0, 271.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(c.omega, OmegaSpec::concentric(0.5));
        assert_eq!(c.stop_tol, 1e-8);
        assert_eq!(c.tau0, None);
        assert_eq!(c.seed_expr().unwrap().eval(0.3, 0.2), 1.0);
        let e = c.cem_electrodes().unwrap();
        assert_eq!(e.widths[0], std::f64::consts::PI / 32.0);
        assert_eq!(e.impedances[0], 0.01);
        assert_eq!(ExperimentConfig::minimal(4, 6.0), c);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
electrodes = { degrees = [0.0, 45.0, 180.0] }
epsilon = 0.25
kappa0_seed = "affine"
target_h = 0.1
max_backoffs = 0

[omega]
shape = "annulus_sector"
r_in = 0.3
r_out = 0.8
angle_span = 3.0

[cem]
impedance = 0.02
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.seed_expr().unwrap().eval(0.5, 0.5), 2.0);
        assert_eq!(c.cem.as_ref().unwrap().width, DEFAULT_WIDTH);
        assert_eq!(c.run_config().max_backoffs, 0);
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
        let r = ExperimentConfig::parse("electrodes = { count = 6, offset_deg = 0.0 }\nepsilon = 1.0").unwrap();
        assert_eq!(r.electrode_config().unwrap().count(), 6);
    }

    #[test]
    fn errors_are_classified() {
        assert!(matches!(ExperimentConfig::parse(""), Err(Error::Parse { line: 1, column: 1, .. })));
        match ExperimentConfig::parse("epsilon = 1.0\nelectrodes = = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let field = |text: &str| match ExperimentConfig::parse(text) {
            Err(Error::Validation { field, .. }) => field,
            other => panic!("{text}: {other:?}"),
        };
        assert_eq!(field("epsilon = -1"), "epsilon");
        assert_eq!(field("electrodes = 4"), "epsilon");
        assert_eq!(field("epsilon = 1\nkappa0_seed = \"x +\""), "kappa0_seed");
        assert_eq!(field("epsilon = 1\nbogus = 2"), "bogus");
        assert_eq!(field("epsilon = 1\nelectrodes = 1"), "electrodes");
        assert_eq!(field("epsilon = 1\n[omega]\nshape = \"concentric_disk\"\nradius = 1.2"), "omega");
        assert_eq!(field("epsilon = 1\nelectrodes = 64\n[cem]\nwidth = 0.2"), "cem");
    }

    #[test]
    fn line_columns_are_one_based() {
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
        assert_eq!(line_column("ab", 0), (1, 1));
    }

    #[test]
    fn experiment_prepares_consistent_objects() {
        let c = ExperimentConfig::parse("electrodes = 4\nepsilon = 1.0\ntarget_h = 0.15\n[cem]\n").unwrap();
        let e = Experiment::prepare(&c).unwrap();
        assert_eq!(e.basis.table().n(), 3);
        assert!(e.basis.duality_error() < 1e-9);
        assert!(crate::cem::CemSystem::new(&e.space, &c.cem_electrodes().unwrap()).is_ok());
    }

    proptest! {
        #[test]
        fn epsilon_validation_matches_sign(eps in -10.0..10.0f64) {
            let r = ExperimentConfig::parse(&format!("epsilon = {eps:?}"));
            prop_assert_eq!(r.is_ok(), eps > 0.0);
        }
    }
}
