//! Command-line driver: construct invisible conductivities, verify them under
//! the point electrode model and validate them under the complete electrode
//! model.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use invisible_eit::Error;

#[derive(Parser)]
#[command(name = "invisible-eit", version, about = "Invisible conductivity perturbations for point-electrode EIT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the fixed-point construction and write fields and histories.
    Generate(Common),
    /// Recompute the point-electrode measurement matrix of a generated field.
    VerifyPem {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "solution")]
        field: Field,
    },
    /// Compare complete-electrode voltages of a generated field against the
    /// unit conductivity.
    ValidateCem {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "solution")]
        field: Field,
        /// Multiplies every electrode width.
        #[arg(long, default_value_t = 1.0)]
        width_scale: f64,
    },
    /// Build the mesh and report its statistics.
    MeshInfo(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `kappa0_seed`.
    #[arg(long)]
    seed_expr: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of electrodes under the default angle rule.
    #[arg(long)]
    electrodes: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

/// Which conductivity a verification command examines.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Field {
    /// The generated `σ^ε`.
    Solution,
    /// `1 + εκ₀`, without the dual-basis correction.
    Kappa0,
    /// The unit conductivity.
    Zero,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Validation { .. }
        | Error::MissingArtifact(_)
        | Error::Io(_)
        | Error::InvalidRunConfig(_)
        | Error::Expression { .. }
        | Error::InvalidOmega(_)
        | Error::OmegaTooCloseToBoundary { .. }
        | Error::InvalidMeshParameters(_)
        | Error::InvalidElectrodes(_)
        | Error::InvalidCemElectrodes(_) => EXIT_CONFIG,
        Error::MaxBackoffsExceeded(_) => EXIT_DIVERGED,
        _ => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(c) => commands::generate(&c),
        Command::VerifyPem { common, field } => commands::verify_pem(&common, field),
        Command::ValidateCem { common, field, width_scale } => commands::validate_cem(&common, field, width_scale),
        Command::MeshInfo(c) => commands::mesh_info(&c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
