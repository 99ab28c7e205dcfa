//! `dipolar`: coupling matrices, spectra, trajectories, mode simulations and
//! self-checks for N atoms sharing one excitation.

mod commands;
mod error;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dipolar_core::coupling::GVariant;
use dipolar_core::microsim::Sector;
use dipolar_core::pv::PvQuadratureSpec;
use dipolar_core::verify::Suite;
use dipolar_core::LengthUnit;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Parser, Serialize)]
#[command(name = "dipolar", version, about = "Collective decay and dipole-dipole shifts of J=0 -> J=1 atoms")]
pub struct Cli {
    /// Output directory for CSV and metadata files.
    #[arg(long, global = true, env = "DIPOLAR_OUT_DIR", default_value = "dipolar-out")]
    pub out_dir: PathBuf,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Length unit of the atom positions, overriding the file's `length_unit`.
    #[arg(long, global = true, value_parser = parse_unit)]
    pub units: Option<LengthUnit>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Write the b and g coupling matrices.
    Couplings {
        ensemble: PathBuf,
        #[arg(long, default_value = "closed", value_parser = parse_variant)]
        variant: GVariant,
        /// Two variants, e.g. `extended,full_numeric`; writes both g and their difference.
        #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
        compare: Option<Vec<GVariant>>,
        #[command(flatten)]
        quadrature: QuadratureArgs,
    },
    /// Eigenmodes of the effective generator, sorted by decay rate.
    Spectrum {
        ensemble: PathBuf,
        #[arg(long, default_value = "closed", value_parser = parse_variant)]
        variant: GVariant,
        #[command(flatten)]
        quadrature: QuadratureArgs,
    },
    /// Integrate the effective dynamics from an initial state.
    Evolve {
        ensemble: PathBuf,
        #[arg(long, default_value = "closed", value_parser = parse_variant)]
        variant: GVariant,
        /// `single:l,eta`, `symmetric:eta`, `alternating:eta` or comma-separated
        /// channel weights (`re` or `re:im`).
        #[arg(long)]
        initial: String,
        #[arg(long)]
        t_final: f64,
        #[arg(long, default_value_t = 0.01)]
        dt_max: f64,
        #[command(flatten)]
        quadrature: QuadratureArgs,
    },
    /// Discretized-mode wavefunction simulation with a rate and shift fit.
    Microsim {
        ensemble: PathBuf,
        #[arg(long, default_value = "rwa", value_parser = parse_sector)]
        sector: Sector,
        /// Band half-width around omega0 (rwa) or upper frequency (full), in units of Gamma.
        #[arg(long, default_value_t = 50.0)]
        band_halfwidth: f64,
        #[arg(long, default_value_t = 400)]
        n_omega: usize,
        #[arg(long, default_value_t = 17)]
        angular_order: usize,
        #[arg(long, default_value_t = 3.0)]
        t_final: f64,
        #[arg(long, default_value = "symmetric:0")]
        initial: String,
        /// Start of the fit window; defaults to t_final / 6.
        #[arg(long)]
        fit_start: Option<f64>,
    },
    /// Run self-check suites and write a pass/fail report.
    Verify {
        /// Suites to run (default: all).
        #[arg(long, value_delimiter = ',', value_parser = parse_suite)]
        suite: Vec<Suite>,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuadratureArgs {
    /// Frequency cutoff in units of omega0.
    #[arg(long, default_value_t = 40.0)]
    pub cutoff: f64,
    /// Regulator widths, strictly decreasing, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0.04,0.02,0.01")]
    pub eps_seq: Vec<f64>,
}

impl QuadratureArgs {
    pub fn spec(&self) -> Result<PvQuadratureSpec, CliError> {
        let spec = PvQuadratureSpec {
            cutoff: self.cutoff,
            epsilon_sequence: self.eps_seq.clone(),
            ..Default::default()
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_variant(s: &str) -> Result<GVariant, dipolar_core::Error> {
    s.parse()
}

fn parse_sector(s: &str) -> Result<Sector, dipolar_core::Error> {
    s.parse()
}

fn parse_suite(s: &str) -> Result<Suite, dipolar_core::Error> {
    s.parse()
}

fn parse_unit(s: &str) -> Result<LengthUnit, String> {
    match s {
        "inverse_k0" => Ok(LengthUnit::InverseK0),
        "wavelength" => Ok(LengthUnit::Wavelength),
        _ => Err(format!("unknown unit '{s}' (expected inverse_k0 or wavelength)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
