use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pec_core::Deflation;
use pec_traffic::run::{run, RunConfig, MANIFEST};

/// Principal expectile components of daily traffic-flow profiles.
///
/// Reads per-minute detector counts (`date,location,minute,count`), smooths
/// each detector-day, fits components for every expectile level and writes
/// CSV/JSON artifacts plus a hashed manifest to the output directory.
///
/// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
/// 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "pec-traffic", version)]
struct Cli {
    /// Count CSV; repeat for several files.
    #[arg(long = "input", value_name = "CSV", conflicts_with = "synth")]
    inputs: Vec<PathBuf>,

    /// Generate synthetic data from a JSON spec instead of reading input.
    #[arg(long, value_name = "SPECFILE")]
    synth: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Expectile level in (0, 1); repeat for several. Default: 0.05, 0.1, 0.2, ..., 0.9, 0.95.
    #[arg(long = "tau", value_name = "TAU")]
    taus: Vec<f64>,

    /// Number of components.
    #[arg(long, default_value_t = 4)]
    k: usize,

    /// Output grid spacing in minutes.
    #[arg(long = "grid-min", default_value_t = 10)]
    grid_min: u32,

    /// Drop detector-days with a zero run longer than this many minutes.
    #[arg(long = "zero-run-min", default_value_t = 360)]
    zero_run_min: usize,

    /// Spline knot spacing in minutes.
    #[arg(long = "knot-min", default_value_t = 60)]
    knot_min: u32,

    /// Smoothing ridge, relative to the mean diagonal of the Gram matrix.
    #[arg(long, default_value_t = 1e-6)]
    ridge: f64,

    /// Random restarts per component, on top of the classical-PCA start.
    #[arg(long, default_value_t = 8)]
    restarts: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Deflation between components: `paper` (shift by the expectile) or `projection-only`.
    #[arg(long, default_value = "paper")]
    deflation: Deflation,
}

impl Cli {
    fn into_config(self) -> RunConfig {
        let mut c = RunConfig::new(self.out);
        c.inputs = self.inputs;
        c.synth = self.synth;
        if !self.taus.is_empty() {
            c.taus = self.taus;
        }
        c.k = self.k;
        c.grid_minutes = self.grid_min;
        c.zero_run_minutes = self.zero_run_min;
        c.knot_minutes = self.knot_min;
        c.ridge = self.ridge;
        c.restarts = self.restarts;
        c.seed = self.seed;
        c.deflation = self.deflation;
        c
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = cli.into_config();
    match run(&config) {
        Ok(report) => {
            let m = &report.manifest;
            eprintln!(
                "{} profiles ({} dropped), {} of {} fits ok; wrote {} files and {} to {}",
                m.input.kept,
                m.input.series - m.input.kept,
                m.fits.iter().filter(|f| f.ok).count(),
                m.fits.len(),
                m.files.len(),
                MANIFEST,
                config.out.display()
            );
            ExitCode::from(report.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
