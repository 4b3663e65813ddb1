//! The batch pipeline: ingest, preprocess, fit across the `tau` grid, analyse
//! and emit artifacts.
//!
//! Output layout under the output directory:
//!
//! ```text
//! manifest.json
//! profiles.csv  dropped.csv  summary.csv
//! tau-<tau>/components.csv scores.csv labels.csv proportions.csv effects.json model.json
//! synth/spec.json counts.csv truth.csv      (only with a synthetic spec)
//! ```
//!
//! Nothing is written unless ingest and preprocessing succeed. A fit that fails
//! for one `tau` is reported in the manifest and the other levels are still
//! written.

use std::path::PathBuf;

use pec_core::analysis::{
    default_effect_scale, effect_curves, group_by_location, group_by_weekday, label_extremes, membership_proportions,
    summary_table,
};
use pec_core::preprocess::{build_matrix, DropReason, Outcome, Preprocessor, RawCountSeries, SmoothingConfig};
use pec_core::{Deflation, ExpectileLevel, FitOptions, PecModel, ProfileId, ProfileMatrix};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, ArtifactSet, EffectsDoc, FileEntry};
use crate::datagen::{self, SynthSpec};
use crate::error::{Error, Result};
use crate::ingest;

pub const DEFAULT_TAUS: [f64; 11] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// JSON synthetic-data spec, used instead of `inputs`.
    pub synth: Option<PathBuf>,
    /// Not echoed in the manifest so identical runs into different
    /// directories produce identical files.
    #[serde(skip)]
    pub out: PathBuf,
    pub taus: Vec<f64>,
    pub k: usize,
    pub grid_minutes: u32,
    pub zero_run_minutes: usize,
    pub knot_minutes: u32,
    pub ridge: f64,
    pub restarts: usize,
    pub seed: u64,
    pub deflation: Deflation,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        let smoothing = SmoothingConfig::default();
        let fit = FitOptions::default();
        Self {
            inputs: Vec::new(),
            synth: None,
            out: out.into(),
            taus: DEFAULT_TAUS.to_vec(),
            k: 4,
            grid_minutes: smoothing.grid_minutes,
            zero_run_minutes: 360,
            knot_minutes: smoothing.knot_minutes,
            ridge: smoothing.ridge,
            restarts: fit.restarts,
            seed: fit.seed,
            deflation: fit.deflation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (self.inputs.is_empty(), self.synth.is_some()) {
            (true, false) => return bad("no input given; pass --input or --synth".into()),
            (false, true) => return bad("--input and --synth are mutually exclusive".into()),
            _ => {}
        }
        if self.taus.is_empty() {
            return bad("empty tau list".into());
        }
        for (i, &t) in self.taus.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("tau must be in (0, 1), got {t}"));
            }
            if self.taus[..i].contains(&t) {
                return bad(format!("tau {t} given twice"));
            }
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        for (name, m) in [("grid", self.grid_minutes), ("knot", self.knot_minutes)] {
            if m == 0 || 1440 % m != 0 {
                return bad(format!("{name} spacing must divide 1440 minutes, got {m}"));
            }
        }
        let p = (1440 / self.grid_minutes) as usize;
        if self.k > p {
            return bad(format!("K = {} exceeds the {p} grid points", self.k));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge must be non-negative, got {}", self.ridge));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { restarts: self.restarts, seed: self.seed, deflation: self.deflation, ..FitOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub series: usize,
    pub kept: usize,
    pub dropped_zero_run: usize,
    pub dropped_missing: usize,
    pub p: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStatus {
    pub tau: f64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub objectives: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub config: RunConfig,
    pub input: InputSummary,
    pub fits: Vec<FitStatus>,
    /// True when at least one fit failed and its outputs are missing.
    pub partial: bool,
    pub warnings: Vec<String>,
    /// Every other file in the output directory.
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub exit_code: i32,
    pub manifest: Manifest,
}

pub const MANIFEST: &str = "manifest.json";

pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let mut files = ArtifactSet::new();

    let series = match &config.synth {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let spec = SynthSpec::from_json(&text)?;
            let data = datagen::generate(&spec)?;
            files.add_json("synth/spec.json", &spec)?;
            let mut counts = Vec::new();
            ingest::write_counts(&mut counts, &data.series)?;
            files.add_raw("synth/counts.csv", counts, Some(data.series.len() * 1440));
            let mut truth = Vec::new();
            datagen::write_truth(&mut truth, &data.truth)?;
            files.add_raw("synth/truth.csv", truth, Some(data.truth.len()));
            data.series
        }
        None => {
            let mut all = Vec::new();
            for path in &config.inputs {
                all.extend(ingest::read_counts_path(path)?);
            }
            all
        }
    };
    if series.is_empty() {
        return Err(Error::NoData("input contains no detector-days".into()));
    }

    let (q, dropped, kept_series) = preprocess(config, &series)?;
    let input = InputSummary {
        series: series.len(),
        kept: q.n(),
        dropped_zero_run: dropped.iter().filter(|d| matches!(d.1, DropReason::ZeroRun { .. })).count(),
        dropped_missing: dropped.iter().filter(|d| matches!(d.1, DropReason::TooManyMissing { .. })).count(),
        p: q.p(),
        n: q.n(),
    };
    let mut warnings = Vec::new();
    if !dropped.is_empty() {
        warnings.push(format!("{} of {} detector-days dropped", dropped.len(), series.len()));
    }

    files.add_csv("profiles.csv", artifacts::profiles_csv(&q)?);
    files.add_csv("dropped.csv", artifacts::dropped_csv(&dropped)?);
    let interval = std::num::NonZeroU32::new(60).expect("non-zero");
    files.add_csv("summary.csv", artifacts::summary_csv(&summary_table(&kept_series, interval))?);

    let results = fit_all(config, &q);
    let mut fits = Vec::with_capacity(results.len());
    let mut exit_code = 0;
    for (&tau, result) in config.taus.iter().zip(results) {
        match result {
            Ok(model) => {
                let status = write_level(&mut files, &model)?;
                fits.push(status);
            }
            Err(e) => {
                let err = Error::Numeric(e);
                exit_code = exit_code.max(err.exit_code());
                warnings.push(format!("fit at tau {tau} failed: {err}"));
                fits.push(FitStatus { tau, ok: false, error: Some(err.to_string()), objectives: vec![], warnings: vec![] });
            }
        }
    }
    for f in &fits {
        warnings.extend(f.warnings.iter().map(|w| format!("tau {}: {w}", f.tau)));
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: pec_core::VERSION.to_string(),
        config: config.clone(),
        input,
        partial: fits.iter().any(|f| !f.ok),
        fits,
        warnings,
        files: files.entries(),
    };
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    files.add_json(MANIFEST, &manifest)?;
    std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    files.write_all(&config.out)?;
    Ok(RunReport { exit_code, manifest })
}

type Preprocessed = (ProfileMatrix, Vec<(ProfileId, DropReason)>, Vec<RawCountSeries>);

fn preprocess(config: &RunConfig, series: &[RawCountSeries]) -> Result<Preprocessed> {
    let smoothing = SmoothingConfig {
        grid_minutes: config.grid_minutes,
        knot_minutes: config.knot_minutes,
        ridge: config.ridge,
        ..SmoothingConfig::default()
    };
    let pre = Preprocessor::new(smoothing, config.zero_run_minutes).map_err(|e| Error::Config(e.to_string()))?;
    let mut profiles = Vec::new();
    let mut dropped = Vec::new();
    let mut kept = Vec::new();
    for s in series {
        match pre.process(s)? {
            Outcome::Kept(p) => {
                profiles.push(p);
                kept.push(s.clone());
            }
            Outcome::Dropped(reason) => dropped.push((s.id(), reason)),
        }
    }
    if profiles.len() < 2 {
        return Err(Error::NoData(format!(
            "{} of {} detector-days survive preprocessing; at least 2 are needed",
            profiles.len(),
            series.len()
        )));
    }
    Ok((build_matrix(&profiles)?, dropped, kept))
}

/// One fit per `tau`, run concurrently; results come back in `tau` order.
fn fit_all(config: &RunConfig, q: &ProfileMatrix) -> Vec<pec_core::Result<PecModel>> {
    let opts = config.fit_options();
    std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .taus
            .iter()
            .map(|&tau| {
                scope.spawn(move || {
                    let level = ExpectileLevel::new(tau)?;
                    pec_core::fit(q, level, config.k, &opts)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fit thread panicked")).collect()
    })
}

fn level_dir(tau: f64) -> String {
    format!("tau-{tau}")
}

fn write_level(files: &mut ArtifactSet, model: &PecModel) -> Result<FitStatus> {
    let tau = model.level.tau();
    let dir = level_dir(tau);
    let labels = label_extremes(model);
    let by_location = membership_proportions(&labels, &group_by_location(&model.column_ids))?;
    let by_weekday = membership_proportions(&labels, &group_by_weekday(&model.column_ids))?;
    let mut effects = Vec::with_capacity(model.k());
    for k in 1..=model.k() {
        effects.push(effect_curves(model, k, default_effect_scale(model, k)?)?);
    }

    files.add_csv(format!("{dir}/components.csv"), artifacts::components_csv(model)?);
    files.add_csv(format!("{dir}/scores.csv"), artifacts::scores_csv(model)?);
    files.add_csv(format!("{dir}/labels.csv"), artifacts::labels_csv(&labels)?);
    files.add_csv(format!("{dir}/proportions.csv"), artifacts::proportions_csv(&by_location, &by_weekday)?);
    files.add_json(format!("{dir}/effects.json"), &EffectsDoc { tau, components: &effects })?;
    files.add_json(format!("{dir}/model.json"), model)?;

    let warnings = model
        .components
        .iter()
        .filter(|c| c.runs_converged < c.runs)
        .map(|c| format!("component {}: {} of {} starts did not converge", c.order, c.runs - c.runs_converged, c.runs))
        .collect();
    Ok(FitStatus {
        tau,
        ok: true,
        error: None,
        objectives: model.components.iter().map(|c| c.objective).collect(),
        warnings,
    })
}
