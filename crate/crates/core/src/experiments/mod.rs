//! Reproducible experiment runner. Every experiment is a pure function of its
//! [`ExperimentSpec`] and writes CSV artifacts plus a `manifest.json`.

mod bench;
mod overrides;
mod sync_runs;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub use bench::{fusion_bench, BenchConfigResult, BenchPlan, BenchSummary, CONFIGS};
pub use overrides::Overrides;
pub use sync_runs::{
    collect_minmax, collect_timing_errors, run_sweep, sweep_points, MinMaxSummary, SweepKind, SweepResult,
    SyncExperimentConfig, TimingSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TimingHist,
    MinmaxDelay,
    SweepNsigma,
    SweepDrop,
    SweepNodes,
    FusionBench,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::TimingHist,
        ExperimentKind::MinmaxDelay,
        ExperimentKind::SweepNsigma,
        ExperimentKind::SweepDrop,
        ExperimentKind::SweepNodes,
        ExperimentKind::FusionBench,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::TimingHist => "timing_hist",
            ExperimentKind::MinmaxDelay => "minmax_delay",
            ExperimentKind::SweepNsigma => "sweep_nsigma",
            ExperimentKind::SweepDrop => "sweep_drop",
            ExperimentKind::SweepNodes => "sweep_nodes",
            ExperimentKind::FusionBench => "fusion_bench",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    /// Anchors per sweep point, independent runs for timing/min-max, scene
    /// draws for the fusion benchmark.
    pub iterations: usize,
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    pub overrides: BTreeMap<String, String>,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            experiment,
            iterations: default_iterations(experiment),
            seed: 0,
            output_dir: output_dir.into(),
            config: None,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_iterations(mut self, n: usize) -> Self {
        self.iterations = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_config(mut self, path: impl Into<PathBuf>) -> Self {
        self.config = Some(path.into());
        self
    }

    pub fn set(mut self, key: &str, value: impl ToString) -> Self {
        self.overrides.insert(key.to_string(), value.to_string());
        self
    }
}

pub fn default_iterations(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::TimingHist | ExperimentKind::MinmaxDelay => 10_000,
        ExperimentKind::SweepNsigma | ExperimentKind::SweepDrop | ExperimentKind::SweepNodes => 100_000,
        ExperimentKind::FusionBench => 100,
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    spec: &'a ExperimentSpec,
    outputs: Vec<String>,
}

/// Runs one experiment and returns the files it wrote, manifest last.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    if spec.iterations == 0 {
        return Err(Error::config("iterations must be >= 1"));
    }
    let overrides = Overrides::new(spec.overrides.clone());
    // validate everything before touching the filesystem
    let plan = match spec.experiment {
        ExperimentKind::FusionBench => Plan::Bench(bench::BenchPlan::resolve(spec, &overrides)?),
        kind => Plan::Sync(SyncExperimentConfig::resolve(kind, spec.config.as_deref(), &overrides)?),
    };
    overrides.ensure_all_used(spec.experiment.as_str())?;

    std::fs::create_dir_all(&spec.output_dir).map_err(|e| Error::io(&spec.output_dir, e))?;
    let mut written = match plan {
        Plan::Bench(plan) => bench::run(&plan, spec)?,
        Plan::Sync(cfg) => sync_runs::run(spec.experiment, &cfg, spec)?,
    };

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec,
        outputs: written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = spec.output_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

enum Plan {
    Sync(SyncExperimentConfig),
    Bench(bench::BenchPlan),
}

pub(crate) fn write_csv<S: AsRef<str>>(
    dir: &Path,
    name: &str,
    header: &[S],
    rows: &[Vec<crate::csv::Cell>],
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let path = dir.join(name);
    crate::csv::emit_csv(rows, header, &path)?;
    written.push(path);
    Ok(())
}
