//! Synchronization experiments: timing errors, min-max delay and the three
//! full-match / reaction-time sweeps.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use super::{write_csv, ExperimentKind, ExperimentSpec, Overrides};
use crate::csv::{Cell, BATCH_HEADER, ESTIMATE_HEADER, EVENT_LOG_HEADER, HISTOGRAM_HEADER};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, LatencyEstimate};
use crate::rng::derive_seed;
use crate::sim::{run_simulation, EventLog, SimConfig, TriggerMode};
use crate::stats::{ks_uniform, normal_cdf, percentile_sorted, Histogram, SampleStats};
use crate::sync::{
    batch_rows, estimate_rows, full_match_rate, min_max_delay_from_log, reaction_time_stats, timing_errors,
    AnchorBatch, SchedulerConfig, SchedulerMode, SyncScheduler,
};

#[derive(Debug, Deserialize)]
struct SyncFile {
    #[serde(flatten)]
    sim: SimConfig,
    scheduler: Option<SchedulerConfig>,
    estimator: Option<EstimatorConfig>,
}

/// Fully resolved parameters of a synchronization experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncExperimentConfig {
    pub sim: SimConfig,
    pub scheduler: SchedulerConfig,
    pub estimator: EstimatorConfig,
    /// Anchors simulated per independent run (timing_hist, minmax_delay).
    pub anchors_per_run: usize,
    /// Also write per-anchor batch CSVs for each sweep point.
    pub emit_batches: bool,
    pub hist_bin_ms: f64,
}

impl SyncExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let sweep = matches!(
            kind,
            ExperimentKind::SweepNsigma | ExperimentKind::SweepDrop | ExperimentKind::SweepNodes
        );
        let mut sim = SimConfig::default();
        if kind == ExperimentKind::SweepNodes {
            sim.node_profiles.iter_mut().for_each(|p| p.abnormal_prob = 0.01);
        }
        SyncExperimentConfig {
            sim,
            scheduler: SchedulerConfig {
                oracle_estimates: sweep,
                ..SchedulerConfig::default()
            },
            estimator: EstimatorConfig::default(),
            anchors_per_run: 10,
            emit_batches: false,
            hist_bin_ms: 1.0,
        }
    }

    pub fn resolve(kind: ExperimentKind, config: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = Self::defaults(kind);
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: SyncFile = toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            cfg.sim = file.sim;
            if let Some(s) = file.scheduler {
                cfg.scheduler = s;
            }
            if let Some(e) = file.estimator {
                cfg.estimator = e;
            }
        }

        let sim = &mut cfg.sim;
        overrides.apply("num_nodes", &mut sim.num_nodes)?;
        overrides.apply("anchor_interval", &mut sim.anchor_interval)?;
        overrides.apply("trigger_mode", &mut sim.trigger_mode)?;
        overrides.apply("trigger_jitter_sigma", &mut sim.trigger_jitter_sigma)?;
        for key in [
            "normal_mu",
            "normal_sigma",
            "abnormal_mu",
            "abnormal_sigma",
            "abnormal_prob",
            "loss_prob",
        ] {
            if let Some(v) = overrides.get::<f64>(key)? {
                for p in &mut sim.node_profiles {
                    match key {
                        "normal_mu" => p.normal_mu = v,
                        "normal_sigma" => p.normal_sigma = v,
                        "abnormal_mu" => p.abnormal_mu = v,
                        "abnormal_sigma" => p.abnormal_sigma = v,
                        "abnormal_prob" => p.abnormal_prob = v,
                        _ => p.loss_prob = v,
                    }
                }
            }
        }
        overrides.apply("n_sigma", &mut cfg.scheduler.n_sigma)?;
        overrides.apply("oracle_estimates", &mut cfg.scheduler.oracle_estimates)?;
        let est = &mut cfg.estimator;
        overrides.apply("window_size", &mut est.window_size)?;
        overrides.apply("bootstrap_min", &mut est.bootstrap_min)?;
        overrides.apply("prior_mu", &mut est.prior_mu)?;
        overrides.apply("prior_sigma", &mut est.prior_sigma)?;
        overrides.apply("outlier_k", &mut est.outlier_k)?;
        overrides.apply("sigma_floor", &mut est.sigma_floor)?;
        overrides.apply("anchors_per_run", &mut cfg.anchors_per_run)?;
        overrides.apply("emit_batches", &mut cfg.emit_batches)?;
        overrides.apply("hist_bin_ms", &mut cfg.hist_bin_ms)?;

        // duration is derived from iterations; make the template valid
        cfg.sim.duration = cfg.sim.duration.max(cfg.sim.anchor_interval);
        cfg.sim.validate()?;
        cfg.scheduler.validate()?;
        cfg.estimator.validate()?;
        if cfg.anchors_per_run < 2 {
            return Err(Error::config("anchors_per_run must be >= 2"));
        }
        if !(cfg.hist_bin_ms > 0.0) {
            return Err(Error::config("hist_bin_ms must be > 0"));
        }
        Ok(cfg)
    }

    fn sim_with_anchors(&self, anchors: usize, seed: u64) -> SimConfig {
        SimConfig {
            duration: (anchors.max(2) - 1) as f64 * self.sim.anchor_interval,
            seed,
            ..self.sim.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    NSigma,
    DropRate,
    NodeCount,
}

impl SweepKind {
    fn from_experiment(kind: ExperimentKind) -> Option<Self> {
        match kind {
            ExperimentKind::SweepNsigma => Some(SweepKind::NSigma),
            ExperimentKind::SweepDrop => Some(SweepKind::DropRate),
            ExperimentKind::SweepNodes => Some(SweepKind::NodeCount),
            _ => None,
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            SweepKind::NSigma => "n_sigma",
            SweepKind::DropRate => "drop_rate",
            SweepKind::NodeCount => "num_nodes",
        }
    }
}

pub fn sweep_points(kind: SweepKind) -> Vec<f64> {
    match kind {
        SweepKind::NSigma => vec![2.0, 3.0, 4.0, 5.0, 6.0],
        SweepKind::DropRate => (0..=5).map(|i| i as f64 / 100.0).collect(),
        SweepKind::NodeCount => (4..=14).map(f64::from).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: f64,
    pub full_match_rate: f64,
    /// Closed-form reference for `full_match_rate`.
    pub theoretical: f64,
    pub reaction: SampleStats,
    /// Largest deadline offset from its anchor.
    pub deadline_max: f64,
    /// Every adaptive trigger happened at or before its deadline.
    pub bounded: bool,
    pub naive_full_match_rate: f64,
    pub naive_reaction: SampleStats,
    pub estimates: Vec<LatencyEstimate>,
    pub batches: Option<Vec<AnchorBatch>>,
}

const SWEEP_TAIL: [&str; 12] = [
    "full_match_rate",
    "theoretical",
    "reaction_mean_ms",
    "reaction_p50_ms",
    "reaction_p99_ms",
    "reaction_max_ms",
    "deadline_max_ms",
    "bounded",
    "naive_full_match_rate",
    "naive_reaction_mean_ms",
    "naive_reaction_p99_ms",
    "naive_reaction_max_ms",
];

impl SweepResult {
    fn row(&self) -> Vec<Cell> {
        vec![
            self.parameter.into(),
            self.full_match_rate.into(),
            self.theoretical.into(),
            self.reaction.mean.into(),
            self.reaction.p50.into(),
            self.reaction.p99.into(),
            self.reaction.max.into(),
            self.deadline_max.into(),
            self.bounded.into(),
            self.naive_full_match_rate.into(),
            self.naive_reaction.mean.into(),
            self.naive_reaction.p99.into(),
            self.naive_reaction.max.into(),
        ]
    }
}

fn point_config(kind: SweepKind, base: &SyncExperimentConfig, value: f64) -> SyncExperimentConfig {
    let mut cfg = base.clone();
    match kind {
        SweepKind::NSigma => cfg.scheduler.n_sigma = value,
        SweepKind::DropRate => cfg.sim.node_profiles.iter_mut().for_each(|p| p.abnormal_prob = value),
        SweepKind::NodeCount => {
            cfg.sim.num_nodes = value as usize;
            if cfg.sim.node_profiles.len() > 1 {
                // keep one shared profile so any node count is valid
                cfg.sim.node_profiles.truncate(1);
            }
        }
    }
    cfg
}

fn theoretical(kind: SweepKind, cfg: &SyncExperimentConfig) -> f64 {
    let n = cfg.sim.num_nodes as i32;
    match kind {
        SweepKind::NSigma => normal_cdf(cfg.scheduler.n_sigma).powi(n),
        SweepKind::DropRate | SweepKind::NodeCount => (0..cfg.sim.num_nodes)
            .map(|i| 1.0 - cfg.sim.profile(i).abnormal_prob)
            .product(),
    }
}

fn run_point(
    kind: SweepKind,
    base: &SyncExperimentConfig,
    value: f64,
    anchors: usize,
    seed: u64,
) -> Result<SweepResult> {
    let cfg = point_config(kind, base, value);
    let sim = cfg.sim_with_anchors(anchors, seed);
    let log = run_simulation(&sim)?;

    let adaptive_cfg = SchedulerConfig {
        mode: SchedulerMode::Adaptive,
        ..cfg.scheduler.clone()
    };
    let mut adaptive = SyncScheduler::for_run(adaptive_cfg, cfg.estimator.clone(), &sim, &log)?;
    let batches = adaptive.run(&log)?;

    let naive_cfg = SchedulerConfig {
        mode: SchedulerMode::NaiveWaitAll,
        ..cfg.scheduler.clone()
    };
    let naive = SyncScheduler::for_run(naive_cfg, cfg.estimator.clone(), &sim, &log)?.run(&log)?;

    Ok(SweepResult {
        parameter: value,
        full_match_rate: full_match_rate(&batches)?,
        theoretical: theoretical(kind, &cfg),
        reaction: reaction_time_stats(&batches)?,
        deadline_max: batches
            .iter()
            .map(|b| b.deadline - b.anchor_time)
            .fold(f64::NEG_INFINITY, f64::max),
        bounded: batches.iter().all(|b| b.trigger_time <= b.deadline),
        naive_full_match_rate: full_match_rate(&naive)?,
        naive_reaction: reaction_time_stats(&naive)?,
        estimates: adaptive.current_estimates(),
        batches: cfg.emit_batches.then_some(batches),
    })
}

/// Runs every sweep point concurrently; rows come back in parameter order.
pub fn run_sweep(kind: SweepKind, cfg: &SyncExperimentConfig, anchors: usize, seed: u64) -> Result<Vec<SweepResult>> {
    sweep_points(kind)
        .into_par_iter()
        .map(|v| run_point(kind, cfg, v, anchors, seed))
        .collect()
}

fn mode_name(mode: TriggerMode) -> &'static str {
    match mode {
        TriggerMode::Synchronized => "synchronized",
        TriggerMode::NaiveAsync => "naive_async",
    }
}

const MODES: [TriggerMode; 2] = [TriggerMode::Synchronized, TriggerMode::NaiveAsync];

fn run_logs<T, F>(cfg: &SyncExperimentConfig, mode: TriggerMode, runs: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&EventLog) -> T + Sync,
{
    let mut template = cfg.clone();
    template.sim.trigger_mode = mode;
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let sim = template.sim_with_anchors(cfg.anchors_per_run, derive_seed(seed, &[run as u64]));
            run_simulation(&sim).map(|log| f(&log))
        })
        .collect()
}

/// Timing errors from `runs` independent runs, in run order.
pub fn collect_timing_errors(
    cfg: &SyncExperimentConfig,
    mode: TriggerMode,
    runs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(run_logs(cfg, mode, runs, seed, timing_errors)?.concat())
}

/// Per-anchor min-max acquisition spread from `runs` independent runs.
pub fn collect_minmax(cfg: &SyncExperimentConfig, mode: TriggerMode, runs: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(run_logs(cfg, mode, runs, seed, |log| min_max_delay_from_log(log).delays)?.concat())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingSummary {
    pub mode: TriggerMode,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub frac_within_5ms: f64,
    pub max_abs: f64,
    /// KS distance to Uniform(-interval/2, interval/2].
    pub ks_uniform: f64,
}

impl TimingSummary {
    pub fn from_errors(mode: TriggerMode, errors: &[f64], interval: f64) -> Self {
        let s = SampleStats::from_values(errors);
        TimingSummary {
            mode,
            samples: errors.len(),
            mean: s.mean,
            std: s.std,
            frac_within_5ms: errors.iter().filter(|e| e.abs() <= 5.0).count() as f64 / errors.len() as f64,
            max_abs: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
            ks_uniform: ks_uniform(errors, -interval / 2.0, interval / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxSummary {
    pub mode: TriggerMode,
    pub samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
    /// Expected range of uniform phases, `(n - 1) / (n + 1) * interval`; NaN for synchronized triggering.
    pub theoretical_mean: f64,
}

impl MinMaxSummary {
    pub fn from_delays(mode: TriggerMode, delays: &[f64], num_nodes: usize, interval: f64) -> Self {
        let mut sorted = delays.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = num_nodes as f64;
        MinMaxSummary {
            mode,
            samples: delays.len(),
            mean: crate::stats::mean(delays),
            p50: percentile_sorted(&sorted, 50.0),
            p99: percentile_sorted(&sorted, 99.0),
            max: *sorted.last().expect("at least one run"),
            theoretical_mean: match mode {
                TriggerMode::NaiveAsync => (n - 1.0) / (n + 1.0) * interval,
                TriggerMode::Synchronized => f64::NAN,
            },
        }
    }
}

pub(super) fn run(kind: ExperimentKind, cfg: &SyncExperimentConfig, spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let dir = &spec.output_dir;
    let mut written = Vec::new();
    let interval = cfg.sim.anchor_interval;

    match kind {
        ExperimentKind::TimingHist => {
            let mut summary = Vec::new();
            for mode in MODES {
                let errors = collect_timing_errors(cfg, mode, spec.iterations, spec.seed)?;
                let hist = Histogram::from_values(&errors, -60.0, 60.0, cfg.hist_bin_ms);
                write_csv(
                    dir,
                    &format!("timing_hist_{}.csv", mode_name(mode)),
                    &HISTOGRAM_HEADER,
                    &hist.rows(),
                    &mut written,
                )?;
                let s = TimingSummary::from_errors(mode, &errors, interval);
                summary.push(vec![
                    mode_name(mode).into(),
                    s.samples.into(),
                    s.mean.into(),
                    s.std.into(),
                    s.frac_within_5ms.into(),
                    s.max_abs.into(),
                    s.ks_uniform.into(),
                ]);
                write_first_log(cfg, mode, spec.seed, dir, &mut written)?;
            }
            let header = [
                "mode",
                "samples",
                "mean_ms",
                "std_ms",
                "frac_within_5ms",
                "max_abs_ms",
                "ks_uniform",
            ];
            write_csv(dir, "timing_summary.csv", &header, &summary, &mut written)?;
        }
        ExperimentKind::MinmaxDelay => {
            let mut summary = Vec::new();
            for mode in MODES {
                let delays = collect_minmax(cfg, mode, spec.iterations, spec.seed)?;
                let hist = Histogram::from_values(&delays, 0.0, interval, cfg.hist_bin_ms);
                write_csv(
                    dir,
                    &format!("minmax_hist_{}.csv", mode_name(mode)),
                    &HISTOGRAM_HEADER,
                    &hist.rows(),
                    &mut written,
                )?;
                let s = MinMaxSummary::from_delays(mode, &delays, cfg.sim.num_nodes, interval);
                summary.push(vec![
                    mode_name(mode).into(),
                    s.samples.into(),
                    s.mean.into(),
                    s.p50.into(),
                    s.p99.into(),
                    s.max.into(),
                    s.theoretical_mean.into(),
                ]);
            }
            let header = [
                "mode",
                "samples",
                "mean_ms",
                "p50_ms",
                "p99_ms",
                "max_ms",
                "theoretical_mean_ms",
            ];
            write_csv(dir, "minmax_summary.csv", &header, &summary, &mut written)?;
        }
        other => {
            let sweep = SweepKind::from_experiment(other).expect("sync experiment");
            let results = run_sweep(sweep, cfg, spec.iterations, spec.seed)?;
            let mut header = vec![sweep.column()];
            header.extend(SWEEP_TAIL);
            let rows: Vec<_> = results.iter().map(SweepResult::row).collect();
            write_csv(dir, &format!("{}.csv", other.as_str()), &header, &rows, &mut written)?;
            for r in &results {
                let tag = format!("{}_{}", sweep.column(), r.parameter);
                write_csv(
                    dir,
                    &format!("estimates_{tag}.csv"),
                    &ESTIMATE_HEADER,
                    &estimate_rows(&r.estimates),
                    &mut written,
                )?;
                if let Some(batches) = &r.batches {
                    write_csv(
                        dir,
                        &format!("batches_{tag}.csv"),
                        &BATCH_HEADER,
                        &batch_rows(batches),
                        &mut written,
                    )?;
                }
            }
        }
    }
    Ok(written)
}

fn write_first_log(
    cfg: &SyncExperimentConfig,
    mode: TriggerMode,
    seed: u64,
    dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    let sim = SimConfig {
        trigger_mode: mode,
        ..cfg.sim_with_anchors(cfg.anchors_per_run, derive_seed(seed, &[0]))
    };
    let log = run_simulation(&sim)?;
    let path = dir.join(format!("event_log_{}.csv", mode_name(mode)));
    std::fs::write(&path, log.to_csv()).map_err(|e| Error::io(&path, e))?;
    debug_assert!(log.to_csv().starts_with(&EVENT_LOG_HEADER.join(",")));
    written.push(path);
    Ok(())
}
