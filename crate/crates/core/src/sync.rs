//! Delay-aware synchronization: per-anchor collection of node messages under
//! an adaptive fusion window, plus the metrics used to evaluate it.
//!
//! For every anchor the scheduler computes a deadline
//! `anchor + max_i(mu_i + n_sigma * sigma_i)` from the per-node delay
//! estimates. Fusion fires as soon as every node has reported or the deadline
//! passes, whichever is first. Messages arriving after the trigger are late.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, LatencyEstimate, LatencyEstimator};
use crate::sim::{EventLog, SensorMessage, SimConfig, TriggerMode};
use crate::stats::{Histogram, SampleStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerMode {
    Adaptive,
    /// Waits for every node regardless of how long that takes.
    NaiveWaitAll,
}

impl std::str::FromStr for SchedulerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Adaptive" | "adaptive" => Ok(SchedulerMode::Adaptive),
            "NaiveWaitAll" | "naive_wait_all" => Ok(SchedulerMode::NaiveWaitAll),
            other => Err(Error::config(format!("unknown scheduler mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub n_sigma: f64,
    pub mode: SchedulerMode,
    /// Freeze estimates at the true delay parameters instead of learning them.
    pub oracle_estimates: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            n_sigma: 4.0,
            mode: SchedulerMode::Adaptive,
            oracle_estimates: false,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_sigma > 0.0) || !self.n_sigma.is_finite() {
            return Err(Error::config("n_sigma must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorBatch {
    pub anchor_time: f64,
    /// `+inf` for `NaiveWaitAll`.
    pub deadline: f64,
    pub normal_messages: Vec<SensorMessage>,
    pub late_messages: Vec<SensorMessage>,
    pub trigger_time: f64,
    pub full_match: bool,
    /// Nodes whose repeated messages were discarded.
    pub duplicates: Vec<u32>,
}

impl AnchorBatch {
    pub fn reaction_time(&self) -> f64 {
        self.trigger_time - self.anchor_time
    }

    pub fn message_count(&self) -> usize {
        self.normal_messages.len() + self.late_messages.len()
    }

    fn acquisitions(&self) -> impl Iterator<Item = f64> + '_ {
        self.normal_messages
            .iter()
            .chain(&self.late_messages)
            .map(|m| m.acquisition_time)
    }
}

/// Deadline for one anchor: the widest per-node window wins.
pub fn compute_deadline(anchor: f64, estimates: &[LatencyEstimate], n_sigma: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::config("deadline needs at least one node estimate"));
    }
    let widest = estimates
        .iter()
        .map(|e| e.mu + n_sigma * e.sigma)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(anchor + widest)
}

/// Closes one anchor given its messages in arrival order.
pub fn classify_and_trigger<I>(
    anchor: f64,
    deadline: f64,
    num_nodes: usize,
    messages: I,
    mode: SchedulerMode,
) -> AnchorBatch
where
    I: IntoIterator<Item = SensorMessage>,
{
    let mut seen = vec![false; num_nodes];
    let mut duplicates = Vec::new();
    let mut unique = Vec::new();
    for m in messages {
        let idx = m.node_id as usize;
        if idx >= num_nodes {
            duplicates.push(m.node_id);
            continue;
        }
        if seen[idx] {
            duplicates.push(m.node_id);
            continue;
        }
        seen[idx] = true;
        unique.push(m);
    }
    let all_present = seen.iter().all(|&s| s);
    let last_arrival = unique.iter().map(|m| m.arrival_time).fold(f64::NEG_INFINITY, f64::max);

    match mode {
        SchedulerMode::NaiveWaitAll => {
            let trigger_time = if all_present { last_arrival } else { f64::INFINITY };
            AnchorBatch {
                anchor_time: anchor,
                deadline: f64::INFINITY,
                normal_messages: unique,
                late_messages: Vec::new(),
                trigger_time,
                full_match: all_present,
                duplicates,
            }
        }
        SchedulerMode::Adaptive => {
            let trigger_time = if all_present && last_arrival <= deadline {
                last_arrival
            } else {
                deadline
            };
            let (normal, late): (Vec<_>, Vec<_>) = unique.into_iter().partition(|m| m.arrival_time <= trigger_time);
            AnchorBatch {
                anchor_time: anchor,
                deadline,
                full_match: normal.len() == num_nodes,
                normal_messages: normal,
                late_messages: late,
                trigger_time,
                duplicates,
            }
        }
    }
}

/// True delay parameters of normal traffic, measured from the anchor.
pub fn oracle_estimates(config: &SimConfig, log: &EventLog) -> Vec<LatencyEstimate> {
    (0..config.num_nodes)
        .map(|node| {
            let p = config.profile(node);
            let (offset, jitter) = match config.trigger_mode {
                TriggerMode::Synchronized => (0.0, config.trigger_jitter_sigma),
                // naive phase error is constant per node within a run
                TriggerMode::NaiveAsync => (
                    log.messages
                        .iter()
                        .find(|m| m.node_id as usize == node)
                        .map(SensorMessage::timing_error)
                        .unwrap_or(0.0),
                    0.0,
                ),
            };
            LatencyEstimate {
                mu: p.normal_mu + offset,
                sigma: (p.normal_sigma.powi(2) + jitter.powi(2)).sqrt(),
                sample_count: 0,
            }
        })
        .collect()
}

enum Estimates {
    Live(Vec<LatencyEstimator>),
    Frozen(Vec<LatencyEstimate>),
}

/// Replays an event log through the synchronization protocol.
pub struct SyncScheduler {
    config: SchedulerConfig,
    num_nodes: usize,
    estimates: Estimates,
}

impl SyncScheduler {
    /// Scheduler that learns per-node delay online.
    pub fn new(config: SchedulerConfig, estimator: EstimatorConfig, num_nodes: usize) -> Result<Self> {
        config.validate()?;
        if num_nodes == 0 {
            return Err(Error::config("scheduler needs at least one node"));
        }
        let estimators = (0..num_nodes)
            .map(|_| LatencyEstimator::new(estimator.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SyncScheduler {
            config,
            num_nodes,
            estimates: Estimates::Live(estimators),
        })
    }

    /// Scheduler with fixed per-node estimates.
    pub fn with_fixed_estimates(config: SchedulerConfig, estimates: Vec<LatencyEstimate>) -> Result<Self> {
        config.validate()?;
        if estimates.is_empty() {
            return Err(Error::config("scheduler needs at least one node"));
        }
        Ok(SyncScheduler {
            config,
            num_nodes: estimates.len(),
            estimates: Estimates::Frozen(estimates),
        })
    }

    /// Scheduler configured per `config.oracle_estimates` for a given run.
    pub fn for_run(
        config: SchedulerConfig,
        estimator: EstimatorConfig,
        sim: &SimConfig,
        log: &EventLog,
    ) -> Result<Self> {
        if config.oracle_estimates {
            Self::with_fixed_estimates(config, oracle_estimates(sim, log))
        } else {
            Self::new(config, estimator, sim.num_nodes)
        }
    }

    pub fn current_estimates(&self) -> Vec<LatencyEstimate> {
        match &self.estimates {
            Estimates::Live(est) => est.iter().map(LatencyEstimator::estimate).collect(),
            Estimates::Frozen(est) => est.clone(),
        }
    }

    /// Processes every anchor of `log` in time order.
    ///
    /// Live estimators only see messages that reached the cloud at or before
    /// the anchor whose deadline is being computed.
    pub fn run(&mut self, log: &EventLog) -> Result<Vec<AnchorBatch>> {
        let mut per_anchor: Vec<Vec<SensorMessage>> = vec![Vec::new(); log.anchors.len()];
        for m in &log.messages {
            let idx = log
                .anchors
                .binary_search_by(|a| a.total_cmp(&m.anchor_time))
                .map_err(|_| Error::input(format!("message references unknown anchor {}", m.anchor_time)))?;
            per_anchor[idx].push(m.clone());
        }

        let mut feed = log.messages.iter().peekable();
        let mut batches = Vec::with_capacity(log.anchors.len());
        for (&anchor, messages) in log.anchors.iter().zip(per_anchor) {
            if let Estimates::Live(estimators) = &mut self.estimates {
                while let Some(m) = feed.next_if(|m| m.arrival_time <= anchor) {
                    if let Some(est) = estimators.get_mut(m.node_id as usize) {
                        est.observe(m.anchor_delay().max(0.0))?;
                    }
                }
            }
            let deadline = match self.config.mode {
                SchedulerMode::Adaptive => compute_deadline(anchor, &self.current_estimates(), self.config.n_sigma)?,
                SchedulerMode::NaiveWaitAll => f64::INFINITY,
            };
            batches.push(classify_and_trigger(
                anchor,
                deadline,
                self.num_nodes,
                messages,
                self.config.mode,
            ));
        }
        Ok(batches)
    }
}

pub fn full_match_rate(batches: &[AnchorBatch]) -> Result<f64> {
    if batches.is_empty() {
        return Err(Error::input("full_match_rate needs at least one batch"));
    }
    Ok(batches.iter().filter(|b| b.full_match).count() as f64 / batches.len() as f64)
}

pub fn reaction_times(batches: &[AnchorBatch]) -> Vec<f64> {
    batches.iter().map(AnchorBatch::reaction_time).collect()
}

pub fn reaction_time_stats(batches: &[AnchorBatch]) -> Result<SampleStats> {
    if batches.is_empty() {
        return Err(Error::input("reaction_time_stats needs at least one batch"));
    }
    Ok(SampleStats::from_values(&reaction_times(batches)))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MinMaxDelays {
    pub delays: Vec<f64>,
    /// Anchors with fewer than two acquisitions.
    pub skipped: usize,
}

/// Spread between earliest and latest acquisition for each anchor.
pub fn min_max_delay(batches: &[AnchorBatch]) -> MinMaxDelays {
    let mut out = MinMaxDelays::default();
    for b in batches {
        if b.message_count() < 2 {
            out.skipped += 1;
            continue;
        }
        let (lo, hi) = b
            .acquisitions()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
        out.delays.push(hi - lo);
    }
    out
}

/// Min-max acquisition spread per anchor computed directly from a log.
pub fn min_max_delay_from_log(log: &EventLog) -> MinMaxDelays {
    let mut spans = vec![(f64::INFINITY, f64::NEG_INFINITY, 0usize); log.anchors.len()];
    for m in &log.messages {
        if let Ok(i) = log.anchors.binary_search_by(|a| a.total_cmp(&m.anchor_time)) {
            let s = &mut spans[i];
            s.0 = s.0.min(m.acquisition_time);
            s.1 = s.1.max(m.acquisition_time);
            s.2 += 1;
        }
    }
    let mut out = MinMaxDelays::default();
    for (lo, hi, n) in spans {
        if n < 2 {
            out.skipped += 1;
        } else {
            out.delays.push(hi - lo);
        }
    }
    out
}

pub fn timing_errors(log: &EventLog) -> Vec<f64> {
    log.messages.iter().map(SensorMessage::timing_error).collect()
}

/// Timing errors binned on `[-range, range)` with the given bin width.
pub fn timing_error_histogram(log: &EventLog, range_ms: f64, bin_ms: f64) -> Histogram {
    Histogram::from_values(&timing_errors(log), -range_ms, range_ms, bin_ms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMetrics {
    pub full_match_rate: f64,
    pub reaction_times: SampleStats,
    pub min_max_delays: Vec<f64>,
    pub timing_errors: Vec<f64>,
}

impl SyncMetrics {
    pub fn compute(log: &EventLog, batches: &[AnchorBatch]) -> Result<Self> {
        Ok(SyncMetrics {
            full_match_rate: full_match_rate(batches)?,
            reaction_times: reaction_time_stats(batches)?,
            min_max_delays: min_max_delay(batches).delays,
            timing_errors: timing_errors(log),
        })
    }
}

pub fn batch_rows(batches: &[AnchorBatch]) -> Vec<Vec<crate::csv::Cell>> {
    batches
        .iter()
        .map(|b| {
            vec![
                b.anchor_time.into(),
                b.trigger_time.into(),
                b.deadline.into(),
                b.full_match.into(),
                b.normal_messages.len().into(),
                b.late_messages.len().into(),
            ]
        })
        .collect()
}

pub fn estimate_rows(estimates: &[LatencyEstimate]) -> Vec<Vec<crate::csv::Cell>> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, e)| vec![i.into(), e.mu.into(), e.sigma.into()])
        .collect()
}
