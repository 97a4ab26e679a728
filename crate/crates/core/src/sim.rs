//! Discrete-event model of anchor-triggered sensor nodes reporting to a cloud
//! fusion server over a jittery, occasionally slow network.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Detection;
use crate::rng;

/// Synchronized trigger jitter is truncated to this many milliseconds.
pub const JITTER_TRUNCATION_MS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerMode {
    /// All nodes fire on the shared anchor, up to a small jitter.
    Synchronized,
    /// Nodes free-run at the anchor period with a fixed per-node phase.
    NaiveAsync,
}

impl std::str::FromStr for TriggerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Synchronized" | "synchronized" => Ok(TriggerMode::Synchronized),
            "NaiveAsync" | "naive_async" => Ok(TriggerMode::NaiveAsync),
            other => Err(Error::config(format!("unknown trigger mode `{other}`"))),
        }
    }
}

/// Statistical parameters of one node's acquisition-to-arrival latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub normal_mu: f64,
    pub normal_sigma: f64,
    #[serde(default = "default_abnormal_mu")]
    pub abnormal_mu: f64,
    #[serde(default = "default_abnormal_sigma")]
    pub abnormal_sigma: f64,
    #[serde(default)]
    pub abnormal_prob: f64,
    /// Free-running phase for `NaiveAsync`. Drawn per run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_offset: Option<f64>,
    /// Probability that a message is never delivered.
    #[serde(default)]
    pub loss_prob: f64,
}

fn default_abnormal_mu() -> f64 {
    200.0
}

fn default_abnormal_sigma() -> f64 {
    20.0
}

impl Default for NodeProfile {
    fn default() -> Self {
        NodeProfile {
            normal_mu: 50.0,
            normal_sigma: 10.0,
            abnormal_mu: 200.0,
            abnormal_sigma: 20.0,
            abnormal_prob: 0.0,
            phase_offset: None,
            loss_prob: 0.0,
        }
    }
}

impl NodeProfile {
    pub fn validate(&self, anchor_interval: f64) -> Result<()> {
        let finite = [
            self.normal_mu,
            self.normal_sigma,
            self.abnormal_mu,
            self.abnormal_sigma,
            self.abnormal_prob,
            self.loss_prob,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("node profile contains non-finite values"));
        }
        if self.normal_sigma < 0.0 || self.abnormal_sigma < 0.0 {
            return Err(Error::config("latency sigmas must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.abnormal_prob) {
            return Err(Error::config("abnormal_prob must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(Error::config("loss_prob must lie in [0, 1]"));
        }
        if let Some(phase) = self.phase_offset {
            if !(0.0..anchor_interval).contains(&phase) {
                return Err(Error::config(format!(
                    "phase_offset {phase} outside [0, {anchor_interval})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_nodes: usize,
    #[serde(default = "default_anchor_interval")]
    pub anchor_interval: f64,
    pub duration: f64,
    #[serde(default = "default_trigger_mode")]
    pub trigger_mode: TriggerMode,
    #[serde(default = "default_jitter")]
    pub trigger_jitter_sigma: f64,
    /// One profile per node, or a single profile shared by every node.
    pub node_profiles: Vec<NodeProfile>,
    #[serde(default)]
    pub seed: u64,
}

fn default_anchor_interval() -> f64 {
    100.0
}

fn default_trigger_mode() -> TriggerMode {
    TriggerMode::Synchronized
}

fn default_jitter() -> f64 {
    1.7
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_nodes: 8,
            anchor_interval: 100.0,
            duration: 1000.0,
            trigger_mode: TriggerMode::Synchronized,
            trigger_jitter_sigma: 1.7,
            node_profiles: vec![NodeProfile::default()],
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SimConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::config("num_nodes must be >= 1"));
        }
        if !(self.anchor_interval > 0.0) || !self.anchor_interval.is_finite() {
            return Err(Error::config("anchor_interval must be > 0"));
        }
        if !(self.trigger_jitter_sigma >= 0.0) {
            return Err(Error::config("trigger_jitter_sigma must be >= 0"));
        }
        if !(self.duration >= self.anchor_interval) || !self.duration.is_finite() {
            return Err(Error::config("duration must be >= anchor_interval"));
        }
        match self.node_profiles.len() {
            1 => {}
            n if n == self.num_nodes => {}
            n => {
                return Err(Error::config(format!(
                    "node_profiles has {n} entries; expected 1 or num_nodes = {}",
                    self.num_nodes
                )))
            }
        }
        for p in &self.node_profiles {
            p.validate(self.anchor_interval)?;
        }
        Ok(())
    }

    pub fn profile(&self, node: usize) -> &NodeProfile {
        if self.node_profiles.len() == 1 {
            &self.node_profiles[0]
        } else {
            &self.node_profiles[node]
        }
    }

    pub fn anchors(&self) -> Result<Vec<f64>> {
        schedule_anchors(0.0, self.duration, self.anchor_interval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMessage {
    pub node_id: u32,
    pub anchor_time: f64,
    pub acquisition_time: f64,
    pub arrival_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payload: Vec<Detection>,
}

impl SensorMessage {
    /// Acquisition offset from the anchor.
    pub fn timing_error(&self) -> f64 {
        self.acquisition_time - self.anchor_time
    }

    /// End-to-end delay from the anchor to arrival at the cloud.
    pub fn anchor_delay(&self) -> f64 {
        self.arrival_time - self.anchor_time
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    /// Sorted by arrival time, ties by (anchor, node).
    pub messages: Vec<SensorMessage>,
    pub anchors: Vec<f64>,
}

impl EventLog {
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<crate::csv::Cell>> = self
            .messages
            .iter()
            .map(|m| {
                vec![
                    m.anchor_time.into(),
                    (m.node_id as u64).into(),
                    m.acquisition_time.into(),
                    m.arrival_time.into(),
                ]
            })
            .collect();
        crate::csv::render(&crate::csv::EVENT_LOG_HEADER, &rows)
    }
}

/// Anchor instants `start, start + interval, ...` up to `start + duration`.
pub fn schedule_anchors(start: f64, duration: f64, interval: f64) -> Result<Vec<f64>> {
    if !(interval > 0.0) || !interval.is_finite() {
        return Err(Error::config(format!("anchor interval must be > 0, got {interval}")));
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::config(format!("duration must be >= 0, got {duration}")));
    }
    // Tolerate floating-point noise in duration / interval.
    let count = (duration / interval + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| start + k as f64 * interval).collect())
}

/// Offset of the free-running tick nearest to `anchor`, in (-interval/2, interval/2].
pub fn naive_phase_error(anchor: f64, phase_offset: f64, interval: f64) -> f64 {
    let r = (phase_offset - anchor).rem_euclid(interval);
    if r > interval / 2.0 {
        r - interval
    } else {
        r
    }
}

/// Acquisition instant for one node at one anchor.
pub fn sample_acquisition<R: Rng + ?Sized>(
    anchor: f64,
    mode: TriggerMode,
    jitter_sigma: f64,
    phase_offset: f64,
    interval: f64,
    rng: &mut R,
) -> f64 {
    match mode {
        TriggerMode::Synchronized => anchor + truncated_jitter(jitter_sigma, rng),
        TriggerMode::NaiveAsync => anchor + naive_phase_error(anchor, phase_offset, interval),
    }
}

fn truncated_jitter<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated >= 0");
    loop {
        let e = normal.sample(rng);
        if e.abs() <= JITTER_TRUNCATION_MS {
            return e;
        }
    }
}

fn gaussian<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return mu;
    }
    Normal::new(mu, sigma).expect("sigma validated >= 0").sample(rng)
}

/// One latency draw from the normal/abnormal mixture, clamped at zero.
pub fn sample_latency<R: Rng + ?Sized>(node: &NodeProfile, rng: &mut R) -> f64 {
    let abnormal = rng.random::<f64>() < node.abnormal_prob;
    let v = if abnormal {
        gaussian(node.abnormal_mu, node.abnormal_sigma, rng)
    } else {
        gaussian(node.normal_mu, node.normal_sigma, rng)
    };
    v.max(0.0)
}

/// Per-node RNG stream, independent of how many other nodes exist.
pub fn node_stream(seed: u64, node_id: u32) -> ChaCha8Rng {
    rng::substream(seed, &[0x4E4F_4445, node_id as u64])
}

/// Runs one simulation: one message per (anchor, node), unless lost.
pub fn run_simulation(config: &SimConfig) -> Result<EventLog> {
    config.validate()?;
    let anchors = config.anchors()?;
    let mut messages = Vec::with_capacity(anchors.len() * config.num_nodes);

    for node in 0..config.num_nodes {
        let profile = config.profile(node);
        let node_id = node as u32;
        let mut rng = node_stream(config.seed, node_id);
        let phase = match profile.phase_offset {
            Some(p) => p,
            None => rng.random_range(0.0..config.anchor_interval),
        };
        for &anchor in &anchors {
            let acquisition = sample_acquisition(
                anchor,
                config.trigger_mode,
                config.trigger_jitter_sigma,
                phase,
                config.anchor_interval,
                &mut rng,
            );
            let latency = sample_latency(profile, &mut rng);
            if profile.loss_prob > 0.0 && rng.random::<f64>() < profile.loss_prob {
                continue;
            }
            messages.push(SensorMessage {
                node_id,
                anchor_time: anchor,
                acquisition_time: acquisition,
                arrival_time: acquisition + latency,
                payload: Vec::new(),
            });
        }
    }

    messages.sort_by(|a, b| {
        a.arrival_time
            .total_cmp(&b.arrival_time)
            .then(a.anchor_time.total_cmp(&b.anchor_time))
            .then(a.node_id.cmp(&b.node_id))
    });
    Ok(EventLog { messages, anchors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn anchors_every_interval() {
        assert_eq!(
            schedule_anchors(400.0, 200.0, 100.0).unwrap(),
            vec![400.0, 500.0, 600.0]
        );
        assert_eq!(schedule_anchors(0.0, 0.0, 100.0).unwrap(), vec![0.0]);
        assert_eq!(schedule_anchors(0.0, 1000.0, 100.0).unwrap().len(), 11);
    }

    #[test]
    fn non_positive_interval_is_config_error() {
        assert!(matches!(schedule_anchors(0.0, 100.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(schedule_anchors(0.0, 100.0, -5.0), Err(Error::Config(_))));
    }

    #[test]
    fn acquisition_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = sample_acquisition(500.0, TriggerMode::Synchronized, 0.0, 0.0, 100.0, &mut rng);
        assert_eq!(t, 500.0);
        let t = sample_acquisition(500.0, TriggerMode::NaiveAsync, 1.7, 30.0, 100.0, &mut rng);
        assert_eq!(t, 530.0);
        // phase 70 is nearer the previous tick
        let t = sample_acquisition(500.0, TriggerMode::NaiveAsync, 1.7, 70.0, 100.0, &mut rng);
        assert_eq!(t, 470.0);
        // exact half period maps to +interval/2
        assert_eq!(naive_phase_error(500.0, 50.0, 100.0), 50.0);
    }

    #[test]
    fn synchronized_jitter_is_tight() {
        // Phi(5 / 1.7) ~ 0.9984 two-sided mass inside +-5 ms
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let within = (0..n)
            .map(|_| sample_acquisition(0.0, TriggerMode::Synchronized, 1.7, 0.0, 100.0, &mut rng))
            .filter(|e| e.abs() <= 5.0)
            .count();
        assert!(within as f64 / n as f64 >= 0.99);
    }

    #[test]
    fn latency_means_match_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let normal = NodeProfile::default();
        let mean: f64 = (0..n).map(|_| sample_latency(&normal, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 50.0).abs() < 0.2, "mean {mean}");

        let abnormal = NodeProfile {
            abnormal_prob: 1.0,
            ..NodeProfile::default()
        };
        let mean: f64 = (0..n).map(|_| sample_latency(&abnormal, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 200.0).abs() < 0.4, "mean {mean}");
    }

    #[test]
    fn degenerate_mixture_takes_two_values() {
        let p = NodeProfile {
            normal_sigma: 0.0,
            abnormal_sigma: 0.0,
            abnormal_prob: 0.5,
            ..NodeProfile::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen = [false; 2];
        for _ in 0..1000 {
            let v = sample_latency(&p, &mut rng);
            assert!(v == 50.0 || v == 200.0);
            seen[(v == 200.0) as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn latency_clamped_at_zero() {
        let p = NodeProfile {
            normal_mu: 1.0,
            normal_sigma: 20.0,
            ..NodeProfile::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..10_000).all(|_| sample_latency(&p, &mut rng) >= 0.0));
    }

    #[test]
    fn one_message_per_node_per_anchor() {
        let cfg = SimConfig {
            duration: 100.0,
            ..SimConfig::default()
        };
        let log = run_simulation(&cfg).unwrap();
        assert_eq!(log.anchors.len(), 2);
        assert_eq!(log.messages.len(), 16);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SimConfig::default();
        assert!(SimConfig {
            num_nodes: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            anchor_interval: 0.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            trigger_jitter_sigma: -1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            node_profiles: vec![NodeProfile::default(); 3],
            ..base.clone()
        }
        .validate()
        .is_err());
        let bad = NodeProfile {
            abnormal_prob: 1.5,
            ..NodeProfile::default()
        };
        assert!(SimConfig {
            node_profiles: vec![bad],
            ..base.clone()
        }
        .validate()
        .is_err());
        let bad = NodeProfile {
            phase_offset: Some(100.0),
            ..NodeProfile::default()
        };
        assert!(SimConfig {
            node_profiles: vec![bad],
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn log_sorted_and_causal() {
        let cfg = SimConfig {
            duration: 5_000.0,
            node_profiles: vec![NodeProfile {
                abnormal_prob: 0.2,
                ..NodeProfile::default()
            }],
            seed: 42,
            ..SimConfig::default()
        };
        let log = run_simulation(&cfg).unwrap();
        assert!(log.messages.windows(2).all(|w| w[0].arrival_time <= w[1].arrival_time));
        assert!(log.messages.iter().all(|m| m.arrival_time >= m.acquisition_time));
    }

    #[test]
    fn true_loss_drops_messages() {
        let cfg = SimConfig {
            duration: 10_000.0,
            node_profiles: vec![NodeProfile {
                loss_prob: 0.5,
                ..NodeProfile::default()
            }],
            ..SimConfig::default()
        };
        let log = run_simulation(&cfg).unwrap();
        let full = cfg.anchors().unwrap().len() * cfg.num_nodes;
        assert!(log.messages.len() < full * 6 / 10 && log.messages.len() > full * 4 / 10);
    }

    #[test]
    fn toml_round_trip_uses_field_names() {
        let text = r#"
num_nodes = 4
anchor_interval = 100.0
duration = 1000.0
trigger_mode = "NaiveAsync"
trigger_jitter_sigma = 1.7
seed = 9

[[node_profiles]]
normal_mu = 50.0
normal_sigma = 10.0
abnormal_mu = 200.0
abnormal_sigma = 20.0
abnormal_prob = 0.01
phase_offset = 30.0
"#;
        let cfg = SimConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.num_nodes, 4);
        assert_eq!(cfg.trigger_mode, TriggerMode::NaiveAsync);
        assert_eq!(cfg.profile(3).phase_offset, Some(30.0));
        cfg.validate().unwrap();
    }
}
