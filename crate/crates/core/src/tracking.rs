//! Global multi-object tracker fed by fused objects at each anchor, with
//! post-fusion of late detections.

use serde::{Deserialize, Serialize};

use crate::csv::Cell;
use crate::error::{Error, Result};
use crate::fusion::{motion_correct, normalize_yaw, ClassLabel, Detection, FusedObject};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Centre-distance association gate, metres.
    pub gate: f64,
    /// Position blend factor toward a matched measurement.
    pub alpha: f64,
    pub confirm_threshold: u32,
    pub delete_threshold: u32,
    /// Confidence multiplier applied to late detections.
    pub late_penalty: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            gate: 2.0,
            alpha: 0.6,
            confirm_threshold: 3,
            delete_threshold: 5,
            late_penalty: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

impl TrackStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Dead => "dead",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub position: Point,
    /// metres per second
    pub velocity: [f64; 2],
}

impl TrackState {
    fn predict(&self, dt_ms: f64) -> Point {
        let dt = dt_ms / 1000.0;
        [
            self.position[0] + self.velocity[0] * dt,
            self.position[1] + self.velocity[1] * dt,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub track_id: u64,
    pub state: TrackState,
    pub yaw: f64,
    pub size: [f64; 3],
    pub class_label: ClassLabel,
    pub hits: u32,
    pub misses: u32,
    pub status: TrackStatus,
    /// milliseconds
    pub last_update: f64,
}

impl Track {
    pub fn predicted_position(&self, time: f64) -> Point {
        self.state.predict((time - self.last_update).max(0.0))
    }

    pub fn csv_row(&self, anchor: f64) -> Vec<Cell> {
        vec![
            anchor.into(),
            self.track_id.into(),
            self.class_label.as_str().into(),
            self.state.position[0].into(),
            self.state.position[1].into(),
            self.yaw.into(),
            self.state.velocity[0].into(),
            self.state.velocity[1].into(),
            self.status.as_str().into(),
        ]
    }
}

/// Late detection that was folded into a track.
#[derive(Debug, Clone, PartialEq)]
pub struct LateUpdate {
    pub track_id: u64,
    /// Motion-corrected detection carrying its penalised confidence.
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LateOutcome {
    pub applied: Vec<LateUpdate>,
    pub discarded: usize,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_anchor: Option<f64>,
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        if !(config.gate > 0.0) || !(0.0..=1.0).contains(&config.alpha) {
            return Err(Error::config("tracker needs gate > 0 and alpha in [0, 1]"));
        }
        if config.confirm_threshold == 0 || config.delete_threshold == 0 {
            return Err(Error::config("tracker thresholds must be >= 1"));
        }
        if !(0.0..=1.0).contains(&config.late_penalty) {
            return Err(Error::config("late_penalty must lie in [0, 1]"));
        }
        Ok(Tracker {
            config,
            tracks: Vec::new(),
            next_id: 0,
            last_anchor: None,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.status == TrackStatus::Confirmed)
    }

    /// Advances every track to `anchor_time` and absorbs the fused objects.
    pub fn track_step(&mut self, fused: &[FusedObject], anchor_time: f64) -> Result<()> {
        if let Some(last) = self.last_anchor {
            if !(anchor_time > last) {
                return Err(Error::Sequence { last, got: anchor_time });
            }
        }
        self.last_anchor = Some(anchor_time);
        self.tracks.retain(|t| t.status != TrackStatus::Dead);

        let predicted: Vec<Point> = self.tracks.iter().map(|t| t.predicted_position(anchor_time)).collect();
        let mut pairs = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            for (oi, o) in fused.iter().enumerate() {
                if t.class_label != o.class_label {
                    continue;
                }
                let d = distance(predicted[ti], o.position);
                if d <= self.config.gate {
                    pairs.push((d, t.track_id, ti, oi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.3).cmp(&(b.1, b.3))));

        let mut track_match = vec![None; self.tracks.len()];
        let mut object_taken = vec![false; fused.len()];
        for (_, _, ti, oi) in pairs {
            if track_match[ti].is_none() && !object_taken[oi] {
                track_match[ti] = Some(oi);
                object_taken[oi] = true;
            }
        }

        let cfg = self.config.clone();
        for (ti, track) in self.tracks.iter_mut().enumerate() {
            let pred = predicted[ti];
            match track_match[ti] {
                Some(oi) => {
                    let obj = &fused[oi];
                    let new_pos = [
                        pred[0] + cfg.alpha * (obj.position[0] - pred[0]),
                        pred[1] + cfg.alpha * (obj.position[1] - pred[1]),
                    ];
                    let dt = (anchor_time - track.last_update) / 1000.0;
                    if dt > 0.0 {
                        track.state.velocity = [
                            (new_pos[0] - track.state.position[0]) / dt,
                            (new_pos[1] - track.state.position[1]) / dt,
                        ];
                    }
                    track.state.position = new_pos;
                    track.yaw = normalize_yaw(track.yaw + cfg.alpha * normalize_yaw(obj.yaw - track.yaw));
                    track.size = obj.size;
                    track.hits += 1;
                    track.misses = 0;
                    if track.hits >= cfg.confirm_threshold {
                        track.status = TrackStatus::Confirmed;
                    }
                }
                None => {
                    track.state.position = pred;
                    track.misses += 1;
                    if track.misses >= cfg.delete_threshold {
                        track.status = TrackStatus::Dead;
                    }
                }
            }
            track.last_update = anchor_time;
        }

        for (oi, obj) in fused.iter().enumerate() {
            if object_taken[oi] {
                continue;
            }
            let track_id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                track_id,
                state: TrackState {
                    position: obj.position,
                    velocity: obj.velocity.unwrap_or([0.0, 0.0]),
                },
                yaw: obj.yaw,
                size: obj.size,
                class_label: obj.class_label,
                hits: 1,
                misses: 0,
                status: if cfg.confirm_threshold <= 1 {
                    TrackStatus::Confirmed
                } else {
                    TrackStatus::Tentative
                },
                last_update: anchor_time,
            });
        }
        Ok(())
    }

    /// Folds late detections into existing tracks with reduced confidence.
    /// Late data never creates tracks.
    pub fn post_fuse_late(&mut self, late: &[Detection], fusion_time: f64) -> LateOutcome {
        let mut outcome = LateOutcome::default();
        for det in late {
            let mut corrected = motion_correct(det, fusion_time);
            corrected.confidence = det.confidence * self.config.late_penalty;

            let best = self
                .tracks
                .iter()
                .enumerate()
                .filter(|(_, t)| t.status != TrackStatus::Dead && t.class_label == det.class_label)
                .map(|(i, t)| {
                    (
                        distance(t.predicted_position(fusion_time), corrected.position),
                        t.track_id,
                        i,
                    )
                })
                .filter(|(d, _, _)| *d <= self.config.gate)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let Some((_, track_id, idx)) = best else {
                outcome.discarded += 1;
                continue;
            };
            let track = &mut self.tracks[idx];
            let pred = track.predicted_position(fusion_time);
            let w = self.config.alpha * corrected.confidence;
            track.state.position = [
                pred[0] + w * (corrected.position[0] - pred[0]),
                pred[1] + w * (corrected.position[1] - pred[1]),
            ];
            track.last_update = track.last_update.max(fusion_time);
            outcome.applied.push(LateUpdate {
                track_id,
                detection: corrected,
            });
        }
        outcome
    }

    pub fn csv_rows(&self, anchor: f64) -> Vec<Vec<Cell>> {
        self.tracks.iter().map(|t| t.csv_row(anchor)).collect()
    }
}
