//! Early/late fusion benchmark on synthetic scenes, with and without the
//! drivable-area filter.

use std::path::PathBuf;

use rayon::prelude::*;

use super::{write_csv, ExperimentSpec, Overrides};
use crate::csv::{Cell, EVAL_HEADER, TRACK_HEADER};
use crate::error::{Error, Result};
use crate::eval::{evaluate_map, EvalReport, FramePredictions};
use crate::fusion::{associate_and_fuse, ClassLabel, Detection};
use crate::geometry::{bandwidth_early, bandwidth_late};
use crate::interchange::write_jsonl;
use crate::rng::derive_seed;
use crate::scenario::{
    apply_map_filter, canned_scenario, early_fusion_detect, frame_point_count, generate_scene, observe, suppress,
    FrameStreams, FrameTruth, ScenarioConfig, CANNED,
};
use crate::tracking::{Tracker, TrackerConfig};

/// The four benchmarked pipelines, in report order.
pub const CONFIGS: [&str; 4] = ["EF", "EF+HD", "LF", "LF+HD"];

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Canned(String),
    File(Box<ScenarioConfig>),
}

/// Scene source plus the parameter overrides applied to every draw.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    source: Source,
    pub noiseless: bool,
    /// IoU threshold for mAP matching.
    pub eval_iou: f64,
    pub fp_rate: Option<f64>,
    pub fp_outside_map_fraction: Option<f64>,
    pub association_gate: f64,
}

impl BenchPlan {
    pub fn canned(name: &str) -> Result<Self> {
        if !CANNED.contains(&name) {
            return Err(Error::config(format!(
                "unknown scenario `{name}`; expected one of {}",
                CANNED.join(", ")
            )));
        }
        Ok(BenchPlan {
            source: Source::Canned(name.to_string()),
            noiseless: false,
            eval_iou: 0.5,
            fp_rate: None,
            fp_outside_map_fraction: None,
            association_gate: 2.0,
        })
    }

    pub fn from_config(config: ScenarioConfig) -> Self {
        BenchPlan {
            source: Source::File(Box::new(config)),
            ..Self::canned(CANNED[0]).expect("built-in name")
        }
    }

    pub(super) fn resolve(spec: &ExperimentSpec, overrides: &Overrides) -> Result<Self> {
        let mut plan = match &spec.config {
            Some(path) => load_source(path)?,
            None => Self::canned("occlusion_split")?,
        };
        if let Some(name) = overrides.get::<String>("scenario")? {
            plan = BenchPlan { ..Self::canned(&name)? };
        }
        overrides.apply("noiseless", &mut plan.noiseless)?;
        overrides.apply("iou", &mut plan.eval_iou)?;
        overrides.apply("association_gate", &mut plan.association_gate)?;
        plan.fp_rate = overrides.get("fp_rate")?;
        plan.fp_outside_map_fraction = overrides.get("fp_outside_map_fraction")?;

        if !(plan.eval_iou > 0.0 && plan.eval_iou <= 1.0) {
            return Err(Error::config("iou must lie in (0, 1]"));
        }
        if !(plan.association_gate > 0.0) {
            return Err(Error::config("association_gate must be > 0"));
        }
        // surface invalid combinations before any output is written
        plan.scene(0)?;
        Ok(plan)
    }

    /// Scenario for one draw with the overrides applied.
    pub fn scene(&self, seed: u64) -> Result<ScenarioConfig> {
        let mut cfg = match &self.source {
            Source::Canned(name) => canned_scenario(name, seed)?,
            Source::File(cfg) => (**cfg).clone(),
        };
        for n in &mut cfg.nodes {
            if let Some(r) = self.fp_rate {
                n.fp_rate = r;
            }
            if let Some(f) = self.fp_outside_map_fraction {
                n.fp_outside_map_fraction = f;
            }
        }
        if self.noiseless {
            cfg = cfg.noiseless();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A scenario file either describes a full scene or only names a built-in one.
fn load_source(path: &std::path::Path) -> Result<BenchPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !table.contains_key("objects") {
        let name = table
            .get("scenario")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::config(format!("{}: missing `scenario`", path.display())))?;
        return BenchPlan::canned(name);
    }
    Ok(BenchPlan::from_config(ScenarioConfig::load(path)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfigResult {
    pub config: &'static str,
    /// Mean over draws.
    pub map: f64,
    /// Mean AP per class over the draws whose ground truth has that class.
    pub class_ap: Vec<(ClassLabel, f64)>,
    pub bandwidth_bytes_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub configs: Vec<BenchConfigResult>,
    /// Per-draw mAP in [`CONFIGS`] order.
    pub draws: Vec<[f64; 4]>,
}

struct DrawOutput {
    frames: Vec<FrameTruth>,
    predictions: [Vec<FramePredictions>; 4],
    per_node: Vec<Vec<Vec<Detection>>>,
    reports: [EvalReport; 4],
    bandwidth: [f64; 4],
}

fn run_draw(plan: &BenchPlan, seed: u64) -> Result<DrawOutput> {
    let cfg = plan.scene(seed)?;
    let frames = generate_scene(&cfg, seed)?;
    let mut predictions: [Vec<FramePredictions>; 4] = Default::default();
    let mut per_node = Vec::with_capacity(frames.len());
    let (mut points, mut objects) = (0u64, 0u64);

    for (k, frame) in frames.iter().enumerate() {
        let streams = FrameStreams::new(seed, k as u64);
        let ef = early_fusion_detect(frame, &cfg.nodes, &cfg, &streams);
        let node_dets: Vec<Vec<Detection>> = cfg.nodes.iter().map(|n| observe(frame, n, &cfg, &streams)).collect();
        objects += node_dets.iter().map(|d| d.len() as u64).sum::<u64>();
        points += frame_point_count(frame, &cfg.nodes, &cfg);
        let lf = suppress(node_dets.concat(), cfg.detection.nms_iou);
        let (ef_hd, lf_hd) = match &cfg.map {
            Some(map) => (apply_map_filter(&ef, map), apply_map_filter(&lf, map)),
            None => (ef.clone(), lf.clone()),
        };
        for (slot, dets) in predictions.iter_mut().zip([ef, ef_hd, lf, lf_hd]) {
            slot.push(FramePredictions {
                anchor_time: frame.anchor_time,
                detections: dets,
            });
        }
        per_node.push(node_dets);
    }

    let n = frames.len() as f64;
    let early = bandwidth_early(points) as f64 / n;
    let late = bandwidth_late(objects) as f64 / n;
    let reports = [
        evaluate_map(&predictions[0], &frames, plan.eval_iou)?,
        evaluate_map(&predictions[1], &frames, plan.eval_iou)?,
        evaluate_map(&predictions[2], &frames, plan.eval_iou)?,
        evaluate_map(&predictions[3], &frames, plan.eval_iou)?,
    ];
    Ok(DrawOutput {
        frames,
        predictions,
        per_node,
        reports,
        bandwidth: [early, early, late, late],
    })
}

fn draw_seed(seed: u64, draw: usize) -> u64 {
    derive_seed(seed, &[draw as u64])
}

fn summarize(outputs: &[DrawOutput]) -> BenchSummary {
    let configs = CONFIGS
        .iter()
        .enumerate()
        .map(|(c, &config)| {
            let class_ap = ClassLabel::ALL
                .iter()
                .filter_map(|&class| {
                    let aps: Vec<f64> = outputs.iter().filter_map(|o| o.reports[c].ap(class)).collect();
                    (!aps.is_empty()).then(|| (class, crate::stats::mean(&aps)))
                })
                .collect();
            BenchConfigResult {
                config,
                map: crate::stats::mean(&outputs.iter().map(|o| o.reports[c].map).collect::<Vec<_>>()),
                class_ap,
                bandwidth_bytes_per_frame: crate::stats::mean(
                    &outputs.iter().map(|o| o.bandwidth[c]).collect::<Vec<_>>(),
                ),
            }
        })
        .collect();
    let draws = outputs
        .iter()
        .map(|o| [o.reports[0].map, o.reports[1].map, o.reports[2].map, o.reports[3].map])
        .collect();
    BenchSummary { configs, draws }
}

/// Runs `draws` independent scene draws and aggregates the four pipelines.
pub fn fusion_bench(plan: &BenchPlan, draws: usize, seed: u64) -> Result<BenchSummary> {
    let outputs = (0..draws)
        .into_par_iter()
        .map(|i| run_draw(plan, draw_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&outputs))
}

fn file_tag(config: &str) -> String {
    config.to_lowercase().replace('+', "_")
}

pub(super) fn run(plan: &BenchPlan, spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let dir = &spec.output_dir;
    let mut written = Vec::new();
    let outputs = (0..spec.iterations)
        .into_par_iter()
        .map(|i| run_draw(plan, draw_seed(spec.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&outputs);

    let mut header = vec!["config".to_string(), "map".to_string()];
    header.extend(ClassLabel::ALL.iter().map(|c| format!("{}_ap", c.as_str())));
    header.push("bandwidth_bytes_per_frame".into());
    let rows: Vec<Vec<Cell>> = summary
        .configs
        .iter()
        .map(|r| {
            let mut row: Vec<Cell> = vec![r.config.into(), r.map.into()];
            for class in ClassLabel::ALL {
                let ap = r
                    .class_ap
                    .iter()
                    .find(|(c, _)| *c == class)
                    .map_or(f64::NAN, |(_, ap)| *ap);
                row.push(ap.into());
            }
            row.push(r.bandwidth_bytes_per_frame.into());
            row
        })
        .collect();
    write_csv(dir, "fusion_bench.csv", &header, &rows, &mut written)?;

    let draw_rows: Vec<Vec<Cell>> = summary
        .draws
        .iter()
        .enumerate()
        .map(|(i, m)| vec![i.into(), m[0].into(), m[1].into(), m[2].into(), m[3].into()])
        .collect();
    let draw_header = ["draw", "ef_map", "ef_hd_map", "lf_map", "lf_hd_map"];
    write_csv(dir, "fusion_draws.csv", &draw_header, &draw_rows, &mut written)?;

    // detailed artifacts for the first draw
    let first = &outputs[0];
    for (c, config) in CONFIGS.iter().enumerate() {
        let tag = file_tag(config);
        write_csv(
            dir,
            &format!("eval_{tag}.csv"),
            &EVAL_HEADER,
            &first.reports[c].csv_rows(),
            &mut written,
        )?;
        let dets: Vec<Detection> = first.predictions[c]
            .iter()
            .flat_map(|f| f.detections.iter().cloned())
            .collect();
        write_jsonl_file(&dets, dir.join(format!("predictions_{tag}.jsonl")), &mut written)?;
    }
    let truth: Vec<Detection> = first
        .frames
        .iter()
        .flat_map(|f| f.objects.iter().map(move |o| o.to_detection(f.anchor_time)))
        .collect();
    write_jsonl_file(&truth, dir.join("ground_truth.jsonl"), &mut written)?;

    let mut tracker = Tracker::new(TrackerConfig::default())?;
    let mut track_rows = Vec::new();
    for (frame, node_dets) in first.frames.iter().zip(&first.per_node) {
        tracker.track_step(&associate_and_fuse(node_dets, plan.association_gate), frame.anchor_time)?;
        track_rows.extend(tracker.csv_rows(frame.anchor_time));
    }
    write_csv(dir, "tracks.csv", &TRACK_HEADER, &track_rows, &mut written)?;
    Ok(written)
}

fn write_jsonl_file(dets: &[Detection], path: PathBuf, written: &mut Vec<PathBuf>) -> Result<()> {
    write_jsonl(dets, &path)?;
    written.push(path);
    Ok(())
}
