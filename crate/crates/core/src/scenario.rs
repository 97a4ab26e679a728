//! Synthetic cooperative-perception scenes and the node observation model.
//!
//! Detection is modelled from a per-class LiDAR point budget that falls off
//! with the square of range beyond a reference distance. A node reports an
//! object when enough points land on it; early fusion pools the points from
//! every node before applying the same threshold.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{normalize_yaw, ClassLabel, Detection};
use crate::geometry::{in_drivable_area, nms, DrivableMap, NmsCandidate, OrientedBox, Point, Ring};
use crate::rng;

impl ClassLabel {
    /// Average LiDAR points on an object of this class at the reference range.
    pub fn base_points(self) -> f64 {
        match self {
            ClassLabel::Car => 390.0,
            ClassLabel::Truck => 635.0,
            ClassLabel::Bus => 1880.0,
            ClassLabel::Person => 21.0,
            ClassLabel::Bicycle => 67.0,
        }
    }

    /// Typical footprint: length, width, height in metres.
    pub fn default_size(self) -> [f64; 3] {
        match self {
            ClassLabel::Car => [4.5, 1.8, 1.5],
            ClassLabel::Truck => [8.0, 2.5, 3.0],
            ClassLabel::Bus => [12.0, 2.5, 3.2],
            ClassLabel::Person => [0.6, 0.6, 1.7],
            ClassLabel::Bicycle => [1.8, 0.6, 1.5],
        }
    }
}

/// Constant-speed motion along a polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Point>,
    /// metres per second
    #[serde(default)]
    pub speed: f64,
    /// Close the path back to the first waypoint and keep circling.
    #[serde(default)]
    pub looped: bool,
    /// Distance along the path at t = 0, metres.
    #[serde(default)]
    pub start_offset: f64,
    /// Draw `start_offset` uniformly along the path from the scene seed.
    #[serde(default)]
    pub random_start: bool,
    /// Heading used when the object never moves.
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point,
    pub yaw: f64,
    pub velocity: [f64; 2],
}

impl Trajectory {
    pub fn stationary(at: Point, yaw: f64) -> Self {
        Trajectory {
            waypoints: vec![at],
            speed: 0.0,
            looped: false,
            start_offset: 0.0,
            random_start: false,
            yaw,
        }
    }

    pub fn linear(waypoints: Vec<Point>, speed: f64) -> Self {
        Trajectory {
            waypoints,
            speed,
            looped: false,
            start_offset: 0.0,
            random_start: false,
            yaw: 0.0,
        }
    }

    fn segments(&self) -> Vec<(Point, Point)> {
        let w = &self.waypoints;
        let mut segs: Vec<_> = w.windows(2).map(|p| (p[0], p[1])).collect();
        if self.looped && w.len() > 2 {
            segs.push((w[w.len() - 1], w[0]));
        }
        segs.retain(|(a, b)| a != b);
        segs
    }

    pub fn length(&self) -> f64 {
        self.segments()
            .iter()
            .map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1]))
            .sum()
    }

    /// Pose `time_ms` after the start of the scene.
    pub fn pose_at(&self, time_ms: f64, start_offset: f64) -> Pose {
        let segs = self.segments();
        let total: f64 = self.length();
        if segs.is_empty() || total == 0.0 {
            return Pose {
                position: self.waypoints[0],
                yaw: normalize_yaw(self.yaw),
                velocity: [0.0, 0.0],
            };
        }
        let mut s = start_offset + self.speed * time_ms / 1000.0;
        let mut moving = self.speed != 0.0;
        if self.looped {
            s = s.rem_euclid(total);
        } else if s >= total {
            s = total;
            moving = false;
        } else if s < 0.0 {
            s = 0.0;
            moving = false;
        }
        let mut remaining = s;
        for (i, (a, b)) in segs.iter().enumerate() {
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            if remaining <= len || i == segs.len() - 1 {
                let f = (remaining / len).min(1.0);
                let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
                let speed = if moving { self.speed } else { 0.0 };
                return Pose {
                    position: [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])],
                    yaw: dir[1].atan2(dir[0]),
                    velocity: [dir[0] * speed, dir[1] * speed],
                };
            }
            remaining -= len;
        }
        unreachable!("segments cover the whole path")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u32,
    pub class_label: ClassLabel,
    pub trajectory: Trajectory,
    /// length, width, height; class default when absent
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub footprint: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_points: Option<f64>,
}

impl SceneObject {
    pub fn new(object_id: u32, class_label: ClassLabel, trajectory: Trajectory) -> Self {
        SceneObject {
            object_id,
            class_label,
            trajectory,
            footprint: None,
            base_points: None,
        }
    }

    pub fn footprint(&self) -> [f64; 3] {
        self.footprint.unwrap_or_else(|| self.class_label.default_size())
    }

    pub fn base_points(&self) -> f64 {
        self.base_points.unwrap_or_else(|| self.class_label.base_points())
    }
}

/// Angular sector a node can see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub node_id: u32,
    pub position: Point,
    /// Full circle when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<FieldOfView>,
    pub max_range: f64,
    #[serde(default)]
    pub pos_noise_sigma: f64,
    #[serde(default)]
    pub miss_rate_base: f64,
    /// Expected false positives per frame.
    #[serde(default)]
    pub fp_rate: f64,
    #[serde(default)]
    pub fp_outside_map_fraction: f64,
}

impl NodeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::config(format!("node {}: max_range must be > 0", self.node_id)));
        }
        let unit = [self.miss_rate_base, self.fp_outside_map_fraction];
        if unit.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config(format!(
                "node {}: rates must lie in [0, 1]",
                self.node_id
            )));
        }
        if !(self.fp_rate >= 0.0) || !(self.pos_noise_sigma >= 0.0) {
            return Err(Error::config(format!(
                "node {}: fp_rate and noise must be >= 0",
                self.node_id
            )));
        }
        Ok(())
    }

    /// Whether `p` lies inside this node's sensing sector and range.
    pub fn sees(&self, p: Point) -> bool {
        let dx = p[0] - self.position[0];
        let dy = p[1] - self.position[1];
        if dx.hypot(dy) > self.max_range {
            return false;
        }
        match self.fov {
            None => true,
            Some(fov) => normalize_yaw(dy.atan2(dx) - fov.center).abs() <= fov.width / 2.0,
        }
    }
}

/// Fraction of an object's points that reach a given node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub object_id: u32,
    pub node_id: u32,
    pub visible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    /// Minimum points for a detection.
    pub detect_threshold: f64,
    /// Range below which the full point budget is seen, metres.
    pub reference_range: f64,
    pub nms_iou: f64,
    pub fp_confidence: [f64; 2],
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            detect_threshold: 15.0,
            reference_range: 10.0,
            nms_iou: 0.3,
            fp_confidence: [0.1, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default = "default_anchors")]
    pub anchors: usize,
    #[serde(default = "default_interval")]
    pub anchor_interval: f64,
    pub objects: Vec<SceneObject>,
    pub nodes: Vec<NodeModel>,
    #[serde(default)]
    pub detection: DetectionParams,
    /// `[xmin, ymin, xmax, ymax]` where false positives may appear.
    pub fp_region: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<DrivableMap>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

fn default_anchors() -> usize {
    20
}

fn default_interval() -> f64 {
    100.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anchors == 0 || !(self.anchor_interval > 0.0) {
            return Err(Error::config("scenario needs anchors >= 1 and anchor_interval > 0"));
        }
        for n in &self.nodes {
            n.validate()?;
        }
        for o in &self.objects {
            if o.trajectory.waypoints.is_empty() {
                return Err(Error::config(format!("object {} has no waypoints", o.object_id)));
            }
            if o.footprint().iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config(format!(
                    "object {} has a degenerate footprint",
                    o.object_id
                )));
            }
        }
        for occ in &self.occlusions {
            if !(0.0..=1.0).contains(&occ.visible_fraction) {
                return Err(Error::config("visible_fraction must lie in [0, 1]"));
            }
        }
        let r = self.fp_region;
        if !(r[2] > r[0] && r[3] > r[1]) {
            return Err(Error::config(
                "fp_region must be [xmin, ymin, xmax, ymax] with positive extent",
            ));
        }
        if let Some(map) = &self.map {
            map.validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a full scenario description from a TOML file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    fn visible_fraction(&self, object_id: u32, node_id: u32) -> f64 {
        self.occlusions
            .iter()
            .find(|o| o.object_id == object_id && o.node_id == node_id)
            .map_or(1.0, |o| o.visible_fraction)
    }

    /// Points from `obj` that reach `node`; zero outside its sector or range.
    pub fn visible_points(&self, obj: &TruthObject, node: &NodeModel) -> f64 {
        if !node.sees(obj.bbox.center) {
            return 0.0;
        }
        let r = (obj.bbox.center[0] - node.position[0]).hypot(obj.bbox.center[1] - node.position[1]);
        let r_ref = self.detection.reference_range;
        obj.base_points * (r_ref / r.max(r_ref)).powi(2) * self.visible_fraction(obj.object_id, node.node_id)
    }

    pub fn confidence_for(&self, points: f64) -> f64 {
        (points / (2.0 * self.detection.detect_threshold)).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthObject {
    pub object_id: u32,
    pub bbox: OrientedBox,
    pub height: f64,
    pub class_label: ClassLabel,
    pub velocity: [f64; 2],
    pub base_points: f64,
}

impl TruthObject {
    pub fn to_detection(&self, timestamp: f64) -> Detection {
        Detection {
            position: self.bbox.center,
            yaw: self.bbox.yaw,
            size: [self.bbox.length, self.bbox.width, self.height],
            velocity: Some(self.velocity),
            class_label: self.class_label,
            confidence: 1.0,
            node_id: 0,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub anchor_time: f64,
    pub objects: Vec<TruthObject>,
}

/// Samples every object's pose at each anchor.
pub fn generate_scene(config: &ScenarioConfig, seed: u64) -> Result<Vec<FrameTruth>> {
    config.validate()?;
    let mut rng = rng::substream(seed, &[0x5343_454E]);
    let offsets: Vec<f64> = config
        .objects
        .iter()
        .map(|o| {
            let t = &o.trajectory;
            if t.random_start {
                rng.random_range(0.0..t.length().max(f64::MIN_POSITIVE))
            } else {
                t.start_offset
            }
        })
        .collect();

    Ok((0..config.anchors)
        .map(|k| {
            let anchor_time = k as f64 * config.anchor_interval;
            let objects = config
                .objects
                .iter()
                .zip(&offsets)
                .map(|(o, &offset)| {
                    let pose = o.trajectory.pose_at(anchor_time, offset);
                    let [l, w, h] = o.footprint();
                    TruthObject {
                        object_id: o.object_id,
                        bbox: OrientedBox::new(pose.position, l, w, pose.yaw),
                        height: h,
                        class_label: o.class_label,
                        velocity: pose.velocity,
                        base_points: o.base_points(),
                    }
                })
                .collect();
            FrameTruth { anchor_time, objects }
        })
        .collect())
}

/// Independent RNG substreams for one frame, keyed by purpose and node.
#[derive(Debug, Clone, Copy)]
pub struct FrameStreams {
    pub seed: u64,
    pub frame: u64,
}

const EARLY_STREAM: u64 = u64::MAX;

impl FrameStreams {
    pub fn new(seed: u64, frame: u64) -> Self {
        FrameStreams { seed, frame }
    }

    /// Miss and localisation-noise draws for one node's detector.
    pub fn detection(&self, node_id: u32) -> ChaCha8Rng {
        rng::substream(self.seed, &[self.frame, 1, node_id as u64])
    }

    /// Miss and noise draws for the pooled early-fusion detector.
    pub fn early(&self) -> ChaCha8Rng {
        rng::substream(self.seed, &[self.frame, 1, EARLY_STREAM])
    }

    /// Clutter (false positive) draws for one node.
    pub fn clutter(&self, node_id: u32) -> ChaCha8Rng {
        rng::substream(self.seed, &[self.frame, 2, node_id as u64])
    }
}

fn noisy(p: Point, sigma: f64, rng: &mut ChaCha8Rng) -> Point {
    if sigma == 0.0 {
        return p;
    }
    let n = Normal::new(0.0, sigma).expect("sigma validated >= 0");
    [p[0] + n.sample(rng), p[1] + n.sample(rng)]
}

fn sample_in(region: [f64; 4], rng: &mut ChaCha8Rng) -> Point {
    [
        rng.random_range(region[0]..region[2]),
        rng.random_range(region[1]..region[3]),
    ]
}

/// Node-specific false positives for one frame.
pub fn false_positives(
    frame: &FrameTruth,
    node: &NodeModel,
    config: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Detection> {
    if node.fp_rate <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(node.fp_rate).expect("fp_rate validated > 0").sample(rng) as usize;
    let [clo, chi] = config.detection.fp_confidence;
    (0..count)
        .map(|_| {
            let class = ClassLabel::ALL[rng.random_range(0..ClassLabel::ALL.len())];
            let outside = rng.random::<f64>() < node.fp_outside_map_fraction;
            let mut pos = sample_in(config.fp_region, rng);
            if let Some(map) = &config.map {
                // bounded rejection sampling; falls back to the last draw
                for _ in 0..1000 {
                    if in_drivable_area(pos, map) != outside {
                        break;
                    }
                    pos = sample_in(config.fp_region, rng);
                }
            }
            let size = class.default_size();
            Detection {
                position: pos,
                yaw: rng.random_range(-PI..PI),
                size,
                velocity: None,
                class_label: class,
                confidence: rng.random_range(clo..=chi),
                node_id: node.node_id,
                timestamp: frame.anchor_time,
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn detect_object(
    obj: &TruthObject,
    points: f64,
    miss_rate: f64,
    noise: f64,
    node_id: u32,
    config: &ScenarioConfig,
    timestamp: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Detection> {
    if points < config.detection.detect_threshold {
        return None;
    }
    if rng.random::<f64>() < miss_rate {
        return None;
    }
    let position = noisy(obj.bbox.center, noise, rng);
    Some(Detection {
        position,
        yaw: obj.bbox.yaw,
        size: [obj.bbox.length, obj.bbox.width, obj.height],
        velocity: Some(obj.velocity),
        class_label: obj.class_label,
        confidence: config.confidence_for(points),
        node_id,
        timestamp,
    })
}

/// One node's detections: true objects it resolves plus its clutter.
pub fn observe(
    frame: &FrameTruth,
    node: &NodeModel,
    config: &ScenarioConfig,
    streams: &FrameStreams,
) -> Vec<Detection> {
    let mut rng = streams.detection(node.node_id);
    let mut out: Vec<Detection> = frame
        .objects
        .iter()
        .filter_map(|obj| {
            let points = config.visible_points(obj, node);
            detect_object(
                obj,
                points,
                node.miss_rate_base,
                node.pos_noise_sigma,
                node.node_id,
                config,
                frame.anchor_time,
                &mut rng,
            )
        })
        .collect();
    out.extend(false_positives(frame, node, config, &mut streams.clutter(node.node_id)));
    out
}

/// Detector run once on the pooled point clouds of all nodes.
///
/// Miss probability is the product of the contributing nodes' miss rates and
/// localisation noise shrinks with the square root of their count. Output
/// passes through the same per-class NMS as late fusion.
pub fn early_fusion_detect(
    frame: &FrameTruth,
    nodes: &[NodeModel],
    config: &ScenarioConfig,
    streams: &FrameStreams,
) -> Vec<Detection> {
    if nodes.is_empty() {
        return Vec::new();
    }
    let mut rng = streams.early();
    let mut out = Vec::new();
    for obj in &frame.objects {
        let contrib: Vec<(&NodeModel, f64)> = nodes
            .iter()
            .map(|n| (n, config.visible_points(obj, n)))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        if contrib.is_empty() {
            continue;
        }
        let total: f64 = contrib.iter().map(|(_, p)| p).sum();
        let k = contrib.len() as f64;
        let miss: f64 = contrib.iter().map(|(n, _)| n.miss_rate_base).product();
        let noise = contrib.iter().map(|(n, _)| n.pos_noise_sigma).sum::<f64>() / k / k.sqrt();
        let reporter = contrib[0].0.node_id;
        if let Some(d) = detect_object(obj, total, miss, noise, reporter, config, frame.anchor_time, &mut rng) {
            out.push(d);
        }
    }
    for node in nodes {
        out.extend(false_positives(frame, node, config, &mut streams.clutter(node.node_id)));
    }
    suppress(out, config.detection.nms_iou)
}

/// Per-node detection followed by box-level NMS in the global frame.
pub fn late_fusion_detect(
    frame: &FrameTruth,
    nodes: &[NodeModel],
    iou_threshold: f64,
    config: &ScenarioConfig,
    streams: &FrameStreams,
) -> Vec<Detection> {
    let all: Vec<Detection> = nodes.iter().flat_map(|n| observe(frame, n, config, streams)).collect();
    suppress(all, iou_threshold)
}

/// Per-class NMS keeping survivors in input order.
pub fn suppress(dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    let cands: Vec<NmsCandidate> = dets
        .iter()
        .map(|d| NmsCandidate {
            bbox: d.bev_box(),
            confidence: d.confidence.clamp(0.0, 1.0),
            class: d.class_label,
        })
        .collect();
    let mut keep = nms(&cands, iou_threshold).expect("detections carry valid boxes");
    keep.sort_unstable();
    let mut dets: Vec<Option<Detection>> = dets.into_iter().map(Some).collect();
    keep.into_iter().filter_map(|i| dets[i].take()).collect()
}

pub fn apply_map_filter(dets: &[Detection], map: &DrivableMap) -> Vec<Detection> {
    dets.iter()
        .filter(|d| in_drivable_area(d.position, map))
        .cloned()
        .collect()
}

/// Points one frame would put on the wire under early fusion.
pub fn frame_point_count(frame: &FrameTruth, nodes: &[NodeModel], config: &ScenarioConfig) -> u64 {
    nodes
        .iter()
        .flat_map(|n| {
            frame
                .objects
                .iter()
                .map(move |o| config.visible_points(o, n).floor() as u64)
        })
        .sum()
}

fn circle(center: Point, radius: f64, n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let a = TAU * i as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

fn rect(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Vec<Point> {
    vec![[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]]
}

fn node(id: u32, position: Point, range: f64, noise: f64, miss: f64, fp: f64, outside: f64) -> NodeModel {
    NodeModel {
        node_id: id,
        position,
        fov: None,
        max_range: range,
        pos_noise_sigma: noise,
        miss_rate_base: miss,
        fp_rate: fp,
        fp_outside_map_fraction: outside,
    }
}

pub const CANNED: [&str; 3] = ["roundabout", "crossing", "occlusion_split"];

/// Built-in scenario families; `seed` varies placements within a family.
pub fn canned_scenario(name: &str, seed: u64) -> Result<ScenarioConfig> {
    let mut rng = rng::substream(seed, &[0x4341_4E4E]);
    let cfg = match name {
        "roundabout" => {
            let mut objects = Vec::new();
            // one lane per object so boxes never overlap
            for (i, (class, r)) in [
                (ClassLabel::Car, 12.0),
                (ClassLabel::Car, 15.0),
                (ClassLabel::Bus, 18.5),
            ]
            .into_iter()
            .enumerate()
            {
                let mut t = Trajectory::linear(circle([0.0, 0.0], r, 36), 6.0);
                t.looped = true;
                t.random_start = true;
                objects.push(SceneObject::new(i as u32, class, t));
            }
            let arm = rng.random_range(0..4) as f64 * PI / 2.0;
            let (c, s) = (arm.cos(), arm.sin());
            objects.push(SceneObject::new(
                3,
                ClassLabel::Truck,
                Trajectory::linear(vec![[55.0 * c, 55.0 * s], [28.0 * c, 28.0 * s]], 7.0),
            ));
            let side = rng.random_range(0.5..3.0);
            objects.push(SceneObject::new(
                4,
                ClassLabel::Person,
                Trajectory::linear(vec![[-4.0, 30.0 + side], [4.0, 30.0 + side]], 1.4),
            ));
            objects.push(SceneObject::new(
                5,
                ClassLabel::Bicycle,
                Trajectory::linear(vec![[30.0 + side, -3.0], [50.0, -3.0]], 4.0),
            ));
            let mut polygons = vec![Ring::new(circle([0.0, 0.0], 25.0, 48))];
            polygons.push(Ring::new(rect(-6.0, 20.0, 6.0, 60.0)));
            polygons.push(Ring::new(rect(-6.0, -60.0, 6.0, -20.0)));
            polygons.push(Ring::new(rect(20.0, -6.0, 60.0, 6.0)));
            polygons.push(Ring::new(rect(-60.0, -6.0, -20.0, 6.0)));
            let holes = vec![Ring::new(circle([0.0, 0.0], 8.0, 24))];
            ScenarioConfig {
                scenario: name.into(),
                anchors: 30,
                anchor_interval: 100.0,
                objects,
                nodes: vec![
                    node(0, [28.0, 28.0], 70.0, 0.15, 0.05, 0.5, 0.6),
                    node(1, [-28.0, 28.0], 70.0, 0.15, 0.05, 0.5, 0.6),
                    node(2, [-28.0, -28.0], 70.0, 0.15, 0.05, 0.5, 0.6),
                    node(3, [28.0, -28.0], 70.0, 0.15, 0.05, 0.5, 0.6),
                    node(4, [0.0, 37.0], 70.0, 0.15, 0.05, 0.5, 0.6),
                    node(5, [40.0, 4.0], 70.0, 0.15, 0.05, 0.5, 0.6),
                ],
                detection: DetectionParams::default(),
                fp_region: [-70.0, -70.0, 70.0, 70.0],
                map: Some(DrivableMap::new(polygons, holes)?),
                occlusions: Vec::new(),
            }
        }
        "crossing" => {
            let y0 = rng.random_range(-2.5..2.5);
            let objects = vec![
                SceneObject::new(
                    0,
                    ClassLabel::Car,
                    Trajectory::linear(vec![[-50.0, -3.0], [50.0, -3.0]], 8.0),
                ),
                SceneObject::new(
                    1,
                    ClassLabel::Car,
                    Trajectory::linear(vec![[45.0, 3.0], [-50.0, 3.0]], 7.0),
                ),
                SceneObject::new(
                    2,
                    ClassLabel::Person,
                    Trajectory::linear(vec![[0.0, -9.0], [0.0, 9.0]], 1.3),
                ),
                SceneObject::new(
                    3,
                    ClassLabel::Person,
                    Trajectory::linear(vec![[1.5, 9.0], [1.5, -9.0]], 1.1),
                ),
                SceneObject::new(
                    4,
                    ClassLabel::Bicycle,
                    Trajectory::linear(vec![[-20.0, y0], [30.0, y0]], 5.0),
                ),
                SceneObject::new(5, ClassLabel::Truck, Trajectory::stationary([25.0, 3.0], PI)),
            ];
            let polygons = vec![
                Ring::new(rect(-60.0, -6.0, 60.0, 6.0)),
                Ring::new(rect(-3.0, -10.0, 3.0, 10.0)),
            ];
            ScenarioConfig {
                scenario: name.into(),
                anchors: 30,
                anchor_interval: 100.0,
                objects,
                nodes: vec![
                    node(0, [-8.0, 8.0], 60.0, 0.1, 0.05, 0.5, 0.6),
                    node(1, [8.0, -8.0], 60.0, 0.1, 0.05, 0.5, 0.6),
                ],
                detection: DetectionParams::default(),
                fp_region: [-60.0, -30.0, 60.0, 30.0],
                map: Some(DrivableMap::new(polygons, Vec::new())?),
                occlusions: Vec::new(),
            }
        }
        "occlusion_split" => {
            // the person stays within reference range of both nodes, so each
            // node sees exactly base_points * fraction
            let px = rng.random_range(-2.0..2.0);
            let py = rng.random_range(-4.0..4.0);
            let car_x = rng.random_range(-25.0..25.0);
            let truck_x = rng.random_range(-25.0..25.0);
            let objects = vec![
                SceneObject::new(0, ClassLabel::Person, Trajectory::stationary([px, py], 0.0)),
                SceneObject::new(1, ClassLabel::Car, Trajectory::stationary([car_x, 5.0], 0.0)),
                SceneObject::new(2, ClassLabel::Truck, Trajectory::stationary([truck_x, -5.0], PI)),
            ];
            ScenarioConfig {
                scenario: name.into(),
                anchors: 10,
                anchor_interval: 100.0,
                objects,
                nodes: vec![
                    node(0, [-6.0, 0.0], 60.0, 0.0, 0.0, 0.5, 0.5),
                    node(1, [6.0, 0.0], 60.0, 0.0, 0.0, 0.5, 0.5),
                ],
                detection: DetectionParams::default(),
                fp_region: [-40.0, -30.0, 40.0, 30.0],
                map: Some(DrivableMap::new(
                    vec![Ring::new(rect(-40.0, -9.0, 40.0, 9.0))],
                    Vec::new(),
                )?),
                occlusions: vec![
                    Occlusion {
                        object_id: 0,
                        node_id: 0,
                        visible_fraction: 8.0 / 21.0,
                    },
                    Occlusion {
                        object_id: 0,
                        node_id: 1,
                        visible_fraction: 9.0 / 21.0,
                    },
                ],
            }
        }
        other => return Err(Error::config(format!("unknown scenario `{other}`"))),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Same scene with every noise source disabled.
    pub fn noiseless(mut self) -> Self {
        for n in &mut self.nodes {
            n.pos_noise_sigma = 0.0;
            n.miss_rate_base = 0.0;
            n.fp_rate = 0.0;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(class: ClassLabel, at: Point, node_at: Point) -> ScenarioConfig {
        ScenarioConfig {
            scenario: "custom".into(),
            anchors: 5,
            anchor_interval: 100.0,
            objects: vec![SceneObject::new(0, class, Trajectory::stationary(at, 0.0))],
            nodes: vec![node(0, node_at, 100.0, 0.0, 0.0, 0.0, 0.0)],
            detection: DetectionParams::default(),
            fp_region: [-100.0, -100.0, 100.0, 100.0],
            map: None,
            occlusions: Vec::new(),
        }
    }

    #[test]
    fn static_car_identical_frames() {
        let frames = generate_scene(&single(ClassLabel::Car, [3.0, 4.0], [0.0, 0.0]), 1).unwrap();
        assert_eq!(frames.len(), 5);
        assert!(frames.windows(2).all(|w| w[0].objects == w[1].objects));
    }

    #[test]
    fn constant_speed_advances_half_metre() {
        let mut cfg = single(ClassLabel::Car, [0.0, 0.0], [0.0, 0.0]);
        cfg.objects[0].trajectory = Trajectory::linear(vec![[0.0, 0.0], [100.0, 0.0]], 5.0);
        let frames = generate_scene(&cfg, 1).unwrap();
        for (k, f) in frames.iter().enumerate() {
            assert!((f.objects[0].bbox.center[0] - 0.5 * k as f64).abs() < 1e-12);
            assert_eq!(f.objects[0].velocity, [5.0, 0.0]);
        }
    }

    #[test]
    fn canned_scenes_deterministic() {
        for name in CANNED {
            let a = generate_scene(&canned_scenario(name, 3).unwrap(), 3).unwrap();
            let b = generate_scene(&canned_scenario(name, 3).unwrap(), 3).unwrap();
            assert_eq!(a, b, "{name}");
        }
        assert!(canned_scenario("highway", 0).is_err());
    }

    #[test]
    fn bus_always_detected_person_far_never() {
        let cfg = single(ClassLabel::Bus, [10.0, 0.0], [0.0, 0.0]);
        let frames = generate_scene(&cfg, 0).unwrap();
        for seed in 0..20 {
            let d = observe(&frames[0], &cfg.nodes[0], &cfg, &FrameStreams::new(seed, 0));
            assert_eq!(d.len(), 1);
            assert_eq!(d[0].confidence, 1.0);
        }
        let cfg = single(ClassLabel::Person, [40.0, 0.0], [0.0, 0.0]);
        let frames = generate_scene(&cfg, 0).unwrap();
        // 21 * (10 / 40)^2 = 1.3125 points
        assert!((cfg.visible_points(&frames[0].objects[0], &cfg.nodes[0]) - 1.3125).abs() < 1e-12);
        for seed in 0..20 {
            assert!(observe(&frames[0], &cfg.nodes[0], &cfg, &FrameStreams::new(seed, 0)).is_empty());
        }
    }

    #[test]
    fn noiseless_observation_is_truth() {
        let cfg = canned_scenario("crossing", 1).unwrap().noiseless();
        let frames = generate_scene(&cfg, 1).unwrap();
        let f = &frames[7];
        let dets = observe(f, &cfg.nodes[0], &cfg, &FrameStreams::new(1, 7));
        for d in &dets {
            let truth = f
                .objects
                .iter()
                .find(|o| o.bbox.center == d.position)
                .expect("exact match");
            assert_eq!(truth.class_label, d.class_label);
            assert_eq!(d.size[0], truth.bbox.length);
        }
        let visible = f
            .objects
            .iter()
            .filter(|o| cfg.visible_points(o, &cfg.nodes[0]) >= cfg.detection.detect_threshold)
            .count();
        assert_eq!(dets.len(), visible);
    }

    #[test]
    fn fov_sector() {
        let mut n = node(0, [0.0, 0.0], 50.0, 0.0, 0.0, 0.0, 0.0);
        n.fov = Some(FieldOfView {
            center: 0.0,
            width: PI / 2.0,
        });
        assert!(n.sees([10.0, 1.0]));
        assert!(!n.sees([-10.0, 0.0]));
        assert!(!n.sees([60.0, 0.0]));
    }

    #[test]
    fn split_object_needs_pooling() {
        let cfg = canned_scenario("occlusion_split", 0).unwrap().noiseless();
        let frames = generate_scene(&cfg, 0).unwrap();
        let f = &frames[0];
        let person = &f.objects[0];
        let a = cfg.visible_points(person, &cfg.nodes[0]);
        let b = cfg.visible_points(person, &cfg.nodes[1]);
        assert!((a - 8.0).abs() < 1e-9 && (b - 9.0).abs() < 1e-9);
        let streams = FrameStreams::new(0, 0);
        let early = early_fusion_detect(f, &cfg.nodes, &cfg, &streams);
        let late = late_fusion_detect(f, &cfg.nodes, 0.3, &cfg, &streams);
        assert!(early.iter().any(|d| d.class_label == ClassLabel::Person));
        assert!(!late.iter().any(|d| d.class_label == ClassLabel::Person));
    }

    #[test]
    fn single_node_early_equals_observe() {
        let mut cfg = canned_scenario("crossing", 2).unwrap();
        cfg.nodes.truncate(1);
        cfg.nodes[0].pos_noise_sigma = 0.0;
        cfg.nodes[0].miss_rate_base = 0.0;
        let frames = generate_scene(&cfg, 2).unwrap();
        for (k, f) in frames.iter().enumerate() {
            let s = FrameStreams::new(2, k as u64);
            let early = early_fusion_detect(f, &cfg.nodes, &cfg, &s);
            let single = suppress(observe(f, &cfg.nodes[0], &cfg, &s), cfg.detection.nms_iou);
            assert_eq!(early, single);
        }
        assert!(early_fusion_detect(&frames[0], &[], &cfg, &FrameStreams::new(0, 0)).is_empty());
    }

    #[test]
    fn late_fusion_dedups_shared_object() {
        let mut cfg = single(ClassLabel::Car, [0.0, 0.0], [10.0, 0.0]);
        cfg.nodes.push(node(1, [-10.0, 0.0], 100.0, 0.0, 0.0, 0.0, 0.0));
        cfg.nodes.push(node(2, [0.0, 10.0], 100.0, 0.0, 0.0, 0.0, 0.0));
        let frames = generate_scene(&cfg, 0).unwrap();
        let late = late_fusion_detect(&frames[0], &cfg.nodes, 0.3, &cfg, &FrameStreams::new(0, 0));
        assert_eq!(late.len(), 1);
    }

    #[test]
    fn disjoint_objects_all_retained() {
        let mut cfg = single(ClassLabel::Car, [0.0, 0.0], [5.0, 0.0]);
        cfg.objects.push(SceneObject::new(
            1,
            ClassLabel::Car,
            Trajectory::stationary([200.0, 0.0], 0.0),
        ));
        cfg.nodes[0].max_range = 50.0;
        cfg.nodes.push(node(1, [195.0, 0.0], 50.0, 0.0, 0.0, 0.0, 0.0));
        let frames = generate_scene(&cfg, 0).unwrap();
        let late = late_fusion_detect(&frames[0], &cfg.nodes, 0.3, &cfg, &FrameStreams::new(0, 0));
        assert_eq!(late.len(), 2);
        assert_ne!(late[0].node_id, late[1].node_id);
    }

    #[test]
    fn clutter_respects_map_fraction() {
        let cfg = canned_scenario("occlusion_split", 5).unwrap();
        let map = cfg.map.clone().unwrap();
        let mut outside = 0;
        let mut total = 0;
        for k in 0..200 {
            let f = FrameTruth {
                anchor_time: 0.0,
                objects: Vec::new(),
            };
            let fps = false_positives(&f, &cfg.nodes[0], &cfg, &mut FrameStreams::new(5, k).clutter(0));
            total += fps.len();
            outside += fps.iter().filter(|d| !in_drivable_area(d.position, &map)).count();
        }
        let frac = outside as f64 / total as f64;
        assert!(total > 50 && (frac - 0.5).abs() < 0.15, "{outside}/{total}");
        let filtered_all_inside = apply_map_filter(
            &[
                Detection {
                    position: [0.0, 0.0],
                    ..false_positives_probe()
                },
                Detection {
                    position: [0.0, 20.0],
                    ..false_positives_probe()
                },
            ],
            &map,
        );
        assert_eq!(filtered_all_inside.len(), 1);
    }

    fn false_positives_probe() -> Detection {
        Detection {
            position: [0.0, 0.0],
            yaw: 0.0,
            size: [1.0, 1.0, 1.0],
            velocity: None,
            class_label: ClassLabel::Car,
            confidence: 0.5,
            node_id: 0,
            timestamp: 0.0,
        }
    }

    #[test]
    fn looped_path_wraps() {
        let mut t = Trajectory::linear(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]], 10.0);
        t.looped = true;
        assert_eq!(t.length(), 40.0);
        let p = t.pose_at(4500.0, 0.0);
        assert!((p.position[0] - 5.0).abs() < 1e-12 && p.position[1].abs() < 1e-12);
        let end = Trajectory::linear(vec![[0.0, 0.0], [1.0, 0.0]], 1.0).pose_at(5000.0, 0.0);
        assert_eq!(end.position, [1.0, 0.0]);
        assert_eq!(end.velocity, [0.0, 0.0]);
    }
}
