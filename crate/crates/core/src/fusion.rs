//! Cross-node fusion of BEV detections at one anchor.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{OrientedBox, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Car,
    Bus,
    Truck,
    Person,
    Bicycle,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Car,
        ClassLabel::Bus,
        ClassLabel::Truck,
        ClassLabel::Person,
        ClassLabel::Bicycle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Car => "car",
            ClassLabel::Bus => "bus",
            ClassLabel::Truck => "truck",
            ClassLabel::Person => "person",
            ClassLabel::Bicycle => "bicycle",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::input(format!("unknown class `{s}`")))
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_yaw(yaw: f64) -> f64 {
    let mut a = yaw.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// One oriented BEV box reported by a node, in the global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub position: Point,
    pub yaw: f64,
    /// length, width, height
    pub size: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    pub class_label: ClassLabel,
    pub confidence: f64,
    pub node_id: u32,
    /// milliseconds
    pub timestamp: f64,
}

impl Detection {
    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(self.position, self.size[0], self.size[1], self.yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedObject {
    pub position: Point,
    pub yaw: f64,
    pub size: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 2]>,
    pub class_label: ClassLabel,
    pub timestamp: f64,
    pub contributing_nodes: BTreeSet<u32>,
    pub fused_confidence: f64,
}

/// Extrapolates a detection to `target_time` under constant velocity.
///
/// Without a velocity only the timestamp moves. Targets earlier than the
/// detection are treated as zero delay.
pub fn motion_correct(det: &Detection, target_time: f64) -> Detection {
    let dt_s = (target_time - det.timestamp).max(0.0) / 1000.0;
    let mut out = det.clone();
    if let Some([vx, vy]) = det.velocity {
        out.position = [det.position[0] + vx * dt_s, det.position[1] + vy * dt_s];
    }
    out.timestamp = det.timestamp.max(target_time);
    out
}

struct Clusters {
    parent: Vec<usize>,
    nodes: Vec<BTreeSet<u32>>,
}

impl Clusters {
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Merges unless the two clusters already share a node.
    fn try_union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb || !self.nodes[ra].is_disjoint(&self.nodes[rb]) {
            return;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop] = keep;
        let moved = std::mem::take(&mut self.nodes[drop]);
        self.nodes[keep].extend(moved);
    }
}

/// Greedy nearest-neighbour clustering of per-node detections followed by a
/// confidence-weighted merge of each cluster.
///
/// Pairs from different nodes with the same class and centre distance within
/// `gate` are linked in ascending distance; a cluster never holds two
/// detections from the same node. Ties break on `(node_id, index)`.
pub fn associate_and_fuse(per_node: &[Vec<Detection>], gate: f64) -> Vec<FusedObject> {
    let mut flat: Vec<(u32, usize, &Detection)> = per_node
        .iter()
        .flat_map(|list| list.iter().enumerate().map(|(i, d)| (d.node_id, i, d)))
        .collect();
    flat.sort_by_key(|&(node, i, _)| (node, i));

    let mut pairs = Vec::new();
    for i in 0..flat.len() {
        for j in (i + 1)..flat.len() {
            let (a, b) = (flat[i].2, flat[j].2);
            if a.node_id == b.node_id || a.class_label != b.class_label {
                continue;
            }
            let d = (a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]);
            if d <= gate {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut clusters = Clusters {
        parent: (0..flat.len()).collect(),
        nodes: flat.iter().map(|f| BTreeSet::from([f.0])).collect(),
    };
    for (_, i, j) in pairs {
        clusters.try_union(i, j);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); flat.len()];
    for i in 0..flat.len() {
        let root = clusters.find(i);
        members[root].push(i);
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| fuse_cluster(&m.iter().map(|&i| flat[i].2).collect::<Vec<_>>()))
        .collect()
}

fn fuse_cluster(dets: &[&Detection]) -> FusedObject {
    let total: f64 = dets.iter().map(|d| d.confidence).sum();
    let weights: Vec<f64> = if total > 0.0 {
        dets.iter().map(|d| d.confidence / total).collect()
    } else {
        vec![1.0 / dets.len() as f64; dets.len()]
    };
    let wmean = |f: &dyn Fn(&Detection) -> f64| -> f64 { dets.iter().zip(&weights).map(|(d, w)| w * f(d)).sum() };

    let (sin, cos) = (wmean(&|d| d.yaw.sin()), wmean(&|d| d.yaw.cos()));
    let yaw = if sin == 0.0 && cos == 0.0 {
        dets[0].yaw
    } else {
        sin.atan2(cos)
    };

    let with_vel: Vec<(f64, [f64; 2])> = dets
        .iter()
        .zip(&weights)
        .filter_map(|(d, &w)| d.velocity.map(|v| (w, v)))
        .collect();
    let velocity = if with_vel.is_empty() {
        None
    } else {
        let wsum: f64 = with_vel.iter().map(|(w, _)| w).sum();
        let n = with_vel.len() as f64;
        let norm = |w: f64| if wsum > 0.0 { w / wsum } else { 1.0 / n };
        Some([
            with_vel.iter().map(|(w, v)| norm(*w) * v[0]).sum(),
            with_vel.iter().map(|(w, v)| norm(*w) * v[1]).sum(),
        ])
    };

    let miss: f64 = dets.iter().map(|d| 1.0 - d.confidence.clamp(0.0, 1.0)).product();
    FusedObject {
        position: [wmean(&|d| d.position[0]), wmean(&|d| d.position[1])],
        yaw: normalize_yaw(yaw),
        size: [wmean(&|d| d.size[0]), wmean(&|d| d.size[1]), wmean(&|d| d.size[2])],
        velocity,
        class_label: dets[0].class_label,
        timestamp: dets.iter().map(|d| d.timestamp).fold(f64::NEG_INFINITY, f64::max),
        contributing_nodes: dets.iter().map(|d| d.node_id).collect(),
        fused_confidence: (1.0 - miss).min(1.0),
    }
}
