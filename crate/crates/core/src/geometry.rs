//! Oriented boxes and polygons in the global bird's-eye-view plane.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::ClassLabel;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: Point, length: f64, width: f64, yaw: f64) -> Self {
        OrientedBox {
            center,
            length,
            width,
            yaw,
        }
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length > 0.0
            && self.width > 0.0
            && self.length.is_finite()
            && self.width.is_finite()
            && self.center.iter().all(|v| v.is_finite())
            && self.yaw.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("degenerate box {self:?}")))
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
            .map(|(dx, dy)| [self.center[0] + c * dx - s * dy, self.center[1] + s * dx + c * dy])
    }

    /// Closed containment test in the box's own frame.
    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        (c * dx + s * dy).abs() <= self.length / 2.0 && (-s * dx + c * dy).abs() <= self.width / 2.0
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Sutherland-Hodgman clip of `subject` against the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(e0, e1, cur) >= 0.0;
            let prev_in = cross(e0, e1, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, e0, e1));
                }
                output.push(cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, e0, e1));
            }
        }
    }
    output
}

fn segment_line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    signed_area(&clip_convex(&a.corners(), &b.corners())).abs()
}

/// Intersection over union of two oriented boxes.
pub fn oriented_iou(a: &OrientedBox, b: &OrientedBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    // cheap reject on circumscribed circles
    let ra = a.length.hypot(a.width) / 2.0;
    let rb = b.length.hypot(b.width) / 2.0;
    let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
    if d > ra + rb {
        return Ok(0.0);
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsCandidate {
    pub bbox: OrientedBox,
    pub confidence: f64,
    pub class: ClassLabel,
}

/// Greedy per-class non-maximum suppression.
///
/// Returns indices of kept candidates in decreasing confidence order; equal
/// confidences keep input order.
pub fn nms(candidates: &[NmsCandidate], iou_threshold: f64) -> Result<Vec<usize>> {
    for c in candidates {
        if !(0.0..=1.0).contains(&c.confidence) {
            return Err(Error::input(format!("confidence {} outside [0, 1]", c.confidence)));
        }
        c.bbox.validate()?;
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        candidates[j]
            .confidence
            .total_cmp(&candidates[i].confidence)
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let c = &candidates[i];
        let suppressed = kept.iter().any(|&k| {
            let other = &candidates[k];
            other.class == c.class && oriented_iou(&other.bbox, &c.bbox).unwrap_or(0.0) >= iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub vertices: Vec<Point>,
}

impl Ring {
    pub fn new(vertices: Vec<Point>) -> Self {
        Ring { name: None, vertices }
    }
}

/// Valid-region prior: union of outer rings minus holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivableMap {
    pub polygons: Vec<Ring>,
    #[serde(default)]
    pub holes: Vec<Ring>,
}

impl DrivableMap {
    pub fn new(polygons: Vec<Ring>, holes: Vec<Ring>) -> Result<Self> {
        let map = DrivableMap { polygons, holes };
        map.validate()?;
        Ok(map)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let map: DrivableMap = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        map.validate()?;
        Ok(map)
    }

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

    pub fn validate(&self) -> Result<()> {
        for ring in self.polygons.iter().chain(&self.holes) {
            validate_ring(&ring.vertices)?;
        }
        Ok(())
    }

    /// Axis-aligned bounds of all outer rings as `[xmin, ymin, xmax, ymax]`.
    pub fn bounds(&self) -> Option<[f64; 4]> {
        let mut it = self.polygons.iter().flat_map(|r| r.vertices.iter());
        let first = *it.next()?;
        Some(it.fold([first[0], first[1], first[0], first[1]], |b, p| {
            [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])]
        }))
    }
}

fn validate_ring(ring: &[Point]) -> Result<()> {
    if ring.len() < 3 {
        return Err(Error::input("ring needs at least 3 vertices"));
    }
    if ring.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::input("ring has non-finite vertex"));
    }
    if signed_area(ring).abs() < 1e-12 {
        return Err(Error::input("ring has zero area"));
    }
    let n = ring.len();
    for i in 0..n {
        for j in (i + 1)..n {
            // skip edges sharing a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return Err(Error::input("ring is self-intersecting"));
            }
        }
    }
    Ok(())
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let scale = 1e-12 * (1.0 + a[0].abs().max(a[1].abs()).max(b[0].abs()).max(b[1].abs()));
    cross(a, b, p).abs() <= scale * (b[0] - a[0]).hypot(b[1] - a[1]).max(1.0)
        && p[0] >= a[0].min(b[0]) - scale
        && p[0] <= a[0].max(b[0]) + scale
        && p[1] >= a[1].min(b[1]) - scale
        && p[1] <= a[1].max(b[1]) + scale
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

/// Even-odd ray casting; points on the boundary count as inside.
pub fn point_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn point_strictly_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    if (0..n).any(|i| on_segment(p, ring[i], ring[(i + 1) % n])) {
        return false;
    }
    point_in_ring(p, ring)
}

pub fn in_drivable_area(p: Point, map: &DrivableMap) -> bool {
    map.polygons.iter().any(|r| point_in_ring(p, &r.vertices))
        && !map.holes.iter().any(|h| point_strictly_in_ring(p, &h.vertices))
}

pub const BYTES_PER_FLOAT: u64 = 4;

/// Raw point-cloud payload: x, y, z per point.
pub fn bandwidth_early(num_points: u64) -> u64 {
    num_points * 3 * BYTES_PER_FLOAT
}

/// Box payload: 7 floats of pose and size, one byte class, one byte id.
pub fn bandwidth_late(num_objects: u64) -> u64 {
    num_objects * (7 * BYTES_PER_FLOAT + 2)
}
