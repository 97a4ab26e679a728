//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use anchorsync::geometry::{OrientedBox, Point};
use rand::Rng;

struct Frame {
    c: Point,
    cos: f64,
    sin: f64,
    hl: f64,
    hw: f64,
}

impl Frame {
    fn of(b: &OrientedBox) -> Self {
        Frame {
            c: b.center,
            cos: b.yaw.cos(),
            sin: b.yaw.sin(),
            hl: b.length / 2.0,
            hw: b.width / 2.0,
        }
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let dx = x - self.c[0];
        let dy = y - self.c[1];
        (self.cos * dx + self.sin * dy).abs() <= self.hl && (self.cos * dy - self.sin * dx).abs() <= self.hw
    }

    /// Axis-aligned bounds from the half extents.
    fn aabb(&self) -> [f64; 4] {
        let ex = self.hl * self.cos.abs() + self.hw * self.sin.abs();
        let ey = self.hl * self.sin.abs() + self.hw * self.cos.abs();
        [self.c[0] - ex, self.c[1] - ey, self.c[0] + ex, self.c[1] + ey]
    }
}

/// IoU from an `n x n` midpoint grid over the overlap of the two bounding boxes.
pub fn grid_iou(a: &OrientedBox, b: &OrientedBox, n: usize) -> f64 {
    let (fa, fb) = (Frame::of(a), Frame::of(b));
    let (ra, rb) = (fa.aabb(), fb.aabb());
    let r = [ra[0].max(rb[0]), ra[1].max(rb[1]), ra[2].min(rb[2]), ra[3].min(rb[3])];
    let inter = if r[2] <= r[0] || r[3] <= r[1] {
        0.0
    } else {
        let (dx, dy) = ((r[2] - r[0]) / n as f64, (r[3] - r[1]) / n as f64);
        let mut hits = 0usize;
        for i in 0..n {
            let x = r[0] + (i as f64 + 0.5) * dx;
            for j in 0..n {
                let y = r[1] + (j as f64 + 0.5) * dy;
                if fa.inside(x, y) && fb.inside(x, y) {
                    hits += 1;
                }
            }
        }
        hits as f64 * dx * dy
    };
    inter / (a.length * a.width + b.length * b.width - inter)
}

pub fn random_box<R: Rng>(rng: &mut R, spread: f64) -> OrientedBox {
    OrientedBox::new(
        [rng.random_range(-spread..spread), rng.random_range(-spread..spread)],
        rng.random_range(0.5..5.0),
        rng.random_range(0.3..3.0),
        rng.random_range(-PI..PI),
    )
}

/// Winding number of `ring` around `p` (non-zero means inside).
pub fn winding_number(p: Point, ring: &[Point]) -> i32 {
    let mut wn = 0;
    for i in 0..ring.len() {
        let a = ring[i];
        let b = ring[(i + 1) % ring.len()];
        let side = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && side > 0.0 {
                wn += 1;
            }
        } else if b[1] <= p[1] && side < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Simple star-shaped polygon around the origin with `n` vertices.
pub fn star_polygon<R: Rng>(rng: &mut R, n: usize) -> Vec<Point> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    angles
        .into_iter()
        .map(|a| {
            let r = rng.random_range(1.0..10.0);
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

/// Standard normal CDF by composite Simpson integration of the density.
pub fn phi(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - phi(-z);
    }
    let steps = 20_000;
    let h = z / steps as f64;
    let pdf = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
    let mut s = pdf(0.0) + pdf(z);
    for k in 1..steps {
        s += pdf(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    0.5 + s * h / 3.0
}

/// Box-Muller standard normal draw.
pub fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Largest distance between the empirical CDF of `xs` and Uniform(lo, hi).
pub fn ks_uniform(xs: &[f64], lo: f64, hi: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Parses a CSV written by the experiment runner into a header and rows.
pub fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().expect("header").split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

pub fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter()
        .map(|r| match r[i].as_str() {
            "true" => 1.0,
            "false" => 0.0,
            v => v.parse().unwrap_or_else(|_| panic!("{name}: {v}")),
        })
        .collect()
}
