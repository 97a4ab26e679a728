//! Small descriptive-statistics helpers shared by the metric and experiment code.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
}

impl SampleStats {
    /// Summary of `values`; all fields NaN when empty.
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return SampleStats {
                count: 0,
                mean: f64::NAN,
                std: f64::NAN,
                p50: f64::NAN,
                p99: f64::NAN,
                max: f64::NAN,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        SampleStats {
            count: values.len(),
            mean: mean(values),
            std: std_dev(values),
            p50: percentile_sorted(&sorted, 50.0),
            p99: percentile_sorted(&sorted, 99.0),
            max: *sorted.last().unwrap(),
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Kolmogorov-Smirnov distance between `samples` and Uniform(lo, hi).
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<u64>,
    /// Samples outside `[lo, lo + width * counts.len())`.
    pub out_of_range: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, width: f64) -> Self {
        let bins = ((hi - lo) / width).ceil().max(1.0) as usize;
        Histogram {
            lo,
            width,
            counts: vec![0; bins],
            out_of_range: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        let idx = ((x - self.lo) / self.width).floor();
        if idx >= 0.0 && (idx as usize) < self.counts.len() {
            self.counts[idx as usize] += 1;
        } else {
            self.out_of_range += 1;
        }
    }

    pub fn from_values(values: &[f64], lo: f64, hi: f64, width: f64) -> Self {
        let mut h = Histogram::new(lo, hi, width);
        values.iter().for_each(|&v| h.add(v));
        h
    }

    pub fn rows(&self) -> Vec<Vec<crate::csv::Cell>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let low = self.lo + i as f64 * self.width;
                vec![low.into(), (low + self.width).into(), c.into()]
            })
            .collect()
    }
}
