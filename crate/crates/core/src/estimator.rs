//! Sliding-window Gaussian estimate of a node's delay.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub mu: f64,
    pub sigma: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub window_size: usize,
    /// Samples required before the window replaces the prior.
    pub bootstrap_min: usize,
    pub prior_mu: f64,
    pub prior_sigma: f64,
    /// Samples above `mu + outlier_k * sigma` are not admitted to the window.
    pub outlier_k: f64,
    pub sigma_floor: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            window_size: 100,
            bootstrap_min: 10,
            prior_mu: 100.0,
            prior_sigma: 50.0,
            outlier_k: 6.0,
            sigma_floor: 1.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_min < 1 || self.window_size < self.bootstrap_min {
            return Err(Error::config("require window_size >= bootstrap_min >= 1"));
        }
        if !(self.outlier_k > 0.0) {
            return Err(Error::config("outlier_k must be > 0"));
        }
        if !(self.sigma_floor >= 0.0) || !(self.prior_sigma >= 0.0) || !(self.prior_mu >= 0.0) {
            return Err(Error::config("prior and sigma_floor must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyEstimator {
    config: EstimatorConfig,
    window: VecDeque<f64>,
    rejected: usize,
}

impl LatencyEstimator {
    pub fn new(config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        Ok(LatencyEstimator {
            window: VecDeque::with_capacity(config.window_size),
            config,
            rejected: 0,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Number of samples refused by the outlier gate so far.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    /// Admits one delay sample. Returns whether it entered the window.
    pub fn observe(&mut self, sample: f64) -> Result<bool> {
        if !(sample >= 0.0) || !sample.is_finite() {
            return Err(Error::input(format!(
                "latency sample must be finite and >= 0, got {sample}"
            )));
        }
        if self.window.len() >= self.config.bootstrap_min {
            let est = self.estimate();
            if sample > est.mu + self.config.outlier_k * est.sigma {
                self.rejected += 1;
                return Ok(false);
            }
        }
        if self.window.len() == self.config.window_size {
            self.window.pop_front();
        }
        self.window.push_back(sample);
        Ok(true)
    }

    pub fn estimate(&self) -> LatencyEstimate {
        let n = self.window.len();
        if n < self.config.bootstrap_min {
            return LatencyEstimate {
                mu: self.config.prior_mu,
                sigma: self.config.prior_sigma.max(self.config.sigma_floor),
                sample_count: n,
            };
        }
        let mean = self.window.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            self.window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        LatencyEstimate {
            mu: mean,
            sigma: var.sqrt().max(self.config.sigma_floor),
            sample_count: n,
        }
    }
}
