//! Univariate slice sampling (stepping out + shrinkage) for positive scale
//! parameters, run on the log scale.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    /// Initial bracket width on the log scale.
    pub initial_width: f64,
    pub max_step_out: usize,
    pub max_shrink: usize,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            initial_width: 1.0,
            max_step_out: 50,
            max_shrink: 100,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_width > 0.0) || self.max_step_out < 1 || self.max_shrink < 1 {
            return Err(Error::Config(format!("invalid slice settings {self:?}")));
        }
        Ok(())
    }
}

/// Evaluation counts of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SliceStats {
    pub step_out: usize,
    pub shrink: usize,
}

impl SliceStats {
    pub fn evaluations(&self) -> usize {
        self.step_out + self.shrink
    }
}

/// One slice update of a positive parameter whose log density (with respect
/// to Lebesgue measure on the original scale) is `log_target`. The update
/// acts on `theta = ln(x)`, so the Jacobian `theta` is added internally.
pub fn slice_update_log<R: Rng + ?Sized>(
    current: f64,
    mut log_target: impl FnMut(f64) -> f64,
    cfg: &SliceConfig,
    rng: &mut R,
) -> Result<(f64, SliceStats)> {
    let mut g = |theta: f64| {
        let v = log_target(theta.exp()) + theta;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let theta0 = current.ln();
    let g0 = g(theta0);
    if !g0.is_finite() {
        return Err(Error::domain(format!(
            "slice sampler started at {current} where the log target is {g0}"
        )));
    }
    let mut stats = SliceStats::default();
    let e: f64 = rng.random::<f64>();
    let level = g0 + (1.0 - e).ln();

    let w = cfg.initial_width;
    let mut left = theta0 - w * rng.random::<f64>();
    let mut right = left + w;
    let mut j = (cfg.max_step_out as f64 * rng.random::<f64>()).floor() as usize;
    let mut k = cfg.max_step_out.saturating_sub(1).saturating_sub(j);
    while j > 0 && level < g(left) {
        left -= w;
        j -= 1;
        stats.step_out += 1;
    }
    while k > 0 && level < g(right) {
        right += w;
        k -= 1;
        stats.step_out += 1;
    }

    for _ in 0..cfg.max_shrink {
        let theta1 = left + rng.random::<f64>() * (right - left);
        stats.shrink += 1;
        if level < g(theta1) {
            return Ok((theta1.exp(), stats));
        }
        if theta1 < theta0 {
            left = theta1;
        } else {
            right = theta1;
        }
    }
    Err(Error::SliceFailure {
        parameter: String::new(),
        steps: cfg.max_shrink,
    })
}
