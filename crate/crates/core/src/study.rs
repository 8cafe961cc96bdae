//! Marginal prior of the null-space distance `d = |P1 Z beta|` with `lambda`
//! integrated out (`tau -> infinity`, `sigma^2 = 1`):
//!
//! `p(d | xi~) = c0 * I_r(d)`, `I_m(d) = int_0^inf exp(-d^2 / (2 l^2)) / (l^m (1 + l^2 / xi~^2)) dl`
//!
//! with `c0 = 2 / (pi xi~) (2 pi)^(-r/2)` and the pseudo-determinant of `F`
//! set to one. The score is `-d I_{r+2}(d) / I_r(d)`. Integrals are computed
//! on `u = ln l`, scaled by the integrand's maximum so large ranks at tiny
//! `d` stay in range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureConfig};

/// Integration window on the log scale.
pub const LOG_WINDOW: (f64, f64) = (-30.0, 30.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub ranks: Vec<usize>,
    pub xi_tilde: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub quadrature: QuadratureConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let n = 100;
        let (lo, hi) = (0.05f64.ln(), 20f64.ln());
        Self {
            ranks: vec![10, 20],
            xi_tilde: vec![0.1, 1.0, 10.0],
            d_grid: (0..n)
                .map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
                .collect(),
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ranks.iter().any(|&r| r < 2) {
            return Err(Error::domain("rank(F) must be at least 2"));
        }
        if self.xi_tilde.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::domain("xi_tilde values must be positive"));
        }
        if self.d_grid.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::domain("distances must be positive"));
        }
        Ok(())
    }
}

fn log_integrand(u: f64, d: f64, xi_tilde: f64, m: f64) -> f64 {
    // dl = l du adds one power of l
    let l2 = (2.0 * u).exp();
    -0.5 * d * d / l2 - (m - 1.0) * u - (l2 / (xi_tilde * xi_tilde)).ln_1p()
}

/// `ln I_m(d)`.
pub fn log_distance_integral(d: f64, xi_tilde: f64, m: usize, cfg: &QuadratureConfig) -> Result<f64> {
    if !(d > 0.0) || !(xi_tilde > 0.0) {
        return Err(Error::domain(format!(
            "need d > 0 and xi_tilde > 0, got ({d}, {xi_tilde})"
        )));
    }
    let m = m as f64;
    let (a, b) = LOG_WINDOW;
    // coarse scan for the peak so the scaled integrand is at most ~1
    let peak = (0..=600)
        .map(|i| log_integrand(a + (b - a) * i as f64 / 600.0, d, xi_tilde, m))
        .fold(f64::NEG_INFINITY, f64::max);
    let r = integrate(|u| (log_integrand(u, d, xi_tilde, m) - peak).exp(), a, b, cfg)?;
    if !(r.value > 0.0) {
        return Err(Error::QuadratureFailure {
            estimate: r.value,
            error: r.error,
        });
    }
    Ok(peak + r.value.ln())
}

fn log_c0(xi_tilde: f64, rank: usize) -> f64 {
    let pi = std::f64::consts::PI;
    (2.0 / (pi * xi_tilde)).ln() - 0.5 * rank as f64 * (2.0 * pi).ln()
}

pub fn log_marginal_density_d(d: f64, xi_tilde: f64, rank: usize, cfg: &QuadratureConfig) -> Result<f64> {
    Ok(log_c0(xi_tilde, rank) + log_distance_integral(d, xi_tilde, rank, cfg)?)
}

/// Marginal density of the distance (shape-true; `|F|*` taken as 1).
pub fn marginal_density_d(d: f64, xi_tilde: f64, rank: usize, cfg: &QuadratureConfig) -> Result<f64> {
    Ok(log_marginal_density_d(d, xi_tilde, rank, cfg)?.exp())
}

/// Derivative of the log marginal density with respect to `d`.
pub fn marginal_score_d(d: f64, xi_tilde: f64, rank: usize, cfg: &QuadratureConfig) -> Result<f64> {
    let num = log_distance_integral(d, xi_tilde, rank + 2, cfg)?;
    let den = log_distance_integral(d, xi_tilde, rank, cfg)?;
    Ok(-d * (num - den).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub rank: usize,
    pub xi_tilde: f64,
    pub d: f64,
    pub density: f64,
    pub score: f64,
}

/// Long-format table over `ranks x xi_tilde x d_grid`.
pub fn emit_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    use rayon::prelude::*;
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &rank in &cfg.ranks {
        for &xi in &cfg.xi_tilde {
            for &d in &cfg.d_grid {
                jobs.push((rank, xi, d));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(rank, xi_tilde, d)| {
            Ok(StudyRow {
                rank,
                xi_tilde,
                d,
                density: marginal_density_d(d, xi_tilde, rank, &cfg.quadrature)?,
                score: marginal_score_d(d, xi_tilde, rank, &cfg.quadrature)?,
            })
        })
        .collect()
}
