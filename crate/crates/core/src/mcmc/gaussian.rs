//! Gaussian draws parameterized by a precision matrix, with optional
//! conditioning on a zero-sum constraint.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{cholesky_with_jitter, dot, Cholesky, SymMatrix};

/// Draw from `N(Q^{-1} b, Q^{-1})` given precision `Q` and linear term `b`.
pub fn sample_gaussian_precision<R: Rng + ?Sized>(
    qstar: &SymMatrix<f64>,
    linear_term: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let chol = cholesky_with_jitter(qstar)?;
    Ok(sample_with_factor(&chol, linear_term, rng))
}

pub(crate) fn sample_with_factor<R: Rng + ?Sized>(chol: &Cholesky<f64>, linear_term: &[f64], rng: &mut R) -> Vec<f64> {
    let mean = chol.solve(linear_term);
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise = chol.solve_upper(&z);
    mean.iter().zip(noise).map(|(m, e)| m + e).collect()
}

/// Conditioning by kriging: `x* = x - Q^{-1} 1 (1' Q^{-1} 1)^{-1} 1' x`.
pub fn constrain_to_zero_sum(draw: &[f64], qstar: &SymMatrix<f64>) -> Result<Vec<f64>> {
    let chol = cholesky_with_jitter(qstar)?;
    Ok(constrain_with_factor(draw, &chol))
}

pub(crate) fn constrain_with_factor(draw: &[f64], chol: &Cholesky<f64>) -> Vec<f64> {
    let ones = vec![1.0; draw.len()];
    let w = chol.solve(&ones);
    let denom: f64 = w.iter().sum();
    let excess: f64 = draw.iter().sum::<f64>() / denom;
    let mut out: Vec<f64> = draw.iter().zip(&w).map(|(x, wi)| x - wi * excess).collect();
    // remove residual rounding so the constraint holds to machine precision
    let resid = dot(&out, &ones) / draw.len() as f64;
    if resid != 0.0 {
        out.iter_mut().for_each(|v| *v -= resid);
    }
    out
}
