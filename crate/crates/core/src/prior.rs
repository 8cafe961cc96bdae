//! The smooth subspace shrinkage prior on spline coefficients:
//! precision assembly, shrinkage weights, scale-prior log densities and the
//! curvature-based calibration of the random-walk scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, symmetric_eigen, Matrix, SymMatrix, DEFAULT_REL_TOL};
use crate::scalar::Real;
use crate::spline::{rw2_penalty, SplineBasis};
use crate::subspace::{sigma_ref, ProjectionPair};

/// Grid size for the curvature check over the covariate domain.
pub const CURVATURE_GRID: usize = 201;

/// Everything about one smooth term's prior precision that does not depend
/// on the current scale parameters.
#[derive(Debug, Clone)]
pub struct TermPrecisionInputs<T> {
    pub design: Matrix<T>,
    pub projections: ProjectionPair<T>,
    pub penalty: SymMatrix<T>,
    /// `Z' P1 Z`.
    pub complement_gram: SymMatrix<T>,
    pub sigma_ref: T,
}

impl<T: Real> TermPrecisionInputs<T> {
    pub fn new(design: Matrix<T>, projections: ProjectionPair<T>) -> Result<Self> {
        let penalty = rw2_penalty(design.cols())?;
        let complement_gram = projections.complement_gram(&design);
        let sigma_ref = sigma_ref(&complement_gram)?;
        Ok(Self {
            design,
            projections,
            penalty,
            complement_gram,
            sigma_ref,
        })
    }
}

fn check_positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

/// `Q = sigma^-2 lambda^-2 F + tau^-2 K`.
pub fn assemble_precision<T: Real>(t: &TermPrecisionInputs<T>, lambda: T, tau: T, sigma2: T) -> Result<SymMatrix<T>> {
    check_positive("lambda", lambda)?;
    check_positive("tau", tau)?;
    check_positive("sigma2", sigma2)?;
    let wf = T::one() / (sigma2 * lambda * lambda);
    let wk = T::one() / (tau * tau);
    Ok(t.complement_gram.weighted_sum(wf, &t.penalty, wk))
}

pub fn kappa<T: Real>(lambda: T) -> T {
    T::one() / (T::one() + lambda * lambda)
}

/// Log density of the half-Cauchy `C+(0, scale)`.
pub fn log_half_cauchy<T: Real>(x: T, scale: T) -> Result<T> {
    check_positive("half-Cauchy scale", scale)?;
    if !(x > T::zero()) {
        return Ok(T::neg_infinity());
    }
    let r = x / scale;
    Ok((T::lit(2.0) / (T::lit(std::f64::consts::PI) * scale)).ln() - (T::one() + r * r).ln())
}

/// Log density of the inverse gamma with shape `a` and scale `b`.
pub fn log_inverse_gamma<T: Real>(x: T, a: T, b: T) -> Result<T> {
    check_positive("inverse-gamma shape", a)?;
    check_positive("inverse-gamma scale", b)?;
    if !(x > T::zero()) {
        return Ok(T::neg_infinity());
    }
    let ln_gamma_a = T::lit(statrs::function::gamma::ln_gamma(a.as_f64()));
    Ok(a * b.ln() - ln_gamma_a - (a + T::one()) * x.ln() - b / x)
}

/// Log pseudo-determinant of `wf F + wk K` for a fixed pair `(F, K)` of PSD
/// matrices. The shared kernel of the two summands is found once; each
/// evaluation is then a Cholesky factorization of the sum with the kernel
/// pinned to unit eigenvalues.
#[derive(Debug, Clone)]
pub struct RangeDeterminant<T> {
    kernel: Matrix<T>,
}

impl<T: Real> RangeDeterminant<T> {
    pub fn new(f: &SymMatrix<T>, k: &SymMatrix<T>) -> Self {
        // normalize so neither summand swamps the kernel decision
        let nf = f.matrix().max_abs().max(T::min_positive_value());
        let nk = k.matrix().max_abs().max(T::min_positive_value());
        let sum = f.weighted_sum(T::one() / nf, k, T::one() / nk);
        let eig = symmetric_eigen(&sum);
        Self {
            kernel: eig.kernel_basis(T::lit(DEFAULT_REL_TOL)),
        }
    }

    /// Dimension of the range of `wf F + wk K` for positive weights.
    pub fn rank(&self) -> usize {
        self.kernel.rows() - self.kernel.cols()
    }

    pub fn kernel(&self) -> &Matrix<T> {
        &self.kernel
    }

    pub fn log_pdet(&self, f: &SymMatrix<T>, wf: T, k: &SymMatrix<T>, wk: T) -> Result<T> {
        let q = f.weighted_sum(wf, k, wk).add_outer(&self.kernel);
        Ok(cholesky_with_jitter(&q)?.log_det())
    }
}

/// Result of a calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuCalibration {
    pub nu: f64,
    /// Monte Carlo estimate of `Pr(max |f''| < c)` at `nu`.
    pub probability: f64,
    pub draws: usize,
    pub iterations: usize,
}

/// Draws `max |f''|` over the domain grid for `draws` prior realizations of
/// the RW2 process with `tau ~ C+(0, 1)`. Because `f''` is linear in the
/// increments, the maximum at scale `nu` is `nu` times these values.
pub fn unit_curvature_maxima<T: Real>(basis: &SplineBasis<T>, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let grid = basis.grid(CURVATURE_GRID);
    let d2 = basis.eval_design_deriv2(&grid)?;
    let k = basis.num_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = vec![T::zero(); k];
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let u: f64 = rng.random();
        let tau = (std::f64::consts::FRAC_PI_2 * u).tan();
        // first two coefficients span linear sequences, which carry no curvature
        beta[0] = T::zero();
        beta[1] = T::zero();
        for j in 2..k {
            let z: f64 = rng.sample(StandardNormal);
            beta[j] = T::lit(2.0) * beta[j - 1] - beta[j - 2] + T::lit(z);
        }
        let max = d2.mul_vec(&beta).into_iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
        out.push(tau * max.as_f64());
    }
    Ok(out)
}

fn fraction_below(maxima: &[f64], nu: f64, c: f64) -> f64 {
    maxima.iter().filter(|&&m| nu * m < c).count() as f64 / maxima.len() as f64
}

/// Monte Carlo estimate of `Pr(max |f''| < c)` for `tau ~ C+(0, nu)`.
pub fn curvature_probability<T: Real>(basis: &SplineBasis<T>, nu: f64, c: f64, draws: usize, seed: u64) -> Result<f64> {
    Ok(fraction_below(&unit_curvature_maxima(basis, draws, seed)?, nu, c))
}

/// Finds `nu` with `Pr(max |f''| < c) = 1 - alpha` under the random-walk
/// part of the prior, by bisection on `log nu` over a common set of draws.
pub fn calibrate_nu<T: Real>(
    basis: &SplineBasis<T>,
    c: f64,
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<NuCalibration> {
    if !(c > 0.0) {
        return Err(Error::domain(format!("cutoff c must be positive, got {c}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if mc_draws < 1000 {
        return Err(Error::domain(format!("need at least 1000 draws, got {mc_draws}")));
    }
    let maxima = unit_curvature_maxima(basis, mc_draws, seed)?;
    let target = 1.0 - alpha;
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for &m in &maxima {
        if m > 0.0 {
            min = min.min(m);
        }
        max = max.max(m);
    }
    // bracket: p(lo) = 1 >= target >= 0 = p(hi)
    let mut lo = (c / max).ln() - 1.0;
    let mut hi = (c / min).ln() + 1.0;
    let mut iterations = 0;
    while iterations < 60 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let p = fraction_below(&maxima, mid.exp(), c);
        if (p - target).abs() <= 0.25 / mc_draws as f64 {
            break;
        }
        if p >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let candidates = [lo, 0.5 * (lo + hi), hi];
    let (nu, probability) = candidates
        .iter()
        .map(|&l| (l.exp(), fraction_below(&maxima, l.exp(), c)))
        .min_by(|a, b| (a.1 - target).abs().partial_cmp(&(b.1 - target).abs()).unwrap())
        .unwrap();
    if (probability - target).abs() > 0.01 {
        return Err(Error::NoConvergence {
            iterations,
            what: format!("nu calibration reached probability {probability}, target {target}"),
        });
    }
    Ok(NuCalibration {
        nu,
        probability,
        draws: mc_draws,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::make_basis;
    use crate::subspace::{Subspace, SubspaceSpec};
    use approx::assert_abs_diff_eq;

    fn inputs() -> TermPrecisionInputs<f64> {
        let x: Vec<f64> = (0..40).map(|i| -1.0 + i as f64 * 2.0 / 39.0).collect();
        let b = make_basis(-1.0, 1.0, 6).unwrap();
        let z = b.eval_design(&x).unwrap();
        let pp = Subspace::new(&SubspaceSpec::polynomial(1), &x).unwrap().projections();
        TermPrecisionInputs::new(z, pp).unwrap()
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(0.0), 1.0);
        assert_eq!(kappa(1.0), 0.5);
        assert_abs_diff_eq!(kappa(3.0), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn half_cauchy_values() {
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(log_half_cauchy(1.0, 1.0).unwrap(), (1.0 / pi).ln(), epsilon = 1e-14);
        assert_eq!(log_half_cauchy(0.0, 1.0).unwrap(), f64::NEG_INFINITY);
        assert_abs_diff_eq!(
            log_half_cauchy(2.0, 2.0).unwrap(),
            (1.0 / (2.0 * pi)).ln(),
            epsilon = 1e-14
        );
        assert!(log_half_cauchy(1.0, 0.0).is_err());
    }

    #[test]
    fn inverse_gamma_values() {
        assert_abs_diff_eq!(log_inverse_gamma(1.0, 1.0, 1.0).unwrap(), -1.0, epsilon = 1e-14);
        assert_eq!(log_inverse_gamma(0.0, 1.0, 1.0).unwrap(), f64::NEG_INFINITY);
        assert!(log_inverse_gamma(1.0, -1.0, 1.0).is_err());
        // mode at b / (a + 1)
        let (a, b) = (3.0, 2.0);
        let mode = b / (a + 1.0);
        let at = |x: f64| log_inverse_gamma(x, a, b).unwrap();
        assert!(at(mode) > at(mode * 1.01) && at(mode) > at(mode * 0.99));
    }

    #[test]
    fn precision_limits() {
        let t = inputs();
        let q = assemble_precision(&t, 1e12, 1.5, 1.0).unwrap();
        assert!(q.matrix().max_abs_diff(t.penalty.scale(1.0 / 2.25).matrix()) < 1e-12);
        let q = assemble_precision(&t, 0.5, 1e12, 2.0).unwrap();
        assert!(q.matrix().max_abs_diff(t.complement_gram.scale(2.0).matrix()) < 1e-10);
        assert!(assemble_precision(&t, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn quadratic_form_splits() {
        let t = inputs();
        let beta: Vec<f64> = (0..t.design.cols()).map(|j| (j as f64 * 0.7).cos()).collect();
        let (lambda, tau, sigma2) = (0.8, 1.7, 0.6);
        let q = assemble_precision(&t, lambda, tau, sigma2).unwrap();
        let zb = t.design.mul_vec(&beta);
        let p1zb = t.projections.apply_p1(&zb);
        let dev: f64 = p1zb.iter().map(|v| v * v).sum();
        let want = dev / (lambda * lambda * sigma2) + t.penalty.quad_form(&beta) / (tau * tau);
        assert_abs_diff_eq!(q.quad_form(&beta), want, epsilon = 1e-10);
    }

    #[test]
    fn range_determinant_matches_eigen_pdet() {
        let t = inputs();
        let rd = RangeDeterminant::new(&t.complement_gram, &t.penalty);
        // linear null space: kernel of F contains the RW2 kernel
        assert_eq!(rd.rank(), t.design.cols() - 2);
        let (wf, wk) = (3.0, 0.4);
        let got = rd.log_pdet(&t.complement_gram, wf, &t.penalty, wk).unwrap();
        let q = t.complement_gram.weighted_sum(wf, &t.penalty, wk);
        let (want, rank) = crate::linalg::log_pseudo_determinant(&q, 1e-10);
        assert_eq!(rank, rd.rank());
        assert_abs_diff_eq!(got, want, epsilon = 1e-8);
    }

    #[test]
    fn calibration_is_deterministic_and_scales_with_c() {
        let b = make_basis(0.0, 1.0, 8).unwrap();
        let a = calibrate_nu(&b, 1.0, 0.05, 2000, 7).unwrap();
        let again = calibrate_nu(&b, 1.0, 0.05, 2000, 7).unwrap();
        assert_eq!(a, again);
        let doubled = calibrate_nu(&b, 2.0, 0.05, 2000, 7).unwrap();
        assert!(doubled.nu > a.nu);
        assert!((a.probability - 0.95).abs() <= 0.01);
    }

    #[test]
    fn calibration_directional_in_alpha_and_c() {
        let b = make_basis(0.0, 1.0, 8).unwrap();
        let strict = calibrate_nu(&b, 1.0, 0.05, 2000, 3).unwrap();
        let loose = calibrate_nu(&b, 1e6, 0.5, 2000, 3).unwrap();
        assert!(loose.nu > 1e3 * strict.nu);
    }

    #[test]
    fn calibration_rejects_bad_input() {
        let b = make_basis(0.0, 1.0, 8).unwrap();
        assert!(calibrate_nu(&b, 0.0, 0.05, 2000, 1).is_err());
        assert!(calibrate_nu(&b, 1.0, 1.0, 2000, 1).is_err());
        assert!(calibrate_nu(&b, 1.0, 0.05, 10, 1).is_err());
    }
}
