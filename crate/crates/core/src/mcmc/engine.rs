//! Gibbs sweep over intercept, spline coefficients and scale parameters.
//!
//! One sweep runs: intercept, each term's coefficients (block Gaussian draw,
//! optionally conditioned on `1'beta = 0`), `sigma^2`, per-term scales, and
//! finally the global shrinkage scale. All scales are slice-sampled on the
//! log scale except the P-spline variance, which may use its conjugate
//! inverse-gamma conditional.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, Matrix, SymMatrix};
use crate::mcmc::gaussian::{constrain_with_factor, sample_with_factor};
use crate::mcmc::slice::{slice_update_log, SliceConfig, SliceStats};
use crate::prior::{kappa, log_half_cauchy, log_inverse_gamma, RangeDeterminant, TermPrecisionInputs};
use crate::stats::effective_sample_size;

/// Prior-specific data of a shrinkage term.
#[derive(Debug, Clone)]
pub struct ShrinkageTerm {
    pub inputs: TermPrecisionInputs<f64>,
    pub range: RangeDeterminant<f64>,
    /// Scale of the half-Cauchy prior on `tau`.
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceUpdate {
    Conjugate,
    Slice,
}

#[derive(Debug, Clone)]
pub enum TermPrior {
    Shrinkage(Box<ShrinkageTerm>),
    /// Bayesian P-spline: `beta ~ N(0, tau^-2 K)`, `tau^2 ~ IG(a, b)`.
    PSpline {
        a: f64,
        b: f64,
        update: VarianceUpdate,
    },
}

#[derive(Debug, Clone)]
pub struct EngineTerm {
    pub name: String,
    pub design: Matrix<f64>,
    gram: SymMatrix<f64>,
    penalty: SymMatrix<f64>,
    pub prior: TermPrior,
    pub constrained: bool,
}

impl EngineTerm {
    pub fn shrinkage(name: impl Into<String>, inputs: TermPrecisionInputs<f64>, nu: f64, constrained: bool) -> Self {
        let range = RangeDeterminant::new(&inputs.complement_gram, &inputs.penalty);
        let design = inputs.design.clone();
        let penalty = inputs.penalty.clone();
        Self {
            name: name.into(),
            gram: design.gram(),
            design,
            penalty,
            prior: TermPrior::Shrinkage(Box::new(ShrinkageTerm { inputs, range, nu })),
            constrained,
        }
    }

    pub fn pspline(name: impl Into<String>, design: Matrix<f64>, a: f64, b: f64, constrained: bool) -> Result<Self> {
        let penalty = crate::spline::rw2_penalty(design.cols())?;
        Ok(Self {
            name: name.into(),
            gram: design.gram(),
            design,
            penalty,
            prior: TermPrior::PSpline {
                a,
                b,
                update: VarianceUpdate::Conjugate,
            },
            constrained,
        })
    }

    pub fn num_coef(&self) -> usize {
        self.design.cols()
    }

    pub fn penalty(&self) -> &SymMatrix<f64> {
        &self.penalty
    }

    pub fn is_shrinkage(&self) -> bool {
        matches!(self.prior, TermPrior::Shrinkage(_))
    }

    fn shrink(&self) -> Option<&ShrinkageTerm> {
        match &self.prior {
            TermPrior::Shrinkage(s) => Some(s),
            TermPrior::PSpline { .. } => None,
        }
    }

    /// Prior precision of the coefficients at the given scales.
    pub fn prior_precision(&self, lambda: Option<f64>, tau: f64, sigma2: f64) -> SymMatrix<f64> {
        let wk = 1.0 / (tau * tau);
        match (self.shrink(), lambda) {
            (Some(s), Some(l)) => {
                let wf = 1.0 / (sigma2 * l * l);
                s.inputs.complement_gram.weighted_sum(wf, &self.penalty, wk)
            }
            _ => self.penalty.scale(wk),
        }
    }

    /// Log density of `beta` under its degenerate Gaussian prior, up to the
    /// `2 pi` constant.
    fn log_prior_beta(&self, beta: &[f64], lambda: Option<f64>, tau: f64, sigma2: f64) -> Result<f64> {
        let wk = 1.0 / (tau * tau);
        let qk = self.penalty.quad_form(beta);
        match (self.shrink(), lambda) {
            (Some(s), Some(l)) => {
                let wf = 1.0 / (sigma2 * l * l);
                let qf = s.inputs.complement_gram.quad_form(beta);
                let ld = s.range.log_pdet(&s.inputs.complement_gram, wf, &self.penalty, wk)?;
                Ok(0.5 * ld - 0.5 * (wf * qf + wk * qk))
            }
            _ => {
                let rank = (self.num_coef() - 2) as f64;
                Ok(0.5 * rank * wk.ln() - 0.5 * wk * qk)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GlobalScale {
    Fixed(f64),
    HalfCauchy { xi0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermState {
    pub beta: Vec<f64>,
    /// Local shrinkage scale; absent for P-spline terms.
    pub lambda: Option<f64>,
    pub tau: f64,
}

impl TermState {
    pub fn kappa(&self) -> Option<f64> {
        self.lambda.map(kappa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub beta0: f64,
    pub terms: Vec<TermState>,
    /// Global scale when it is sampled.
    pub xi: Option<f64>,
    pub sigma2: f64,
    pub iteration: usize,
}

/// Cumulative slice-sampler work per scale parameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceCounters {
    pub updates: usize,
    pub step_out: usize,
    pub shrink: usize,
}

impl SliceCounters {
    fn record(&mut self, s: SliceStats) {
        self.updates += 1;
        self.step_out += s.step_out;
        self.shrink += s.shrink;
    }

    pub fn mean_evaluations(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            (self.step_out + self.shrink) as f64 / self.updates as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub sigma2: SliceCounters,
    pub lambda: Vec<SliceCounters>,
    pub tau: Vec<SliceCounters>,
    pub xi: SliceCounters,
    /// Effective sample size of the retained `kappa` draws per term.
    pub kappa_ess: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub seed: u64,
    pub chain: u64,
    pub draws: Vec<ChainState>,
    pub diagnostics: ChainDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub n_iter: usize,
    pub warmup: usize,
    pub thin: usize,
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.warmup {
            return Err(Error::Config(format!(
                "n_iter ({}) must exceed warmup ({})",
                self.n_iter, self.warmup
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_iter - self.warmup).div_ceil(self.thin)
    }
}

/// A fully specified posterior: data, terms and hyperparameters.
#[derive(Debug, Clone)]
pub struct Sampler {
    y: Vec<f64>,
    terms: Vec<EngineTerm>,
    pub intercept: bool,
    /// Inverse-gamma shape and scale for `sigma^2`.
    pub sigma2_prior: (f64, f64),
    pub global: GlobalScale,
    pub slice: SliceConfig,
    /// Update per-term scales in reverse order (sweep-validity checks).
    pub reverse_scale_order: bool,
    /// Hold `sigma^2` and all scales at their current values.
    pub freeze_scales: bool,
}

impl Sampler {
    pub fn new(
        y: Vec<f64>,
        terms: Vec<EngineTerm>,
        intercept: bool,
        sigma2_prior: (f64, f64),
        global: GlobalScale,
    ) -> Result<Self> {
        for t in &terms {
            if t.design.rows() != y.len() {
                return Err(Error::Config(format!(
                    "term `{}` has {} rows but the response has {}",
                    t.name,
                    t.design.rows(),
                    y.len()
                )));
            }
        }
        let (a0, b0) = sigma2_prior;
        if !(a0 > 0.0 && b0 > 0.0) {
            return Err(Error::Config("sigma2 prior parameters must be positive".into()));
        }
        match global {
            GlobalScale::Fixed(v) | GlobalScale::HalfCauchy { xi0: v } if !(v > 0.0) => {
                return Err(Error::Config("global scale must be positive".into()));
            }
            _ => {}
        }
        Ok(Self {
            y,
            terms,
            intercept,
            sigma2_prior,
            global,
            slice: SliceConfig::default(),
            reverse_scale_order: false,
            freeze_scales: false,
        })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn terms(&self) -> &[EngineTerm] {
        &self.terms
    }

    pub fn terms_mut(&mut self) -> &mut [EngineTerm] {
        &mut self.terms
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn xi_value(&self, state: &ChainState) -> f64 {
        match self.global {
            GlobalScale::Fixed(v) => v,
            GlobalScale::HalfCauchy { .. } => state.xi.expect("sampled xi present"),
        }
    }

    /// `Z_l beta_l` for every term.
    pub fn term_fits(&self, state: &ChainState) -> Vec<Vec<f64>> {
        self.terms
            .iter()
            .zip(&state.terms)
            .map(|(t, s)| t.design.mul_vec(&s.beta))
            .collect()
    }

    pub fn predictor(&self, state: &ChainState) -> Vec<f64> {
        let fits = self.term_fits(state);
        (0..self.n())
            .map(|i| state.beta0 + fits.iter().map(|f| f[i]).sum::<f64>())
            .collect()
    }

    /// Working observations for term `l`: response minus intercept and all
    /// other terms.
    pub fn working_observations(&self, state: &ChainState, l: usize) -> Vec<f64> {
        let fits = self.term_fits(state);
        working(&self.y, state.beta0, &fits, Some(l))
    }

    /// Precision `Q* = sigma^-2 Z'Z + Q_l` and linear term `sigma^-2 Z' y~`
    /// of the full conditional of `beta_l`.
    pub fn conditional_system(&self, state: &ChainState, l: usize, working: &[f64]) -> (SymMatrix<f64>, Vec<f64>) {
        let t = &self.terms[l];
        let s = &state.terms[l];
        let inv_s2 = 1.0 / state.sigma2;
        let prior = t.prior_precision(s.lambda, s.tau, state.sigma2);
        let q = t.gram.weighted_sum(inv_s2, &prior, 1.0);
        let b: Vec<f64> = t.design.t_mul_vec(working).into_iter().map(|v| v * inv_s2).collect();
        (q, b)
    }

    /// Mean of the (unconstrained) full conditional of `beta_l`.
    pub fn conditional_mean(&self, state: &ChainState, l: usize) -> Result<Vec<f64>> {
        let w = self.working_observations(state, l);
        let (q, b) = self.conditional_system(state, l, &w);
        Ok(cholesky_with_jitter(&q)?.solve(&b))
    }

    /// Deterministic starting point: penalized least squares with unit
    /// scales, one backfitting pass, then residual variance.
    pub fn initial_state(&self) -> Result<ChainState> {
        let n = self.n();
        let var_y = if n >= 2 { crate::stats::variance(&self.y) } else { 1.0 };
        let sigma2_start = if var_y > 0.0 { var_y } else { 1.0 };
        let mut state = ChainState {
            beta0: if self.intercept && n > 0 {
                crate::stats::mean(&self.y)
            } else {
                0.0
            },
            terms: self
                .terms
                .iter()
                .map(|t| TermState {
                    beta: vec![0.0; t.num_coef()],
                    lambda: t.is_shrinkage().then_some(1.0),
                    tau: 1.0,
                })
                .collect(),
            xi: matches!(self.global, GlobalScale::HalfCauchy { .. }).then_some(1.0),
            sigma2: sigma2_start,
            iteration: 0,
        };
        for l in 0..self.terms.len() {
            let w = self.working_observations(&state, l);
            let (q, b) = self.conditional_system(&state, l, &w);
            let chol = cholesky_with_jitter(&q)?;
            let mut beta = chol.solve(&b);
            if self.terms[l].constrained {
                beta = constrain_with_factor(&beta, &chol);
            }
            state.terms[l].beta = beta;
        }
        if n >= 2 {
            let eta = self.predictor(&state);
            let rss: f64 = self.y.iter().zip(&eta).map(|(y, e)| (y - e).powi(2)).sum();
            let floor = 1e-6 * sigma2_start;
            state.sigma2 = (rss / n as f64).max(floor);
        }
        Ok(state)
    }

    /// Draw of the intercept from `N(mean(y~_0), sigma^2 / n)`.
    pub fn update_intercept<R: Rng + ?Sized>(&self, state: &ChainState, partial_residual: &[f64], rng: &mut R) -> f64 {
        let n = partial_residual.len();
        if n == 0 {
            return state.beta0;
        }
        let m = crate::stats::mean(partial_residual);
        let z: f64 = rng.sample(StandardNormal);
        m + z * (state.sigma2 / n as f64).sqrt()
    }

    /// Draw of `beta_l` from its full conditional, with the zero-sum
    /// correction when the term is constrained.
    pub fn update_term<R: Rng + ?Sized>(
        &self,
        state: &ChainState,
        l: usize,
        working: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let (q, b) = self.conditional_system(state, l, working);
        let chol = cholesky_with_jitter(&q)?;
        let draw = sample_with_factor(&chol, &b, rng);
        Ok(if self.terms[l].constrained {
            constrain_with_factor(&draw, &chol)
        } else {
            draw
        })
    }

    fn log_lik(&self, rss: f64, sigma2: f64) -> f64 {
        -0.5 * self.n() as f64 * sigma2.ln() - 0.5 * rss / sigma2
    }

    /// Log full conditional of `sigma^2` (unnormalized).
    fn log_cond_sigma2(&self, state: &ChainState, rss: f64, sigma2: f64) -> f64 {
        let (a0, b0) = self.sigma2_prior;
        let mut lp = self.log_lik(rss, sigma2) + log_inverse_gamma(sigma2, a0, b0).unwrap_or(f64::NEG_INFINITY);
        for (t, s) in self.terms.iter().zip(&state.terms) {
            if t.is_shrinkage() {
                match t.log_prior_beta(&s.beta, s.lambda, s.tau, sigma2) {
                    Ok(v) => lp += v,
                    Err(_) => return f64::NEG_INFINITY,
                }
            }
        }
        lp
    }

    fn xi_tilde(&self, t: &EngineTerm, xi: f64) -> f64 {
        xi / t.shrink().map_or(1.0, |s| s.inputs.sigma_ref)
    }

    /// Slice/conjugate updates of `sigma^2`, per-term scales and `xi`.
    pub fn update_scales<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        diag: &mut ChainDiagnostics,
        rng: &mut R,
    ) -> Result<()> {
        let eta = self.predictor(state);
        let rss: f64 = self.y.iter().zip(&eta).map(|(y, e)| (y - e).powi(2)).sum();

        let (s2, st) = slice_update_log(state.sigma2, |v| self.log_cond_sigma2(state, rss, v), &self.slice, rng)
            .map_err(|e| e.for_parameter("sigma2"))?;
        state.sigma2 = s2;
        diag.sigma2.record(st);

        let order: Vec<usize> = if self.reverse_scale_order {
            (0..self.terms.len()).rev().collect()
        } else {
            (0..self.terms.len()).collect()
        };
        for l in order {
            let t = &self.terms[l];
            match &t.prior {
                TermPrior::Shrinkage(s) => {
                    let xi_t = self.xi_tilde(t, self.xi_value(state));
                    let ts = &state.terms[l];
                    let (beta, tau, sigma2) = (ts.beta.clone(), ts.tau, state.sigma2);
                    let f = |lam: f64| match t.log_prior_beta(&beta, Some(lam), tau, sigma2) {
                        Ok(v) => v + log_half_cauchy(lam, xi_t).unwrap_or(f64::NEG_INFINITY),
                        Err(_) => f64::NEG_INFINITY,
                    };
                    let (lam, st) = slice_update_log(ts.lambda.unwrap(), f, &self.slice, rng)
                        .map_err(|e| e.for_parameter(&format!("lambda[{}]", t.name)))?;
                    state.terms[l].lambda = Some(lam);
                    diag.lambda[l].record(st);

                    let nu = s.nu;
                    let g = |tau: f64| match t.log_prior_beta(&beta, Some(lam), tau, sigma2) {
                        Ok(v) => v + log_half_cauchy(tau, nu).unwrap_or(f64::NEG_INFINITY),
                        Err(_) => f64::NEG_INFINITY,
                    };
                    let (tau, st) = slice_update_log(tau, g, &self.slice, rng)
                        .map_err(|e| e.for_parameter(&format!("tau[{}]", t.name)))?;
                    state.terms[l].tau = tau;
                    diag.tau[l].record(st);
                }
                TermPrior::PSpline { a, b, update } => {
                    let qk = t.penalty.quad_form(&state.terms[l].beta);
                    let rank = (t.num_coef() - 2) as f64;
                    let tau2 = match update {
                        VarianceUpdate::Conjugate => {
                            let shape = a + 0.5 * rank;
                            let rate = b + 0.5 * qk;
                            let g = Gamma::new(shape, 1.0 / rate)
                                .map_err(|e| Error::domain(format!("tau^2 conditional: {e}")))?;
                            1.0 / g.sample(rng)
                        }
                        VarianceUpdate::Slice => {
                            let cur = state.terms[l].tau.powi(2);
                            let f = |v: f64| {
                                log_inverse_gamma(v, *a, *b).unwrap_or(f64::NEG_INFINITY)
                                    - 0.5 * rank * v.ln()
                                    - 0.5 * qk / v
                            };
                            let (v, st) = slice_update_log(cur, f, &self.slice, rng)
                                .map_err(|e| e.for_parameter(&format!("tau2[{}]", t.name)))?;
                            diag.tau[l].record(st);
                            v
                        }
                    };
                    state.terms[l].tau = tau2.sqrt();
                }
            }
        }

        if let GlobalScale::HalfCauchy { xi0 } = self.global {
            let lambdas: Vec<(f64, f64)> = self
                .terms
                .iter()
                .zip(&state.terms)
                .filter_map(|(t, s)| Some((s.lambda?, t.shrink()?.inputs.sigma_ref)))
                .collect();
            let f = |xi: f64| {
                let mut lp = log_half_cauchy(xi, xi0).unwrap_or(f64::NEG_INFINITY);
                for &(lam, sref) in &lambdas {
                    lp += log_half_cauchy(lam, xi / sref).unwrap_or(f64::NEG_INFINITY);
                }
                lp
            };
            let (xi, st) =
                slice_update_log(state.xi.unwrap(), f, &self.slice, rng).map_err(|e| e.for_parameter("xi"))?;
            state.xi = Some(xi);
            diag.xi.record(st);
        }
        Ok(())
    }

    /// One full sweep.
    pub fn sweep<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        diag: &mut ChainDiagnostics,
        rng: &mut R,
    ) -> Result<()> {
        let mut fits = self.term_fits(state);
        if self.intercept {
            let resid = working(&self.y, 0.0, &fits, None);
            state.beta0 = self.update_intercept(state, &resid, rng);
        }
        for l in 0..self.terms.len() {
            let w = working(&self.y, state.beta0, &fits, Some(l));
            let beta = self.update_term(state, l, &w, rng)?;
            fits[l] = self.terms[l].design.mul_vec(&beta);
            state.terms[l].beta = beta;
        }
        if !self.freeze_scales {
            self.update_scales(state, diag, rng)?;
        }
        state.iteration += 1;
        Ok(())
    }

    /// Unnormalized log posterior of a state.
    pub fn log_posterior(&self, state: &ChainState) -> f64 {
        let eta = self.predictor(state);
        let rss: f64 = self.y.iter().zip(&eta).map(|(y, e)| (y - e).powi(2)).sum();
        let mut lp = self.log_cond_sigma2(state, rss, state.sigma2);
        let xi = self.xi_value(state);
        for (t, s) in self.terms.iter().zip(&state.terms) {
            match &t.prior {
                TermPrior::Shrinkage(sh) => {
                    lp += log_half_cauchy(s.lambda.unwrap(), self.xi_tilde(t, xi)).unwrap_or(f64::NEG_INFINITY);
                    lp += log_half_cauchy(s.tau, sh.nu).unwrap_or(f64::NEG_INFINITY);
                }
                TermPrior::PSpline { a, b, .. } => {
                    lp += t
                        .log_prior_beta(&s.beta, None, s.tau, state.sigma2)
                        .unwrap_or(f64::NEG_INFINITY);
                    lp += log_inverse_gamma(s.tau * s.tau, *a, *b).unwrap_or(f64::NEG_INFINITY);
                }
            }
        }
        if let GlobalScale::HalfCauchy { xi0 } = self.global {
            lp += log_half_cauchy(xi, xi0).unwrap_or(f64::NEG_INFINITY);
        }
        lp
    }

    pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain);
        rng
    }

    /// Runs one chain from `initial_state`, retaining every `thin`-th
    /// post-warmup state.
    pub fn run_chain(&self, settings: ChainSettings, seed: u64, chain: u64) -> Result<ChainOutput> {
        let start = self.initial_state()?;
        self.run_chain_from(start, settings, seed, chain)
    }

    pub fn run_chain_from(
        &self,
        mut state: ChainState,
        settings: ChainSettings,
        seed: u64,
        chain: u64,
    ) -> Result<ChainOutput> {
        settings.validate()?;
        self.slice.validate()?;
        let mut rng = Self::chain_rng(seed, chain);
        let nt = self.terms.len();
        let mut diag = ChainDiagnostics {
            lambda: vec![SliceCounters::default(); nt],
            tau: vec![SliceCounters::default(); nt],
            ..Default::default()
        };
        let mut draws = Vec::with_capacity(settings.retained());
        for it in 0..settings.n_iter {
            if let Err(e) = self.sweep(&mut state, &mut diag, &mut rng) {
                return Err(Error::Chain {
                    iteration: it,
                    source: Box::new(e),
                    state: format!("{state:?}"),
                });
            }
            if it >= settings.warmup && (it - settings.warmup).is_multiple_of(settings.thin) {
                draws.push(state.clone());
            }
        }
        diag.kappa_ess = (0..nt)
            .map(|l| {
                let k: Option<Vec<f64>> = draws.iter().map(|d| d.terms[l].kappa()).collect();
                k.map(|k| effective_sample_size(&k))
            })
            .collect();
        Ok(ChainOutput {
            seed,
            chain,
            draws,
            diagnostics: diag,
        })
    }
}

fn working(y: &[f64], beta0: f64, fits: &[Vec<f64>], skip: Option<usize>) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let other: f64 = fits
                .iter()
                .enumerate()
                .filter(|(m, _)| Some(*m) != skip)
                .map(|(_, f)| f[i])
                .sum();
            y[i] - beta0 - other
        })
        .collect()
}

/// Conjugate `sigma^2` draw from `IG(a0 + n/2, b0 + rss/2)`, used as an
/// oracle for the slice update when no shrinkage terms are present.
pub fn conjugate_sigma2<R: Rng + ?Sized>(a0: f64, b0: f64, n: usize, rss: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(a0 + 0.5 * n as f64, 1.0 / (b0 + 0.5 * rss)).expect("valid gamma");
    1.0 / g.sample(rng)
}
