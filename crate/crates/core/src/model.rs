//! Additive model assembly, the Bayesian P-spline baseline, posterior
//! summaries and curve metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mcmc::{
    ChainDiagnostics, ChainSettings, ChainState, EngineTerm, GlobalScale, Sampler, SliceConfig, TermPrior,
    VarianceUpdate,
};
use crate::prior::{calibrate_nu, kappa, NuCalibration, TermPrecisionInputs};
use crate::spline::{make_basis, SplineBasis};
use crate::stats::{mean, quantile_sorted};
use crate::subspace::{projections, Subspace, SubspaceSpec};

/// Points per covariate domain for curve summaries.
pub const EVAL_GRID: usize = 201;

pub const DEFAULT_INNER_KNOTS: usize = 20;

/// Second-derivative cutoff `c` used to calibrate `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cutoff {
    Fixed(f64),
    /// `c = factor * max(c_p, floor)`, where `c_p` is the largest `|f''|` of
    /// the least-squares fit of `y` within the term's null space.
    Parametric {
        factor: f64,
        floor: f64,
    },
}

impl Cutoff {
    pub fn resolve(&self, c_p: f64) -> f64 {
        match *self {
            Cutoff::Fixed(c) => c,
            Cutoff::Parametric { factor, floor } => factor * c_p.max(floor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NuSpec {
    Fixed(f64),
    Calibrated { cutoff: Cutoff, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorSpec {
    Shrinkage { null_space: SubspaceSpec, nu: NuSpec },
    PSpline { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTermSpec {
    pub name: String,
    /// Column of the covariate matrix.
    pub covariate: usize,
    pub inner_knots: usize,
    /// Basis domain; the covariate range when absent.
    pub domain: Option<(f64, f64)>,
    pub prior: PriorSpec,
}

impl SmoothTermSpec {
    pub fn shrinkage(name: impl Into<String>, covariate: usize, null_space: SubspaceSpec, nu: NuSpec) -> Self {
        Self {
            name: name.into(),
            covariate,
            inner_knots: DEFAULT_INNER_KNOTS,
            domain: None,
            prior: PriorSpec::Shrinkage { null_space, nu },
        }
    }

    pub fn pspline(name: impl Into<String>, covariate: usize) -> Self {
        Self {
            name: name.into(),
            covariate,
            inner_knots: DEFAULT_INNER_KNOTS,
            domain: None,
            prior: PriorSpec::PSpline { a: 0.001, b: 0.001 },
        }
    }

    pub fn with_domain(mut self, lo: f64, hi: f64) -> Self {
        self.domain = Some((lo, hi));
        self
    }

    pub fn with_inner_knots(mut self, m: usize) -> Self {
        self.inner_knots = m;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<SmoothTermSpec>,
    pub intercept: bool,
    /// Sum-to-zero constraint on every term; defaults to on whenever there is
    /// an intercept or more than one term.
    pub constrained: Option<bool>,
    pub sigma2_prior: (f64, f64),
    pub global: GlobalScale,
}

impl ModelSpec {
    /// Defaults: intercept only for additive models, IG(0.001, 0.001) on
    /// `sigma^2`, `xi ~ C+(0, 1)`.
    pub fn new(terms: Vec<SmoothTermSpec>) -> Self {
        let intercept = terms.len() > 1;
        Self {
            terms,
            intercept,
            constrained: None,
            sigma2_prior: (0.001, 0.001),
            global: GlobalScale::HalfCauchy { xi0: 1.0 },
        }
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained.unwrap_or(self.intercept || self.terms.len() > 1)
    }

    pub fn validate(&self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Config("model needs at least one term".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.terms {
            if !seen.insert(t.covariate) {
                return Err(Error::Config(format!(
                    "covariate {} used by more than one term",
                    t.covariate
                )));
            }
            let col = x.get(t.covariate).ok_or_else(|| {
                Error::Config(format!("term `{}` refers to missing covariate {}", t.name, t.covariate))
            })?;
            if col.len() != y.len() {
                return Err(Error::Config(format!(
                    "covariate {} has {} values but y has {}",
                    t.covariate,
                    col.len(),
                    y.len()
                )));
            }
        }
        Ok(())
    }

    /// Same knots and domains with every prior replaced by the P-spline
    /// default `tau^2 ~ IG(0.001, 0.001)`.
    pub fn as_pspline(&self) -> Self {
        let mut spec = self.clone();
        for t in &mut spec.terms {
            t.prior = PriorSpec::PSpline { a: 0.001, b: 0.001 };
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub settings: ChainSettings,
    pub seed: u64,
    pub chains: usize,
    pub slice: SliceConfig,
    /// Monte Carlo draws for each `nu` calibration.
    pub nu_draws: usize,
    pub pspline_update: VarianceUpdate,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            settings: ChainSettings {
                n_iter: 10_000,
                warmup: 5_000,
                thin: 1,
            },
            seed: 1,
            chains: 1,
            slice: SliceConfig::default(),
            nu_draws: 10_000,
            pspline_update: VarianceUpdate::Conjugate,
        }
    }
}

/// Setup facts about one term, kept next to the sampler.
#[derive(Debug, Clone)]
pub struct TermLayout {
    pub name: String,
    pub covariate: usize,
    pub basis: SplineBasis<f64>,
    pub null_space: Option<Subspace<f64>>,
    pub cutoff: Option<f64>,
    pub nu: Option<f64>,
    pub calibration: Option<NuCalibration>,
    pub sigma_ref: Option<f64>,
}

/// A model ready to sample.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub sampler: Sampler,
    pub layout: Vec<TermLayout>,
    pub constrained: bool,
}

fn domain_of(spec: &SmoothTermSpec, x: &[f64]) -> Result<(f64, f64)> {
    if let Some(d) = spec.domain {
        return Ok(d);
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(Error::Config(format!(
            "covariate of term `{}` has no spread",
            spec.name
        )));
    }
    Ok((lo, hi))
}

/// Builds bases, null spaces, `sigma_ref` and `nu` for every term and wraps
/// them in a sampler.
pub fn build_model(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], cfg: &ChainConfig) -> Result<BuiltModel> {
    spec.validate(x, y)?;
    let constrained = spec.is_constrained();
    let mut terms = Vec::with_capacity(spec.terms.len());
    let mut layout = Vec::with_capacity(spec.terms.len());
    for (l, t) in spec.terms.iter().enumerate() {
        let xs = &x[t.covariate];
        let (lo, hi) = domain_of(t, xs)?;
        let basis = make_basis(lo, hi, t.inner_knots)?;
        let design = basis.eval_design(xs)?;
        match &t.prior {
            PriorSpec::Shrinkage { null_space, nu } => {
                let sub = Subspace::new(null_space, xs)?;
                let inputs = TermPrecisionInputs::new(design, sub.projections())?;
                let (nu_value, cutoff, calibration) = match *nu {
                    NuSpec::Fixed(v) => {
                        if !(v > 0.0) {
                            return Err(Error::Config(format!("nu of term `{}` must be positive", t.name)));
                        }
                        (v, None, None)
                    }
                    NuSpec::Calibrated { cutoff, alpha } => {
                        let c_p = sub.fitted_max_abs_deriv2(y, &basis.grid(EVAL_GRID));
                        let c = cutoff.resolve(c_p);
                        let cal = calibrate_nu(&basis, c, alpha, cfg.nu_draws, cfg.seed.wrapping_add(1000 + l as u64))?;
                        (cal.nu, Some(c), Some(cal))
                    }
                };
                let sigma_ref = inputs.sigma_ref;
                terms.push(EngineTerm::shrinkage(t.name.clone(), inputs, nu_value, constrained));
                layout.push(TermLayout {
                    name: t.name.clone(),
                    covariate: t.covariate,
                    basis,
                    null_space: Some(sub),
                    cutoff,
                    nu: Some(nu_value),
                    calibration,
                    sigma_ref: Some(sigma_ref),
                });
            }
            PriorSpec::PSpline { a, b } => {
                let mut term = EngineTerm::pspline(t.name.clone(), design, *a, *b, constrained)?;
                term.prior = TermPrior::PSpline {
                    a: *a,
                    b: *b,
                    update: cfg.pspline_update,
                };
                terms.push(term);
                layout.push(TermLayout {
                    name: t.name.clone(),
                    covariate: t.covariate,
                    basis,
                    null_space: None,
                    cutoff: None,
                    nu: None,
                    calibration: None,
                    sigma_ref: None,
                });
            }
        }
    }
    let mut sampler = Sampler::new(y.to_vec(), terms, spec.intercept, spec.sigma2_prior, spec.global)?;
    sampler.slice = cfg.slice;
    Ok(BuiltModel {
        sampler,
        layout,
        constrained,
    })
}

/// Pointwise posterior summary of one term's curve on its evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub name: String,
    pub covariate: usize,
    pub kappa_mean: Option<f64>,
    pub nu: Option<f64>,
    pub cutoff: Option<f64>,
    pub sigma_ref: Option<f64>,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
    /// Distance of the posterior-mean curve to its null space on the grid.
    pub distance_to_null: Option<f64>,
    pub rmse_to_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub intercept: bool,
    pub constrained: bool,
    pub terms: Vec<TermSummary>,
    /// Merged retained draws of all chains, chain by chain.
    pub draws: Vec<ChainState>,
    pub chain_of_draw: Vec<u64>,
    /// Posterior mean of the predictor at the training points.
    pub fitted_mean: Vec<f64>,
    pub rmse_to_observations: f64,
    /// Root mean square error of `fitted_mean` against the noiseless truth
    /// at the training points, when supplied.
    pub rmse_to_truth: Option<f64>,
    pub sigma2_mean: f64,
    pub diagnostics: Vec<ChainDiagnostics>,
}

impl PosteriorResult {
    pub fn kappa_means(&self) -> Vec<Option<f64>> {
        self.terms.iter().map(|t| t.kappa_mean).collect()
    }

    /// Records metrics against known truths: `fitted` at the training points
    /// and one curve per term on that term's grid. With an intercept only
    /// the shape of each term is identified, so both curves are centered
    /// over the grid first.
    pub fn attach_truth(&mut self, fitted: &[f64], curves: &[Vec<f64>]) -> Result<()> {
        if fitted.len() != self.fitted_mean.len() || curves.len() != self.terms.len() {
            return Err(Error::GridMismatch("truth does not match the fitted model".into()));
        }
        self.rmse_to_truth = Some(rmse_points(&self.fitted_mean, fitted));
        let center = self.intercept;
        for (t, truth) in self.terms.iter_mut().zip(curves) {
            t.rmse_to_truth = Some(if center {
                rmse_curve(
                    &t.grid,
                    &center_on_grid(&t.grid, &t.mean)?,
                    &center_on_grid(&t.grid, truth)?,
                )?
            } else {
                rmse_curve(&t.grid, &t.mean, truth)?
            });
        }
        Ok(())
    }
}

/// Fits a model and summarizes the merged draws of `cfg.chains` chains run
/// in parallel.
pub fn fit(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], cfg: &ChainConfig) -> Result<PosteriorResult> {
    let model = build_model(spec, x, y, cfg)?;
    run_model(&model, cfg)
}

/// Bayesian P-spline fit with the same knots and domains as `spec`.
pub fn fit_pspline_baseline(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64], cfg: &ChainConfig) -> Result<PosteriorResult> {
    fit(&spec.as_pspline(), x, y, cfg)
}

pub fn run_model(model: &BuiltModel, cfg: &ChainConfig) -> Result<PosteriorResult> {
    if cfg.chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    let outputs = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| model.sampler.run_chain(cfg.settings, cfg.seed, c))
        .collect::<Result<Vec<_>>>()?;
    let mut draws = Vec::new();
    let mut chain_of_draw = Vec::new();
    let mut diagnostics = Vec::new();
    for out in outputs {
        chain_of_draw.extend(std::iter::repeat_n(out.chain, out.draws.len()));
        draws.extend(out.draws);
        diagnostics.push(out.diagnostics);
    }
    summarize(model, draws, chain_of_draw, diagnostics)
}

fn summarize(
    model: &BuiltModel,
    draws: Vec<ChainState>,
    chain_of_draw: Vec<u64>,
    diagnostics: Vec<ChainDiagnostics>,
) -> Result<PosteriorResult> {
    let sampler = &model.sampler;
    let n = sampler.n();
    let nd = draws.len();
    let mut fitted_mean = vec![0.0; n];
    for d in &draws {
        for (f, e) in fitted_mean.iter_mut().zip(sampler.predictor(d)) {
            *f += e / nd as f64;
        }
    }
    let y = sampler.y();
    let rmse_to_observations = rmse_points(&fitted_mean, y);

    let mut terms = Vec::with_capacity(model.layout.len());
    for (l, lay) in model.layout.iter().enumerate() {
        let grid = lay.basis.grid(EVAL_GRID);
        let zg = lay.basis.eval_design(&grid)?;
        let design = &sampler.terms()[l].design;
        let mut curves: Vec<Vec<f64>> = Vec::with_capacity(nd);
        for d in &draws {
            let beta = &d.terms[l].beta;
            let mut c = zg.mul_vec(beta);
            if sampler.intercept {
                // shift so the term has zero mean over the training points
                let shift = mean(&design.mul_vec(beta));
                c.iter_mut().for_each(|v| *v -= shift);
            }
            curves.push(c);
        }
        let bands = pointwise_bands(&curves, grid.len());
        let lambdas: Vec<f64> = draws.iter().filter_map(|d| d.terms[l].lambda).collect();
        let kappa_mean = if sampler.terms()[l].is_shrinkage() {
            summarize_kappa(&lambdas)
        } else {
            None
        };
        let distance = match &lay.null_space {
            Some(sub) if nd > 0 => {
                let s_grid = crate::subspace::eval_columns(sub.transforms(), &grid);
                Some(distance_to_null(&grid, &bands.0, &s_grid)?)
            }
            _ => None,
        };
        terms.push(TermSummary {
            name: lay.name.clone(),
            covariate: lay.covariate,
            kappa_mean,
            nu: lay.nu,
            cutoff: lay.cutoff,
            sigma_ref: lay.sigma_ref,
            grid,
            mean: bands.0,
            q05: bands.1,
            q50: bands.2,
            q95: bands.3,
            distance_to_null: distance,
            rmse_to_truth: None,
        });
    }
    let sigma2_mean = if nd > 0 {
        draws.iter().map(|d| d.sigma2).sum::<f64>() / nd as f64
    } else {
        f64::NAN
    };
    Ok(PosteriorResult {
        intercept: sampler.intercept,
        constrained: model.constrained,
        terms,
        draws,
        chain_of_draw,
        fitted_mean,
        rmse_to_observations,
        rmse_to_truth: None,
        sigma2_mean,
        diagnostics,
    })
}

type Bands = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn pointwise_bands(curves: &[Vec<f64>], m: usize) -> Bands {
    let mut out: Bands = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    if curves.is_empty() {
        return out;
    }
    let mut col = vec![0.0; curves.len()];
    for j in 0..m {
        for (c, v) in curves.iter().zip(col.iter_mut()) {
            *v = c[j];
        }
        out.0[j] = mean(&col);
        col.sort_by(|a, b| a.total_cmp(b));
        out.1[j] = quantile_sorted(&col, 0.05);
        out.2[j] = quantile_sorted(&col, 0.5);
        out.3[j] = quantile_sorted(&col, 0.95);
    }
    out
}

fn rmse_points(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Posterior mean of `kappa = 1 / (1 + lambda^2)`; `None` without draws.
pub fn summarize_kappa(lambdas: &[f64]) -> Option<f64> {
    if lambdas.is_empty() {
        return None;
    }
    Some(lambdas.iter().map(|&l| kappa(l)).sum::<f64>() / lambdas.len() as f64)
}

fn check_grid(grid: &[f64], values: &[&[f64]]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::GridMismatch("grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    for v in values {
        if v.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values on a grid of {} points",
                v.len(),
                grid.len()
            )));
        }
    }
    Ok(())
}

fn trapezoid(grid: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..grid.len())
        .map(|i| 0.5 * (grid[i] - grid[i - 1]) * (f(i) + f(i - 1)))
        .sum()
}

/// `sqrt(int (f_hat - f_true)^2 / (hi - lo))` by the trapezoid rule over
/// `grid`, whose ends are `lo` and `hi`.
pub fn rmse_curve(grid: &[f64], f_hat: &[f64], f_true: &[f64]) -> Result<f64> {
    check_grid(grid, &[f_hat, f_true])?;
    let len = grid[grid.len() - 1] - grid[0];
    let int = trapezoid(grid, |i| (f_hat[i] - f_true[i]).powi(2));
    Ok((int / len).sqrt())
}

/// Subtracts the trapezoid-rule mean over the grid.
pub fn center_on_grid(grid: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    check_grid(grid, &[f])?;
    let len = grid[grid.len() - 1] - grid[0];
    let m = trapezoid(grid, |i| f[i]) / len;
    Ok(f.iter().map(|v| v - m).collect())
}

/// `rmse_curve` between `f_hat` and its least-squares projection onto the
/// columns of `s_grid`.
pub fn distance_to_null(grid: &[f64], f_hat: &[f64], s_grid: &Matrix<f64>) -> Result<f64> {
    check_grid(grid, &[f_hat])?;
    if s_grid.rows() != grid.len() {
        return Err(Error::GridMismatch(
            "null-space columns not evaluated on the grid".into(),
        ));
    }
    let proj = projections(s_grid)?.apply_p0(f_hat);
    rmse_curve(grid, f_hat, &proj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::equispaced;

    #[test]
    fn kappa_summary() {
        assert_eq!(summarize_kappa(&[0.0, 0.0]), Some(1.0));
        let v = summarize_kappa(&[0.0, 3f64.sqrt()]).unwrap();
        assert!((v - 0.625).abs() < 1e-12);
        assert!(summarize_kappa(&[0.0, 3f64.sqrt(), 100.0]).unwrap() < v);
        assert_eq!(summarize_kappa(&[]), None);
    }

    #[test]
    fn rmse_examples() {
        let g = equispaced(-1.0, 1.0, 2001);
        let zero = vec![0.0; g.len()];
        assert_eq!(rmse_curve(&g, &zero, &zero).unwrap(), 0.0);
        let off: Vec<f64> = vec![0.3; g.len()];
        assert!((rmse_curve(&g, &off, &zero).unwrap() - 0.3).abs() < 1e-12);
        let r = rmse_curve(&g, &g, &zero).unwrap();
        assert!((r - 1.0 / 3f64.sqrt()).abs() < 1e-6);
        assert!(matches!(rmse_curve(&g, &g[1..], &zero), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn distance_examples() {
        let g = equispaced(-1.0, 1.0, 2001);
        let s = Matrix::from_fn(g.len(), 2, |i, j| if j == 0 { 1.0 } else { g[i] });
        let line: Vec<f64> = g.iter().map(|x| 2.0 - x).collect();
        assert!(distance_to_null(&g, &line, &s).unwrap() < 1e-10);
        let sine: Vec<f64> = g.iter().map(|x| (std::f64::consts::PI * x).sin()).collect();
        let consts = Matrix::from_fn(g.len(), 1, |_, _| 1.0);
        let d = distance_to_null(&g, &sine, &consts).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-4);
        let dup = Matrix::from_fn(g.len(), 2, |_, _| 1.0);
        assert!(matches!(
            distance_to_null(&g, &sine, &dup),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn cutoff_resolution() {
        let rule = Cutoff::Parametric {
            factor: 10.0,
            floor: 0.1,
        };
        assert_eq!(rule.resolve(0.0), 1.0);
        assert_eq!(rule.resolve(0.5), 5.0);
        assert_eq!(Cutoff::Fixed(3.0).resolve(9.0), 3.0);
    }

    #[test]
    fn spec_validation() {
        let x = vec![vec![0.0, 1.0, 2.0]];
        let y = vec![1.0, 2.0, 3.0];
        assert!(ModelSpec::new(vec![]).validate(&x, &y).is_err());
        let dup = ModelSpec::new(vec![SmoothTermSpec::pspline("a", 0), SmoothTermSpec::pspline("b", 0)]);
        assert!(dup.validate(&x, &y).is_err());
        let missing = ModelSpec::new(vec![SmoothTermSpec::pspline("a", 3)]);
        assert!(missing.validate(&x, &y).is_err());
    }

    #[test]
    fn defaults_follow_term_count() {
        let one = ModelSpec::new(vec![SmoothTermSpec::pspline("a", 0)]);
        assert!(!one.intercept && !one.is_constrained());
        let two = ModelSpec::new(vec![SmoothTermSpec::pspline("a", 0), SmoothTermSpec::pspline("b", 1)]);
        assert!(two.intercept && two.is_constrained());
    }
}
