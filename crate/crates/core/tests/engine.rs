//! Chain-level invariants of the Gibbs sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use subshrink_core::linalg::cholesky;
use subshrink_core::mcmc::{ChainSettings, EngineTerm, GlobalScale, Sampler};
use subshrink_core::model::{fit, ChainConfig, ModelSpec, NuSpec, SmoothTermSpec};
use subshrink_core::prior::TermPrecisionInputs;
use subshrink_core::spline::make_basis;
use subshrink_core::subspace::{Subspace, SubspaceSpec};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

fn data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let y = x
        .iter()
        .map(|&v| (2.5 * v).sin() + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (x, y)
}

fn term(x: &[f64], inner: usize, constrained: bool) -> EngineTerm {
    let basis = make_basis(-1.0, 1.0, inner).unwrap();
    let z = basis.eval_design(x).unwrap();
    let proj = Subspace::new(&SubspaceSpec::polynomial(1), x).unwrap().projections();
    EngineTerm::shrinkage("f", TermPrecisionInputs::new(z, proj).unwrap(), 0.5, constrained)
}

fn settings(n_iter: usize, warmup: usize) -> ChainSettings {
    ChainSettings {
        n_iter,
        warmup,
        thin: 1,
    }
}

#[test]
fn prior_only_sigma2_matches_inverse_gamma() {
    // IG(3, 2): mean 1, variance 1
    let sampler = Sampler::new(Vec::new(), Vec::new(), false, (3.0, 2.0), GlobalScale::Fixed(1.0)).unwrap();
    let out = sampler.run_chain(settings(11_000, 1_000), 5, 0).unwrap();
    let s: Vec<f64> = out.draws.iter().map(|d| d.sigma2).collect();
    let m = mean(&s);
    // slice draws are close to independent here; allow for mild autocorrelation
    let se = (var(&s) / s.len() as f64).sqrt() * 2.0;
    assert!((m - 1.0).abs() < 3.0 * se, "mean {m}, se {se}");
    let inv: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    // 1/sigma2 ~ Gamma(3, rate 2): mean 1.5
    let se_inv = (var(&inv) / inv.len() as f64).sqrt() * 2.0;
    assert!((mean(&inv) - 1.5).abs() < 3.0 * se_inv);
}

#[test]
fn frozen_scales_give_the_analytic_gaussian() {
    let (x, y) = data(40, 1);
    let mut sampler = Sampler::new(
        y,
        vec![term(&x, 6, false)],
        false,
        (0.001, 0.001),
        GlobalScale::Fixed(1.0),
    )
    .unwrap();
    sampler.freeze_scales = true;
    let mut start = sampler.initial_state().unwrap();
    start.sigma2 = 0.04;
    start.terms[0].lambda = Some(0.8);
    start.terms[0].tau = 1.3;
    let want = sampler.conditional_mean(&start, 0).unwrap();
    let w = sampler.working_observations(&start, 0);
    let (q, _) = sampler.conditional_system(&start, 0, &w);
    let cov_00 = cholesky(&q).unwrap().solve(&{
        let mut e = vec![0.0; q.dim()];
        e[0] = 1.0;
        e
    })[0];
    let out = sampler.run_chain_from(start, settings(10_000, 0), 9, 0).unwrap();
    for j in 0..want.len() {
        let b: Vec<f64> = out.draws.iter().map(|d| d.terms[0].beta[j]).collect();
        let se = (var(&b) / b.len() as f64).sqrt();
        assert!((mean(&b) - want[j]).abs() < 4.0 * se, "coef {j}");
    }
    let b0: Vec<f64> = out.draws.iter().map(|d| d.terms[0].beta[0]).collect();
    assert!((var(&b0) / cov_00 - 1.0).abs() < 0.1);
    assert!(out
        .draws
        .iter()
        .all(|d| d.sigma2 == 0.04 && d.terms[0].lambda == Some(0.8)));
}

#[test]
fn retained_count_and_determinism() {
    let (x, y) = data(30, 2);
    let sampler = Sampler::new(
        y,
        vec![term(&x, 4, false)],
        false,
        (0.001, 0.001),
        GlobalScale::HalfCauchy { xi0: 1.0 },
    )
    .unwrap();
    let a = sampler.run_chain(settings(10_000, 5_000), 3, 0).unwrap();
    assert_eq!(a.draws.len(), 5_000);
    let b = sampler.run_chain(settings(10_000, 5_000), 3, 0).unwrap();
    assert_eq!(a.draws, b.draws);
    let c = sampler.run_chain(settings(10_000, 5_000), 3, 1).unwrap();
    assert_ne!(a.draws, c.draws);
    assert!(a.draws.iter().all(|d| sampler.log_posterior(d).is_finite()));
}

#[test]
fn constraint_holds_on_every_draw() {
    let (x, y) = data(50, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x2: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
    let terms = vec![term(&x, 8, true), term(&x2, 8, true)];
    let sampler = Sampler::new(y, terms, true, (0.001, 0.001), GlobalScale::HalfCauchy { xi0: 1.0 }).unwrap();
    let out = sampler.run_chain(settings(1_500, 500), 8, 0).unwrap();
    for d in &out.draws {
        for t in &d.terms {
            assert!(t.beta.iter().sum::<f64>().abs() < 1e-8);
        }
    }
}

#[test]
fn scale_update_order_does_not_change_the_target() {
    let (x, y) = data(60, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x2: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
    let make = |reverse: bool| {
        let terms = vec![term(&x, 6, true), term(&x2, 6, true)];
        let mut s = Sampler::new(
            y.clone(),
            terms,
            true,
            (0.001, 0.001),
            GlobalScale::HalfCauchy { xi0: 1.0 },
        )
        .unwrap();
        s.reverse_scale_order = reverse;
        let out = s.run_chain(settings(12_000, 2_000), 11, 0).unwrap();
        mean(&out.draws.iter().map(|d| d.sigma2).collect::<Vec<_>>())
    };
    let (fwd, rev) = (make(false), make(true));
    assert!((fwd / rev - 1.0).abs() < 0.05, "{fwd} vs {rev}");
}

#[test]
fn two_chain_fit_summaries_are_consistent() {
    let (x, y) = data(80, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x2: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = y.iter().zip(&x2).map(|(a, b)| a + b * b + 3.0).collect();
    let spec = ModelSpec::new(vec![
        SmoothTermSpec::shrinkage("a", 0, SubspaceSpec::polynomial(1), NuSpec::Fixed(0.1)),
        SmoothTermSpec::shrinkage("b", 1, SubspaceSpec::polynomial(2), NuSpec::Fixed(0.1)),
    ]);
    let cfg = ChainConfig {
        settings: settings(1_500, 500),
        chains: 2,
        ..ChainConfig::default()
    };
    let r = fit(&spec, &[x, x2], &y, &cfg).unwrap();
    assert_eq!(r.draws.len(), 2_000);
    assert!(r.intercept && r.constrained);
    for t in &r.terms {
        let k = t.kappa_mean.unwrap();
        assert!(k > 0.0 && k < 1.0);
        for i in 0..t.grid.len() {
            assert!(t.q05[i] <= t.q50[i] && t.q50[i] <= t.q95[i]);
        }
    }
    let fitted_mean = mean(&r.fitted_mean);
    assert!((fitted_mean - mean(&y)).abs() < 0.1);
}
