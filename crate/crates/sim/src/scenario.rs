//! Scenario layouts, data generation and the replication driver.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use subshrink_core::mcmc::{ChainSettings, GlobalScale};
use subshrink_core::model::{
    build_model, distance_to_null, run_model, ChainConfig, Cutoff, ModelSpec, NuSpec, PosteriorResult, SmoothTermSpec,
};
use subshrink_core::stats::{mean, median};
use subshrink_core::subspace::{eval_columns, SubspaceSpec, Transform};
use subshrink_core::{Error, Result};

use crate::truth::{truth_scenario1, truth_scenario2, truth_scenario3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    I,
    II,
    III,
}

impl ScenarioId {
    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(Self::I),
            2 => Ok(Self::II),
            3 => Ok(Self::III),
            _ => Err(Error::Config(format!("scenario must be 1, 2 or 3, got {n}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedNullSpace {
    pub name: String,
    pub spec: SubspaceSpec,
}

impl NamedNullSpace {
    pub fn new(name: &str, spec: SubspaceSpec) -> Self {
        Self {
            name: name.to_string(),
            spec,
        }
    }
}

fn custom(cols: &[Transform]) -> SubspaceSpec {
    SubspaceSpec::custom(cols.to_vec())
}

/// `[1, x]` and `[1, x, x^2]`.
pub fn scenario1_null_spaces() -> Vec<NamedNullSpace> {
    vec![
        NamedNullSpace::new("linear", SubspaceSpec::polynomial(1)),
        NamedNullSpace::new("quadratic", SubspaceSpec::polynomial(2)),
    ]
}

/// Scenario I sets plus `[1, sin(x)]` and the complex `[1, x, x^2, sin(x)]`.
pub fn scenario2_null_spaces() -> Vec<NamedNullSpace> {
    let mut v = scenario1_null_spaces();
    v.push(NamedNullSpace::new(
        "sin",
        custom(&[Transform::Const, Transform::Sin(1.0)]),
    ));
    v.push(NamedNullSpace::new(
        "complex",
        custom(&[
            Transform::Const,
            Transform::Power(1),
            Transform::Power(2),
            Transform::Sin(1.0),
        ]),
    ));
    v
}

/// One null space per additive effect; the last deliberately misses the
/// exponential shape.
pub fn scenario3_null_spaces() -> Vec<NamedNullSpace> {
    vec![
        NamedNullSpace::new("f1:linear", SubspaceSpec::polynomial(1)),
        NamedNullSpace::new("f2:quadratic", SubspaceSpec::polynomial(2)),
        NamedNullSpace::new(
            "f3:trig",
            custom(&[Transform::Const, Transform::Sin(PI), Transform::Cos(PI)]),
        ),
        NamedNullSpace::new("f4:constant", SubspaceSpec::polynomial(0)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n: usize,
    pub sigma: f64,
    pub replications: usize,
    /// Separate single-term fits in scenarios I and II; the terms of one
    /// additive fit in scenario III.
    pub null_spaces: Vec<NamedNullSpace>,
    pub seeds: Vec<u64>,
}

impl ScenarioSpec {
    /// Desk-scale defaults: 20 replications for I and II, 10 for III; scenario
    /// III uses `sigma = 0.5` unless overridden.
    pub fn desk(id: ScenarioId, sigma: Option<f64>) -> Self {
        let (replications, null_spaces, default_sigma) = match id {
            ScenarioId::I => (20, scenario1_null_spaces(), 0.75),
            ScenarioId::II => (20, scenario2_null_spaces(), 0.75),
            ScenarioId::III => (10, scenario3_null_spaces(), 0.5),
        };
        Self::with_replications(id, sigma.unwrap_or(default_sigma), replications, null_spaces)
    }

    pub fn paper_scale(id: ScenarioId, sigma: Option<f64>) -> Self {
        let d = Self::desk(id, sigma);
        Self::with_replications(id, d.sigma, 100, d.null_spaces)
    }

    pub fn with_replications(
        id: ScenarioId,
        sigma: f64,
        replications: usize,
        null_spaces: Vec<NamedNullSpace>,
    ) -> Self {
        let base = match id {
            ScenarioId::I => 10_000,
            ScenarioId::II => 20_000,
            ScenarioId::III => 30_000,
        };
        Self {
            id,
            n: 100,
            sigma,
            replications,
            null_spaces,
            seeds: (0..replications as u64).map(|r| base + r).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if self.seeds.len() != self.replications {
            return Err(Error::Config(format!(
                "{} seeds for {} replications",
                self.seeds.len(),
                self.replications
            )));
        }
        if self.n < 10 {
            return Err(Error::Config("n must be at least 10".into()));
        }
        if self.id == ScenarioId::III && self.null_spaces.len() != 4 {
            return Err(Error::Config("scenario III needs one null space per effect".into()));
        }
        Ok(())
    }

    /// Covariate domain shared by the bases and evaluation grids.
    pub fn domain(&self) -> (f64, f64) {
        match self.id {
            ScenarioId::I | ScenarioId::II => (-2.0 * PI, 2.0 * PI),
            ScenarioId::III => (-1.0, 1.0),
        }
    }

    pub fn truth_term(&self, term: usize, x: f64) -> Result<f64> {
        match self.id {
            ScenarioId::I => Ok(truth_scenario1(x)),
            ScenarioId::II => Ok(truth_scenario2(x)),
            ScenarioId::III => truth_scenario3(term + 1, x),
        }
    }

    pub fn num_covariates(&self) -> usize {
        match self.id {
            ScenarioId::III => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Covariates by column.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Noiseless predictor at the observations.
    pub truth: Vec<f64>,
}

/// Covariates (equally spaced on `[-2 pi, 2 pi]` for I and II, independent
/// uniforms on `[-1, 1]` for III) with Gaussian noise of scale `spec.sigma`.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep data and chain streams apart for the same seed
    rng.set_stream(u64::MAX);
    let n = spec.n;
    let x: Vec<Vec<f64>> = match spec.id {
        ScenarioId::I | ScenarioId::II => {
            let (lo, hi) = spec.domain();
            vec![(0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()]
        }
        ScenarioId::III => (0..4)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect(),
    };
    let mut truth = vec![0.0; n];
    for (j, col) in x.iter().enumerate() {
        for (t, &xi) in truth.iter_mut().zip(col) {
            *t += spec.truth_term(j, xi)?;
        }
    }
    let y = truth
        .iter()
        .map(|&t| {
            let z: f64 = rng.sample(StandardNormal);
            t + spec.sigma * z
        })
        .collect();
    Ok(Dataset { x, y, truth })
}

/// `c = 10 max(c_p, 0.1)`.
pub fn cutoff_rule(c_p: f64) -> f64 {
    Cutoff::Parametric {
        factor: 10.0,
        floor: 0.1,
    }
    .resolve(c_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub chain: ChainConfig,
    pub inner_knots: usize,
    pub alpha: f64,
    pub xi0: f64,
    /// Fixed `nu` of the additive scenario.
    pub nu_additive: f64,
    /// Also fit the Bayesian P-spline to the single-term scenarios.
    pub pspline_single: bool,
}

impl HarnessConfig {
    /// 2000 iterations with 1000 warmup.
    pub fn desk() -> Self {
        Self {
            chain: ChainConfig {
                settings: ChainSettings {
                    n_iter: 2_000,
                    warmup: 1_000,
                    thin: 1,
                },
                nu_draws: 4_000,
                ..ChainConfig::default()
            },
            inner_knots: 20,
            alpha: 0.05,
            xi0: 1.0,
            nu_additive: 0.1,
            pspline_single: false,
        }
    }

    /// 10000/5000 iterations for I and II, 15000/7500 for III.
    pub fn paper_scale(id: ScenarioId) -> Self {
        let n_iter = if id == ScenarioId::III { 15_000 } else { 10_000 };
        let mut c = Self::desk();
        c.chain.settings = ChainSettings {
            n_iter,
            warmup: n_iter / 2,
            thin: 1,
        };
        c.chain.nu_draws = 10_000;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub scenario: ScenarioId,
    pub replication: usize,
    pub seed: u64,
    pub sigma: f64,
    /// `shrinkage` or `pspline`.
    pub model: String,
    pub null_space: String,
    pub term: String,
    pub kappa_mean: Option<f64>,
    pub nu: Option<f64>,
    pub cutoff: Option<f64>,
    /// Integrated RMSE of the term's posterior-mean curve to its truth.
    pub rmse_term_to_truth: f64,
    /// Integrated RMSE of the term's posterior-mean curve to its nearest
    /// element of the null space.
    pub distance_to_null: f64,
    pub rmse_to_observations: f64,
    pub rmse_to_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub seed: u64,
    pub model: String,
    pub null_space: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub model: String,
    pub null_space: String,
    pub term: String,
    pub count: usize,
    pub median_kappa: Option<f64>,
    pub mean_kappa: Option<f64>,
    pub mean_rmse_term_to_truth: f64,
    pub mean_distance_to_null: f64,
    pub mean_rmse_to_observations: f64,
    pub mean_rmse_to_truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub config: HarnessConfig,
    pub rows: Vec<ReplicationRow>,
    pub failures: Vec<ReplicationFailure>,
    pub summary: Vec<GroupSummary>,
}

impl ScenarioReport {
    pub fn group(&self, model: &str, null_space: &str) -> Option<&GroupSummary> {
        self.summary
            .iter()
            .find(|g| g.model == model && g.null_space == null_space)
    }
}

/// One fitted model of one replication.
struct Fit {
    model: &'static str,
    null_space_names: Vec<String>,
    result: PosteriorResult,
}

fn single_term_spec(ns: &NamedNullSpace, spec: &ScenarioSpec, cfg: &HarnessConfig) -> ModelSpec {
    let (lo, hi) = spec.domain();
    let term = SmoothTermSpec::shrinkage(
        "f",
        0,
        ns.spec.clone(),
        NuSpec::Calibrated {
            cutoff: Cutoff::Parametric {
                factor: 10.0,
                floor: 0.1,
            },
            alpha: cfg.alpha,
        },
    )
    .with_domain(lo, hi)
    .with_inner_knots(cfg.inner_knots);
    let mut m = ModelSpec::new(vec![term]);
    m.global = GlobalScale::HalfCauchy { xi0: cfg.xi0 };
    m
}

fn additive_spec(spec: &ScenarioSpec, cfg: &HarnessConfig) -> ModelSpec {
    let (lo, hi) = spec.domain();
    let terms = spec
        .null_spaces
        .iter()
        .enumerate()
        .map(|(j, ns)| {
            SmoothTermSpec::shrinkage(
                format!("f{}", j + 1),
                j,
                ns.spec.clone(),
                NuSpec::Fixed(cfg.nu_additive),
            )
            .with_domain(lo, hi)
            .with_inner_knots(cfg.inner_knots)
        })
        .collect();
    let mut m = ModelSpec::new(terms);
    m.global = GlobalScale::HalfCauchy { xi0: cfg.xi0 };
    m
}

fn fit_one(model: &ModelSpec, data: &Dataset, cfg: &ChainConfig) -> Result<PosteriorResult> {
    let built = build_model(model, &data.x, &data.y, cfg)?;
    run_model(&built, cfg)
}

fn rows_for(spec: &ScenarioSpec, rep: usize, seed: u64, data: &Dataset, fit: &Fit) -> Result<Vec<ReplicationRow>> {
    let mut res = fit.result.clone();
    let curves = res
        .terms
        .iter()
        .enumerate()
        .map(|(l, t)| {
            let j = if spec.id == ScenarioId::III { l } else { 0 };
            t.grid
                .iter()
                .map(|&x| spec.truth_term(j, x))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    res.attach_truth(&data.truth, &curves)?;
    let mut rows = Vec::with_capacity(res.terms.len());
    for (l, t) in res.terms.iter().enumerate() {
        let ns_name = &fit.null_space_names[l];
        let ns = spec
            .null_spaces
            .iter()
            .find(|n| &n.name == ns_name)
            .expect("null space of a fitted term");
        let s_grid = eval_columns(&ns.spec.transforms()?, &t.grid);
        rows.push(ReplicationRow {
            scenario: spec.id,
            replication: rep,
            seed,
            sigma: spec.sigma,
            model: fit.model.to_string(),
            null_space: ns_name.clone(),
            term: t.name.clone(),
            kappa_mean: t.kappa_mean,
            nu: t.nu,
            cutoff: t.cutoff,
            rmse_term_to_truth: t.rmse_to_truth.expect("truth attached"),
            distance_to_null: distance_to_null(&t.grid, &t.mean, &s_grid)?,
            rmse_to_observations: res.rmse_to_observations,
            rmse_to_truth: res.rmse_to_truth.expect("truth attached"),
        });
    }
    Ok(rows)
}

type RepOutcome = (Vec<ReplicationRow>, Vec<ReplicationFailure>);

fn run_replication(spec: &ScenarioSpec, cfg: &HarnessConfig, rep: usize) -> Result<RepOutcome> {
    let seed = spec.seeds[rep];
    let data = generate(spec, seed)?;
    let mut chain = cfg.chain;
    chain.seed = seed;
    let mut jobs: Vec<(&'static str, Vec<String>, ModelSpec)> = Vec::new();
    match spec.id {
        ScenarioId::I | ScenarioId::II => {
            for ns in &spec.null_spaces {
                let m = single_term_spec(ns, spec, cfg);
                if cfg.pspline_single {
                    jobs.push(("pspline", vec![ns.name.clone()], m.as_pspline()));
                }
                jobs.push(("shrinkage", vec![ns.name.clone()], m));
            }
        }
        ScenarioId::III => {
            let m = additive_spec(spec, cfg);
            let names: Vec<String> = spec.null_spaces.iter().map(|n| n.name.clone()).collect();
            jobs.push(("pspline", names.clone(), m.as_pspline()));
            jobs.push(("shrinkage", names, m));
        }
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (model, names, m) in jobs {
        let outcome = fit_one(&m, &data, &chain).and_then(|result| {
            let fit = Fit {
                model,
                null_space_names: names.clone(),
                result,
            };
            rows_for(spec, rep, seed, &data, &fit)
        });
        match outcome {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(ReplicationFailure {
                replication: rep,
                seed,
                model: model.to_string(),
                null_space: names.join("+"),
                error: e.to_string(),
            }),
        }
    }
    Ok((rows, failures))
}

/// Runs all replications in parallel. Failed fits are recorded and the run
/// continues; rows come back ordered by replication.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &HarnessConfig) -> Result<ScenarioReport> {
    spec.validate()?;
    let outcomes = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replication(spec, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in outcomes {
        rows.extend(r);
        failures.extend(f);
    }
    let summary = summarize(&rows);
    Ok(ScenarioReport {
        spec: spec.clone(),
        config: *cfg,
        rows,
        failures,
        summary,
    })
}

fn summarize(rows: &[ReplicationRow]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let k = (r.model.clone(), r.null_space.clone(), r.term.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(model, null_space, term)| {
            let g: Vec<&ReplicationRow> = rows
                .iter()
                .filter(|r| r.model == model && r.null_space == null_space && r.term == term)
                .collect();
            let kappas: Vec<f64> = g.iter().filter_map(|r| r.kappa_mean).collect();
            let avg = |f: fn(&ReplicationRow) -> f64| mean(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            GroupSummary {
                count: g.len(),
                median_kappa: (!kappas.is_empty()).then(|| median(&kappas)),
                mean_kappa: (!kappas.is_empty()).then(|| mean(&kappas)),
                mean_rmse_term_to_truth: avg(|r| r.rmse_term_to_truth),
                mean_distance_to_null: avg(|r| r.distance_to_null),
                mean_rmse_to_observations: avg(|r| r.rmse_to_observations),
                mean_rmse_to_truth: avg(|r| r.rmse_to_truth),
                model,
                null_space,
                term,
            }
        })
        .collect()
}
