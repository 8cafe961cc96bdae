//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! data = observations.csv        # relative to this file
//! response = y
//! output = results
//! iterations = 10000
//! warmup = 5000
//! xi0 = 1                        # or: fixed_xi = 0.001
//!
//! term.1.covariate = x
//! term.1.null_space = polynomial:2
//! term.1.c_factor = 10           # or: term.1.c = 2.5, or: term.1.nu = 0.1
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use subshrink_core::mcmc::{ChainSettings, GlobalScale, SliceConfig, VarianceUpdate};
use subshrink_core::model::{ChainConfig, Cutoff, ModelSpec, NuSpec, PriorSpec, SmoothTermSpec, DEFAULT_INNER_KNOTS};
use subshrink_core::subspace::SubspaceSpec;

use crate::error::{CliError, CliResult};

const GLOBAL_KEYS: &[&str] = &[
    "data",
    "response",
    "output",
    "seed",
    "chains",
    "iterations",
    "warmup",
    "thin",
    "intercept",
    "constrained",
    "a0",
    "b0",
    "xi0",
    "fixed_xi",
    "nu_draws",
    "slice_width",
    "slice_max_step_out",
    "slice_max_shrink",
    "pspline_update",
];

const TERM_KEYS: &[&str] = &[
    "name",
    "covariate",
    "prior",
    "null_space",
    "inner_knots",
    "domain",
    "nu",
    "c",
    "c_factor",
    "c_floor",
    "alpha",
    "a",
    "b",
];

/// A validated `fit` configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: PathBuf,
    pub response: String,
    /// Covariate column names, indexed like `model.terms[..].covariate`.
    pub covariates: Vec<String>,
    pub output: PathBuf,
    pub model: ModelSpec,
    pub chain: ChainConfig,
}

/// Raw key/value pairs with the line each came from.
fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, (String, usize)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("line {}", i + 1), "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::config(format!("line {}", i + 1), "empty key"));
        }
        if out.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
            return Err(CliError::config(k, "given more than once"));
        }
    }
    Ok(out)
}

struct Pairs {
    map: BTreeMap<String, (String, usize)>,
}

impl Pairs {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(v, _)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn positive(&self, key: &str) -> CliResult<Option<f64>> {
        match self.parse::<f64>(key)? {
            Some(v) if !(v > 0.0 && v.is_finite()) => Err(CliError::config(key, "must be positive")),
            other => Ok(other),
        }
    }

    fn flag(&self, key: &str) -> CliResult<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(CliError::config(key, format!("expected true or false, got `{v}`"))),
        }
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> CliResult<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> CliResult<RunConfig> {
    let pairs = Pairs {
        map: parse_pairs(text)?,
    };

    let mut term_ids = BTreeSet::new();
    for key in pairs.map.keys() {
        if let Some(rest) = key.strip_prefix("term.") {
            let (id, field) = rest
                .split_once('.')
                .ok_or_else(|| CliError::config(key, "expected term.<n>.<field>"))?;
            let id: u32 = id
                .parse()
                .map_err(|_| CliError::config(key, "term index must be an integer"))?;
            if !TERM_KEYS.contains(&field) {
                return Err(CliError::config(key, "unknown key"));
            }
            term_ids.insert(id);
        } else if !GLOBAL_KEYS.contains(&key.as_str()) {
            return Err(CliError::config(key, "unknown key"));
        }
    }

    let data = pairs.raw("data").ok_or_else(|| CliError::config("data", "required"))?;
    let data = base.join(data);
    if !data.is_file() {
        return Err(CliError::config("data", format!("{} does not exist", data.display())));
    }
    let response = pairs.raw("response").unwrap_or("y").to_string();
    let output = base.join(pairs.raw("output").unwrap_or("results"));

    if term_ids.is_empty() {
        return Err(CliError::config("term", "at least one term.<n>.covariate is required"));
    }
    let mut covariates = Vec::new();
    let mut terms = Vec::new();
    for id in term_ids {
        let key = |f: &str| format!("term.{id}.{f}");
        let cov = pairs
            .raw(&key("covariate"))
            .ok_or_else(|| CliError::config(key("covariate"), "required"))?
            .to_string();
        if cov == response {
            return Err(CliError::config(key("covariate"), "cannot be the response column"));
        }
        if covariates.contains(&cov) {
            return Err(CliError::config(key("covariate"), format!("`{cov}` used by two terms")));
        }
        let name = pairs.raw(&key("name")).map_or_else(|| cov.clone(), str::to_string);
        let inner_knots = pairs
            .parse::<usize>(&key("inner_knots"))?
            .unwrap_or(DEFAULT_INNER_KNOTS);
        let domain = match pairs.raw(&key("domain")) {
            None => None,
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                let bounds: Option<Vec<f64>> = parts.iter().map(|p| p.parse().ok()).collect();
                match bounds.as_deref() {
                    Some([lo, hi]) if lo < hi => Some((*lo, *hi)),
                    _ => return Err(CliError::config(key("domain"), "expected `lo, hi` with lo < hi")),
                }
            }
        };
        let prior_kind = pairs.raw(&key("prior")).unwrap_or("shrinkage");
        let prior = match prior_kind {
            "shrinkage" => term_shrinkage(&pairs, &key)?,
            "pspline" => {
                for f in ["null_space", "nu", "c", "c_factor", "c_floor", "alpha"] {
                    if pairs.raw(&key(f)).is_some() {
                        return Err(CliError::config(key(f), "not used by pspline terms"));
                    }
                }
                PriorSpec::PSpline {
                    a: pairs.positive(&key("a"))?.unwrap_or(0.001),
                    b: pairs.positive(&key("b"))?.unwrap_or(0.001),
                }
            }
            other => {
                return Err(CliError::config(
                    key("prior"),
                    format!("expected shrinkage or pspline, got `{other}`"),
                ));
            }
        };
        terms.push(SmoothTermSpec {
            name,
            covariate: covariates.len(),
            inner_knots,
            domain,
            prior,
        });
        covariates.push(cov);
    }

    let mut model = ModelSpec::new(terms);
    if let Some(i) = pairs.flag("intercept")? {
        model.intercept = i;
    }
    model.constrained = pairs.flag("constrained")?;
    model.sigma2_prior = (
        pairs.positive("a0")?.unwrap_or(0.001),
        pairs.positive("b0")?.unwrap_or(0.001),
    );
    model.global = match (pairs.positive("xi0")?, pairs.positive("fixed_xi")?) {
        (Some(_), Some(_)) => return Err(CliError::config("fixed_xi", "xi0 and fixed_xi are mutually exclusive")),
        (_, Some(v)) => GlobalScale::Fixed(v),
        (v, None) => GlobalScale::HalfCauchy { xi0: v.unwrap_or(1.0) },
    };

    let iterations = pairs.parse::<usize>("iterations")?.unwrap_or(10_000);
    let warmup = pairs.parse::<usize>("warmup")?.unwrap_or(iterations / 2);
    let settings = ChainSettings {
        n_iter: iterations,
        warmup,
        thin: pairs.parse::<usize>("thin")?.unwrap_or(1),
    };
    settings
        .validate()
        .map_err(|e| CliError::config("iterations", e.to_string()))?;
    let defaults = SliceConfig::default();
    let slice = SliceConfig {
        initial_width: pairs.positive("slice_width")?.unwrap_or(defaults.initial_width),
        max_step_out: pairs.parse("slice_max_step_out")?.unwrap_or(defaults.max_step_out),
        max_shrink: pairs.parse("slice_max_shrink")?.unwrap_or(defaults.max_shrink),
    };
    slice
        .validate()
        .map_err(|e| CliError::config("slice_width", e.to_string()))?;
    let chains = pairs.parse::<usize>("chains")?.unwrap_or(1);
    if chains == 0 {
        return Err(CliError::config("chains", "must be at least 1"));
    }
    let nu_draws = pairs.parse::<usize>("nu_draws")?.unwrap_or(10_000);
    if nu_draws < 1000 {
        return Err(CliError::config("nu_draws", "must be at least 1000"));
    }
    let pspline_update = match pairs.raw("pspline_update").unwrap_or("conjugate") {
        "conjugate" => VarianceUpdate::Conjugate,
        "slice" => VarianceUpdate::Slice,
        other => {
            return Err(CliError::config(
                "pspline_update",
                format!("expected conjugate or slice, got `{other}`"),
            ))
        }
    };
    let chain = ChainConfig {
        settings,
        seed: pairs.parse::<u64>("seed")?.unwrap_or(1),
        chains,
        slice,
        nu_draws,
        pspline_update,
    };
    Ok(RunConfig {
        data,
        response,
        covariates,
        output,
        model,
        chain,
    })
}

fn term_shrinkage(pairs: &Pairs, key: &dyn Fn(&str) -> String) -> CliResult<PriorSpec> {
    let ns_key = key("null_space");
    let null_space: SubspaceSpec = pairs
        .raw(&ns_key)
        .ok_or_else(|| CliError::config(&ns_key, "required for shrinkage terms"))?
        .parse()
        .map_err(|e: subshrink_core::Error| CliError::config(&ns_key, e.to_string()))?;
    for f in ["a", "b"] {
        if pairs.raw(&key(f)).is_some() {
            return Err(CliError::config(key(f), "only used by pspline terms"));
        }
    }
    let nu = pairs.positive(&key("nu"))?;
    let c = pairs.positive(&key("c"))?;
    let factor = pairs.positive(&key("c_factor"))?;
    let floor = pairs.parse::<f64>(&key("c_floor"))?;
    let alpha = pairs.parse::<f64>(&key("alpha"))?;
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::config(key("alpha"), "must lie in (0, 1)"));
        }
    }
    if let Some(f) = floor {
        if !(f >= 0.0) {
            return Err(CliError::config(key("c_floor"), "must be nonnegative"));
        }
    }
    let nu = match (nu, c, factor.or(floor.map(|_| 10.0))) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(CliError::config(
                key("nu"),
                "a fixed nu excludes c, c_factor and c_floor",
            ));
        }
        (_, Some(_), Some(_)) => return Err(CliError::config(key("c"), "c excludes c_factor and c_floor")),
        (Some(v), None, None) => {
            if alpha.is_some() {
                return Err(CliError::config(key("alpha"), "not used with a fixed nu"));
            }
            NuSpec::Fixed(v)
        }
        (None, Some(c), None) => NuSpec::Calibrated {
            cutoff: Cutoff::Fixed(c),
            alpha: alpha.unwrap_or(0.05),
        },
        (None, None, f) => NuSpec::Calibrated {
            cutoff: Cutoff::Parametric {
                factor: f.unwrap_or(10.0),
                floor: floor.unwrap_or(0.1),
            },
            alpha: alpha.unwrap_or(0.05),
        },
    };
    Ok(PriorSpec::Shrinkage { null_space, nu })
}
