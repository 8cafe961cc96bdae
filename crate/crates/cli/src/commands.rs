//! The four subcommands as library functions.

use std::path::{Path, PathBuf};

use serde::Serialize;

use subshrink_core::model::fit;
use subshrink_core::study::{emit_study, StudyConfig, StudyRow};
use subshrink_sim::energy::{fixture_csv, november_2018_fixture, FixtureConfig};
use subshrink_sim::{run_scenario, HarnessConfig, ScenarioId, ScenarioReport, ScenarioSpec};

use crate::config::{parse_config, RunConfig};
use crate::energy::{energy_fit, ingest_energy_csv, DayFit, EnergyConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_results, Manifest, OutputDir};

/// Reads numeric columns by name from a headed CSV file.
pub fn read_columns(path: &Path, names: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| CliError::config("data", format!("column `{n}` not found in {}", path.display())))
        })
        .collect::<CliResult<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let field = rec.get(i).unwrap_or("").trim();
            let v: f64 = field.parse().map_err(|_| CliError::MalformedRow {
                path: path.to_path_buf(),
                line,
                reason: format!("`{field}` in column `{}` is not a number", &header[i]),
            })?;
            if !v.is_finite() {
                return Err(CliError::MalformedRow {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("non-finite value in column `{}`", &header[i]),
                });
            }
            c.push(v);
        }
    }
    Ok(cols)
}

pub fn run_fit_config(cfg: &RunConfig) -> CliResult<Manifest> {
    let mut names: Vec<&str> = cfg.covariates.iter().map(String::as_str).collect();
    names.push(&cfg.response);
    let mut cols = read_columns(&cfg.data, &names)?;
    let y = cols.pop().expect("response column");
    let result = fit(&cfg.model, &cols, &y, &cfg.chain)?;
    write_results(&result, &cfg.output)
}

pub fn run_fit(config: &Path) -> CliResult<Manifest> {
    run_fit_config(&parse_config(config)?)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub scenario: ScenarioId,
    pub paper_scale: bool,
    /// Noise levels to run; empty means the scenario defaults.
    pub sigmas: Vec<f64>,
    pub replications: Option<usize>,
    pub output: PathBuf,
}

/// Default noise levels: both levels for I and II, 0.5 for III.
pub fn default_sigmas(id: ScenarioId) -> Vec<f64> {
    match id {
        ScenarioId::I | ScenarioId::II => vec![0.75, 2.5],
        ScenarioId::III => vec![0.5],
    }
}

pub fn simulate_reports(args: &SimulateArgs) -> CliResult<Vec<ScenarioReport>> {
    let sigmas = if args.sigmas.is_empty() {
        default_sigmas(args.scenario)
    } else {
        args.sigmas.clone()
    };
    let cfg = if args.paper_scale {
        HarnessConfig::paper_scale(args.scenario)
    } else {
        HarnessConfig::desk()
    };
    sigmas
        .into_iter()
        .map(|s| {
            let mut spec = if args.paper_scale {
                ScenarioSpec::paper_scale(args.scenario, Some(s))
            } else {
                ScenarioSpec::desk(args.scenario, Some(s))
            };
            if let Some(r) = args.replications {
                spec = ScenarioSpec::with_replications(args.scenario, s, r, spec.null_spaces);
            }
            spec.validate()?;
            Ok(run_scenario(&spec, &cfg)?)
        })
        .collect()
}

/// Writes `replications.csv`, `summary.csv`, `report.json` and the manifest.
pub fn run_simulate(args: &SimulateArgs) -> CliResult<(Vec<ScenarioReport>, Manifest)> {
    let reports = simulate_reports(args)?;
    let mut dir = OutputDir::create(&args.output, "simulate")?;
    let rows: Vec<_> = reports.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    dir.write_csv("replications.csv", &rows)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sigma",
        "model",
        "null_space",
        "term",
        "count",
        "median_kappa",
        "mean_kappa",
        "mean_rmse_term_to_truth",
        "mean_distance_to_null",
        "mean_rmse_to_observations",
        "mean_rmse_to_truth",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &reports {
        for g in &r.summary {
            w.write_record([
                r.spec.sigma.to_string(),
                g.model.clone(),
                g.null_space.clone(),
                g.term.clone(),
                g.count.to_string(),
                opt(g.median_kappa),
                opt(g.mean_kappa),
                g.mean_rmse_term_to_truth.to_string(),
                g.mean_distance_to_null.to_string(),
                g.mean_rmse_to_observations.to_string(),
                g.mean_rmse_to_truth.to_string(),
            ])?;
        }
    }
    let summary = w
        .into_inner()
        .map_err(|e| CliError::io("summary.csv", e.into_error()))?;
    dir.write("summary.csv", &summary)?;
    dir.write_json("report.json", &reports)?;
    let manifest = dir.finish()?;
    Ok((reports, manifest))
}

pub fn run_study(cfg: &StudyConfig, output: &Path) -> CliResult<(Vec<StudyRow>, Manifest)> {
    cfg.validate().map_err(|e| CliError::config("study", e.to_string()))?;
    let rows = emit_study(cfg)?;
    let mut dir = OutputDir::create(output, "study")?;
    dir.write_csv("study.csv", &rows)?;
    dir.write_json("study_config.json", cfg)?;
    Ok((rows, dir.finish()?))
}

#[derive(Serialize)]
struct EnergyReport<'a> {
    config: &'a EnergyConfig,
    days: &'a [DayFit],
    mean_kappa_weekend: Option<f64>,
    mean_kappa_weekday: Option<f64>,
}

fn mean_kappa(days: &[DayFit], weekend: bool) -> Option<f64> {
    let v: Vec<f64> = days
        .iter()
        .filter(|d| d.is_weekend == weekend)
        .map(|d| d.kappa_mean)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Writes the synthetic November 2018 fixture to `path`.
pub fn write_energy_fixture(path: &Path, seed: u64) -> CliResult<()> {
    let text = fixture_csv(&november_2018_fixture(), &FixtureConfig::default(), seed);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `days.csv` (one row per day), `curves.csv`, `energy.json` and
/// the manifest.
pub fn run_energy(data: &Path, cfg: &EnergyConfig, output: &Path) -> CliResult<(Vec<DayFit>, Manifest)> {
    if !data.is_file() {
        return Err(CliError::config("data", format!("{} does not exist", data.display())));
    }
    let days = ingest_energy_csv(data)?;
    let fits = energy_fit(&days, cfg)?;
    let mut dir = OutputDir::create(output, "energy")?;
    dir.write_csv("days.csv", &fits)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "hour", "mean", "q05", "q50", "q95"])?;
    for f in &fits {
        let t = &f.result.terms[0];
        for i in 0..t.grid.len() {
            w.write_record([
                f.date.clone(),
                t.grid[i].to_string(),
                t.mean[i].to_string(),
                t.q05[i].to_string(),
                t.q50[i].to_string(),
                t.q95[i].to_string(),
            ])?;
        }
    }
    let curves = w.into_inner().map_err(|e| CliError::io("curves.csv", e.into_error()))?;
    dir.write("curves.csv", &curves)?;
    dir.write_json(
        "energy.json",
        &EnergyReport {
            config: cfg,
            days: &fits,
            mean_kappa_weekend: mean_kappa(&fits, true),
            mean_kappa_weekday: mean_kappa(&fits, false),
        },
    )?;
    let manifest = dir.finish()?;
    Ok((fits, manifest))
}
