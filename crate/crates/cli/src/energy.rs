//! Quarter-hourly load curves: ingestion, preprocessing and per-day fits
//! with a trigonometric null space.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Weekday};
use rayon::prelude::*;
use serde::Serialize;

use subshrink_core::mcmc::{ChainSettings, GlobalScale};
use subshrink_core::model::{fit, ChainConfig, Cutoff, ModelSpec, NuSpec, PosteriorResult, SmoothTermSpec};
use subshrink_core::subspace::SubspaceSpec;
use subshrink_sim::energy::{reading_hours, READINGS_PER_DAY};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDay {
    pub date: NaiveDate,
    pub is_weekend: bool,
    /// Rescaled readings with the day's mean removed.
    pub values: Vec<f64>,
}

/// Parses `12345.6`, `12345,6` and `12.345,6`.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let v = if s.contains(',') {
        s.replace('.', "").replace(',', ".").parse().ok()?
    } else {
        s.parse().ok()?
    };
    f64::is_finite(v).then_some(v)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    [
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Reads `timestamp,consumption` rows (semicolons are accepted as the
/// delimiter too), groups them into days of 96 readings, divides by the
/// global mean absolute value and subtracts each day's mean.
pub fn ingest_energy_csv(path: &Path) -> CliResult<Vec<EnergyDay>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ingest_energy_str(&text, path)
}

pub fn ingest_energy_str(text: &str, path: &Path) -> CliResult<Vec<EnergyDay>> {
    let header = text.lines().next().unwrap_or("");
    let delimiter = if header.contains(';') && !header.contains(',') {
        b';'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let malformed = |line: u64, reason: String| CliError::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };
    if reader.headers()?.len() < 2 {
        return Err(malformed(1, "header needs timestamp and consumption columns".into()));
    }
    let mut by_day: BTreeMap<NaiveDate, Vec<(NaiveDateTime, f64, u64)>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 2 {
            return Err(malformed(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| malformed(line, format!("bad timestamp `{}`", &rec[0])))?;
        let v = parse_decimal(&rec[1]).ok_or_else(|| malformed(line, format!("bad consumption `{}`", &rec[1])))?;
        by_day.entry(ts.date()).or_default().push((ts, v, line));
    }
    let mut days = Vec::with_capacity(by_day.len());
    let mut total_abs = 0.0;
    let mut count = 0usize;
    for (date, mut rows) in by_day {
        if rows.len() != READINGS_PER_DAY {
            return Err(CliError::IncompleteDay {
                date: date.to_string(),
                count: rows.len(),
            });
        }
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(malformed(w[1].2, format!("duplicate timestamp {}", w[1].0)));
        }
        total_abs += rows.iter().map(|r| r.1.abs()).sum::<f64>();
        count += rows.len();
        days.push(EnergyDay {
            date,
            is_weekend: matches!(date.weekday(), Weekday::Sat | Weekday::Sun),
            values: rows.into_iter().map(|r| r.1).collect(),
        });
    }
    let scale = if count > 0 && total_abs > 0.0 {
        total_abs / count as f64
    } else {
        1.0
    };
    for d in &mut days {
        d.values.iter_mut().for_each(|v| *v /= scale);
        let m = d.values.iter().sum::<f64>() / d.values.len() as f64;
        d.values.iter_mut().for_each(|v| *v -= m);
    }
    Ok(days)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyConfig {
    pub chain: ChainConfig,
    pub order: u32,
    pub period: f64,
    pub fixed_xi: f64,
    /// `c = factor * c_p`.
    pub cutoff_factor: f64,
    pub alpha: f64,
    pub inner_knots: usize,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig {
                settings: ChainSettings {
                    n_iter: 12_000,
                    warmup: 2_000,
                    thin: 1,
                },
                ..ChainConfig::default()
            },
            order: 4,
            period: 24.0,
            fixed_xi: 0.001,
            cutoff_factor: 2.0,
            alpha: 0.05,
            inner_knots: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DayFit {
    pub date: String,
    pub is_weekend: bool,
    pub kappa_mean: f64,
    pub cutoff: f64,
    pub nu: f64,
    #[serde(skip)]
    pub result: PosteriorResult,
}

/// The single-term model fitted to every day.
pub fn energy_model(cfg: &EnergyConfig) -> ModelSpec {
    let term = SmoothTermSpec::shrinkage(
        "load",
        0,
        SubspaceSpec::trig(cfg.order, cfg.period),
        NuSpec::Calibrated {
            cutoff: Cutoff::Parametric {
                factor: cfg.cutoff_factor,
                floor: 0.0,
            },
            alpha: cfg.alpha,
        },
    )
    .with_inner_knots(cfg.inner_knots);
    let mut m = ModelSpec::new(vec![term]);
    m.global = GlobalScale::Fixed(cfg.fixed_xi);
    m
}

/// Fits every day concurrently; day `d` uses seed `cfg.chain.seed + d`.
pub fn energy_fit(days: &[EnergyDay], cfg: &EnergyConfig) -> CliResult<Vec<DayFit>> {
    if days.is_empty() {
        return Err(CliError::config("data", "no complete days found"));
    }
    let x = vec![reading_hours()];
    let model = energy_model(cfg);
    days.par_iter()
        .enumerate()
        .map(|(d, day)| {
            let mut chain = cfg.chain;
            chain.seed = cfg.chain.seed.wrapping_add(d as u64);
            let result = fit(&model, &x, &day.values, &chain)?;
            let t = &result.terms[0];
            Ok(DayFit {
                date: day.date.to_string(),
                is_weekend: day.is_weekend,
                kappa_mean: t.kappa_mean.expect("shrinkage term"),
                cutoff: t.cutoff.expect("calibrated term"),
                nu: t.nu.expect("shrinkage term"),
                result,
            })
        })
        .collect()
}
