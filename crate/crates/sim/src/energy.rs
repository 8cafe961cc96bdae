//! Synthetic quarter-hourly load curves standing in for grid-operator
//! exports: smooth trigonometric days and days with a sharp morning ramp.

use std::f64::consts::PI;
use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const READINGS_PER_DAY: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DayShape {
    /// Order-4 trigonometric polynomial in the hour of day.
    Trig,
    /// Flat night, steep ramp between 5:00 and 6:30, plateau, evening decline.
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    /// Typical load level (MWh per quarter hour).
    pub level: f64,
    /// Noise standard deviation on the same scale.
    pub noise: f64,
    /// Write `12345,67`-style decimals (quoted) instead of `12345.67`.
    pub decimal_comma: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            level: 14_000.0,
            noise: 20.0,
            decimal_comma: false,
        }
    }
}

/// Hour of day of each reading: `0, 0.25, ..., 23.75`.
pub fn reading_hours() -> Vec<f64> {
    (0..READINGS_PER_DAY).map(|i| i as f64 / 4.0).collect()
}

fn trig_shape(h: f64) -> f64 {
    // amplitudes of cos/sin for omega = 1..4
    const A: [(f64, f64); 4] = [(-0.08, -0.05), (-0.04, 0.03), (0.02, 0.015), (-0.01, 0.008)];
    A.iter()
        .enumerate()
        .map(|(w, &(a, b))| {
            let arg = 2.0 * PI * (w + 1) as f64 * h / 24.0;
            a * arg.cos() + b * arg.sin()
        })
        .sum()
}

fn ramp_shape(h: f64) -> f64 {
    const PTS: [(f64, f64); 7] = [
        (0.0, -0.15),
        (5.0, -0.15),
        (6.5, 0.12),
        (17.0, 0.10),
        (19.0, 0.14),
        (22.0, -0.05),
        (24.0, -0.15),
    ];
    let i = PTS.iter().rposition(|p| p.0 <= h).unwrap_or(0).min(PTS.len() - 2);
    let (x0, y0) = PTS[i];
    let (x1, y1) = PTS[i + 1];
    y0 + (y1 - y0) * (h - x0) / (x1 - x0)
}

/// Relative deviation from the daily level at hour `h`.
pub fn shape_value(shape: DayShape, h: f64) -> f64 {
    match shape {
        DayShape::Trig => trig_shape(h),
        DayShape::Ramp => ramp_shape(h),
    }
}

/// The 96 readings of one synthetic day.
pub fn synthetic_day(shape: DayShape, cfg: &FixtureConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    reading_hours()
        .into_iter()
        .map(|h| {
            let z: f64 = rng.sample(StandardNormal);
            cfg.level * (1.0 + shape_value(shape, h)) + cfg.noise * z
        })
        .collect()
}

fn format_value(v: f64, decimal_comma: bool) -> String {
    let s = format!("{v:.2}");
    if decimal_comma {
        format!("\"{}\"", s.replace('.', ","))
    } else {
        s
    }
}

/// CSV text with a `timestamp,consumption` header; `days` pairs an ISO date
/// with the shape of that day.
pub fn fixture_csv(days: &[(String, DayShape)], cfg: &FixtureConfig, seed: u64) -> String {
    let mut out = String::from("timestamp,consumption\n");
    for (d, (date, shape)) in days.iter().enumerate() {
        let values = synthetic_day(*shape, cfg, seed.wrapping_add(d as u64));
        for (i, v) in values.iter().enumerate() {
            let (hh, mm) = (i / 4, (i % 4) * 15);
            writeln!(out, "{date} {hh:02}:{mm:02},{}", format_value(*v, cfg.decimal_comma)).expect("write to string");
        }
    }
    out
}

/// Eight weekend days and eight Monday/Tuesday days of November 2018, all
/// weekends trigonometric and all weekdays ramped.
pub fn november_2018_fixture() -> Vec<(String, DayShape)> {
    let weekend = ["03", "04", "10", "11", "17", "18", "24", "25"];
    let weekdays = ["05", "06", "12", "13", "19", "20", "26", "27"];
    let mut days: Vec<(String, DayShape)> = weekend
        .iter()
        .map(|d| (format!("2018-11-{d}"), DayShape::Trig))
        .chain(weekdays.iter().map(|d| (format!("2018-11-{d}"), DayShape::Ramp)))
        .collect();
    days.sort_by(|a, b| a.0.cmp(&b.0));
    days
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_piecewise_linear() {
        assert!((ramp_shape(2.0) + 0.15).abs() < 1e-12);
        assert!((ramp_shape(5.75) - (-0.15 + 0.27 * 0.5)).abs() < 1e-12);
        assert!((ramp_shape(23.75) - (-0.05 - 0.1 * 0.875)).abs() < 1e-12);
    }

    #[test]
    fn fixture_rows() {
        let days = vec![("2018-11-03".to_string(), DayShape::Trig)];
        let text = fixture_csv(&days, &FixtureConfig::default(), 1);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 97);
        assert!(lines[1].starts_with("2018-11-03 00:00,"));
        assert!(lines[96].starts_with("2018-11-03 23:45,"));
    }

    #[test]
    fn decimal_comma_is_quoted() {
        let cfg = FixtureConfig {
            decimal_comma: true,
            ..FixtureConfig::default()
        };
        let text = fixture_csv(&[("2018-11-05".to_string(), DayShape::Ramp)], &cfg, 2);
        let row = text.lines().nth(1).unwrap();
        assert!(row.contains(",\"") && row.ends_with('"') && !row.contains('.'));
    }

    #[test]
    fn november_fixture_has_sixteen_days() {
        let days = november_2018_fixture();
        assert_eq!(days.len(), 16);
        assert_eq!(days.iter().filter(|d| d.1 == DayShape::Trig).count(), 8);
    }
}
