//! Data-generating functions of the three simulation scenarios.

use std::f64::consts::PI;

use subshrink_core::{Error, Result};

pub fn truth_scenario1(x: f64) -> f64 {
    (1.0 + 1.5 * x * x) / 20.0
}

pub fn truth_scenario2(x: f64) -> f64 {
    (1.0 + 10.0 * x.sin() + x + 0.64 * x * x) / 20.0
}

/// The four additive effects, `j` in `1..=4`, defined on `[-1, 1]`. Each has
/// range 2 there. Effects 1, 3 and 4 integrate to zero; effect 2 integrates
/// to `-5/3`, so comparisons center curves first.
pub fn truth_scenario3(j: usize, x: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain {
            value: x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    let e = std::f64::consts::E;
    match j {
        1 => Ok(x),
        2 => Ok(2.0 * x * x - 1.5),
        3 => Ok((PI * x).sin()),
        4 => Ok(2.0 * x.exp() / (e - 1.0 / e) - 1.0),
        _ => Err(Error::domain(format!("scenario III has effects 1..=4, got {j}"))),
    }
}
