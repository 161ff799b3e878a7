//! Low-light corruption and gamma intensity correction of normalized intensities.

use crate::error::{Result, UkdError};

pub const DEFAULT_GAMMA: f64 = 3.0;
pub const DEFAULT_DARKEN_FACTOR: f64 = 0.2;
pub const DEFAULT_QUANT_LEVELS: u32 = 256;

fn check_intensities(input: &[f64]) -> Result<()> {
    match input.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(UkdError::precondition(format!(
            "intensity {} at index {i} is outside [0,1]",
            input[i]
        ))),
        None => Ok(()),
    }
}

/// Elementwise `I^(1/γ)`.
pub fn gamma_correct(input: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(UkdError::precondition(format!("gamma must be > 0, got {gamma}")));
    }
    check_intensities(input)?;
    let inv = 1.0 / gamma;
    Ok(input
        .iter()
        .map(|&v| {
            // powf(1/3) is not exactly the cube root; keep the exact value where one exists
            if gamma == 3.0 {
                v.cbrt()
            } else {
                v.powf(inv)
            }
        })
        .collect())
}

/// Dims by `factor` then quantizes onto `levels` evenly spaced values.
pub fn darken(input: &[f64], factor: f64, levels: u32) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(UkdError::precondition(format!(
            "darken needs at least 2 quantization levels, got {levels}"
        )));
    }
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(UkdError::precondition(format!(
            "darken factor must lie in (0,1], got {factor}"
        )));
    }
    check_intensities(input)?;
    let top = (levels - 1) as f64;
    Ok(input.iter().map(|&v| (v * factor * top).round() / top).collect())
}
