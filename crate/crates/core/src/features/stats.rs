use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary statistics of one per-frame series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubFeatures {
    pub mean: f64,
    /// Population (divide-by-n) standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
    pub range: f64,
    pub entropy: f64,
}

pub const SUBFEATURE_NAMES: [&str; 6] = ["mean", "std", "max", "min", "range", "entropy"];

impl SubFeatures {
    pub fn as_array(&self) -> [f64; 6] {
        [self.mean, self.std, self.max, self.min, self.range, self.entropy]
    }
}

/// Smallest series length accepted by [`spectral_entropy`] and therefore by
/// [`subfeatures`].
pub const MIN_ENTROPY_SAMPLES: usize = 4;

fn check_finite(series: &[f64]) -> Result<()> {
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("series value at index {i}")));
    }
    Ok(())
}

pub fn subfeatures(series: &[f64]) -> Result<SubFeatures> {
    if series.len() < MIN_ENTROPY_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "sub-features need at least {MIN_ENTROPY_SAMPLES} values, got {}",
            series.len()
        )));
    }
    check_finite(series)?;
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let constant = max == min;
    Ok(SubFeatures {
        mean: if constant { max } else { mean },
        std: if constant { 0.0 } else { var.sqrt() },
        max,
        min,
        range: max - min,
        entropy: spectral_entropy(series)?,
    })
}

/// One-sided periodogram of the mean-removed series over the positive
/// frequency bins `1..=n/2` (DC excluded). Non-Nyquist bins carry the usual
/// factor of two of a one-sided density; the overall scale is irrelevant to
/// the entropy and omitted.
pub fn periodogram(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (1..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr();
            if n % 2 == 0 && k == n / 2 {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Normalized spectral entropy in `[0, 1]`: Shannon entropy (base 2) of the
/// periodogram treated as a distribution over positive-frequency bins,
/// divided by `log2(K)` for `K` bins. A constant series (no power) gives 0.
pub fn spectral_entropy(series: &[f64]) -> Result<f64> {
    if series.len() < MIN_ENTROPY_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "spectral entropy needs at least {MIN_ENTROPY_SAMPLES} samples, got {}",
            series.len()
        )));
    }
    check_finite(series)?;
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return Ok(0.0);
    }
    let psd = periodogram(series);
    let total: f64 = psd.iter().sum();
    // Power at the level of mean-removal rounding counts as none.
    let n = series.len() as f64;
    let floor = 2.0 * n * n * (16.0 * f64::EPSILON * scale).powi(2);
    if !(total > floor) {
        return Ok(0.0);
    }
    let k = psd.len() as f64;
    let h: f64 = psd
        .iter()
        .map(|&p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    Ok((h / k.log2()).clamp(0.0, 1.0))
}
