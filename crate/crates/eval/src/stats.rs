//! Error samples and their summaries.

use serde::{Deserialize, Serialize};

use crate::EvalError;

/// One pose-error reading with where it came from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSample {
    pub translation_mm: f64,
    pub rotation_deg: f64,
    pub frame: u64,
    pub user: u32,
    pub trajectory: u32,
    pub reading: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Mean of absolute values.
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single value.
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub count: usize,
    pub translation_mm: ChannelStats,
    pub rotation_deg: ChannelStats,
}

pub fn channel_stats(values: &[f64]) -> Result<ChannelStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let n = abs.len() as f64;
    let mean = abs.iter().sum::<f64>() / n;
    let sd = if abs.len() > 1 {
        (abs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = abs;
    sorted.sort_by(f64::total_cmp);
    Ok(ChannelStats {
        mean,
        sd,
        median: quantile_sorted(&sorted, 0.5),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

/// Linear-interpolation quantile of sorted data; `q = 0.5` is the usual
/// median (midpoint of the two central values for even counts).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(samples: &[ErrorSample]) -> Result<StatsSummary, EvalError> {
    let t: Vec<f64> = samples.iter().map(|s| s.translation_mm).collect();
    let r: Vec<f64> = samples.iter().map(|s| s.rotation_deg).collect();
    Ok(StatsSummary {
        count: samples.len(),
        translation_mm: channel_stats(&t)?,
        rotation_deg: channel_stats(&r)?,
    })
}

/// Box-plot data for one channel. Whiskers reach the most extreme values
/// within 1.5 IQR of the quartiles, about ±2.7σ for normal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPlotRow {
    pub channel: String,
    pub whisker_low: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

pub fn box_plot(channel: &str, values: &[f64]) -> Result<BoxPlotRow, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
    Ok(BoxPlotRow {
        channel: channel.to_string(),
        whisker_low: inside.first().copied().unwrap_or(q1),
        q1,
        median: quantile_sorted(&sorted, 0.5),
        q3,
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: sorted.len() - inside.len(),
    })
}

pub fn box_plot_table(samples: &[ErrorSample]) -> Result<Vec<BoxPlotRow>, EvalError> {
    let t: Vec<f64> = samples.iter().map(|s| s.translation_mm).collect();
    let r: Vec<f64> = samples.iter().map(|s| s.rotation_deg).collect();
    Ok(vec![box_plot("translation_mm", &t)?, box_plot("rotation_deg", &r)?])
}
