use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// None when the truth has zero variance (R^2 undefined).
    pub r_squared: Option<f64>,
}

fn check_pairs(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no paired values".to_string()));
    }
    if let Some(bad) = pred.iter().chain(truth).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("paired value {bad}")));
    }
    Ok(())
}

pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<RegressionMetrics> {
    check_pairs(pred, truth)?;
    let n = pred.len() as f64;
    let mae = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let rmse = (ss_res / n).sqrt();
    let mean_t = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    let r_squared = if ss_tot > 0.0 {
        Some(1.0 - ss_res / ss_tot)
    } else {
        None
    };
    Ok(RegressionMetrics {
        mae,
        rmse,
        r_squared,
    })
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y)?;
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 pairs for a correlation, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "zero variance in a correlation input".to_string(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Bland-Altman agreement between a method and its reference, plus the
/// Gaussian-error MAE implied by the difference SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_halfwidth: f64,
    /// Empirical 95th percentile of |diff - mean_diff| (nearest rank), for
    /// comparison with the 1.96-sigma halfwidth.
    pub empirical_loa_halfwidth: f64,
    pub gaussian_mae_estimate: f64,
    pub empirical_mae: f64,
}

/// MAE of a zero-mean Gaussian with the given SD: sd * sqrt(2/pi).
pub fn gaussian_mae_from_sd(sd: f64) -> f64 {
    sd * (2.0 / std::f64::consts::PI).sqrt()
}

pub fn agreement_stats(pred: &[f64], truth: &[f64]) -> Result<AgreementStats> {
    check_pairs(pred, truth)?;
    let diffs: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let n = diffs.len() as f64;
    let mean_diff = diffs.iter().sum::<f64>() / n;
    let sd_diff = if diffs.len() > 1 {
        (diffs
            .iter()
            .map(|d| (d - mean_diff) * (d - mean_diff))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let mut abs_centered: Vec<f64> = diffs.iter().map(|d| (d - mean_diff).abs()).collect();
    abs_centered.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((0.95 * n).ceil() as usize).clamp(1, abs_centered.len());
    let empirical_mae = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    Ok(AgreementStats {
        mean_diff,
        sd_diff,
        loa_halfwidth: 1.96 * sd_diff,
        empirical_loa_halfwidth: abs_centered[rank - 1],
        gaussian_mae_estimate: gaussian_mae_from_sd(sd_diff),
        empirical_mae,
    })
}
