use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// ROC curve with one operating point per distinct threshold, thresholds
/// descending, plus the two trivial endpoints (sens 0 / spec 1 at +inf and
/// sens 1 / spec 0 at -inf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "{n_pos} positive and {n_neg} negative examples"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Operating point at every distinct score, predicting positive when
/// score >= threshold.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (n_pos, n_neg) = check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        sensitivity: 0.0,
        specificity: 1.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        // Consume the whole tie group before emitting a point.
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            sensitivity: tp as f64 / n_pos as f64,
            specificity: (n_neg - fp) as f64 / n_neg as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        sensitivity: 1.0,
        specificity: 0.0,
    });
    Ok(RocCurve {
        points,
        n_pos,
        n_neg,
    })
}

/// Trapezoidal area under the curve in (1-specificity, sensitivity) space.
pub fn auc(curve: &RocCurve) -> f64 {
    let mut area = 0.0;
    for w in curve.points.windows(2) {
        let fpr0 = 1.0 - w[0].specificity;
        let fpr1 = 1.0 - w[1].specificity;
        area += (fpr1 - fpr0) * (w[0].sensitivity + w[1].sensitivity) / 2.0;
    }
    area
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(RocCurve, f64)> {
    let curve = roc_curve(scores, labels)?;
    let a = auc(&curve);
    Ok((curve, a))
}

/// Brute-force Mann-Whitney pair count (ties worth 1/2), the oracle the
/// trapezoid must match.
pub fn mann_whitney_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (n_pos, n_neg) = check_scores(scores, labels)?;
    let mut wins = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Highest sensitivity among operating points meeting the specificity
/// target; conservative, no interpolation.
pub fn sensitivity_at_specificity(curve: &RocCurve, target: f64) -> Result<f64> {
    curve
        .points
        .iter()
        .filter(|p| p.specificity >= target)
        .map(|p| p.sensitivity)
        .fold(None, |acc: Option<f64>, s| {
            Some(acc.map_or(s, |a| a.max(s)))
        })
        .ok_or_else(|| {
            Error::Degenerate(format!("no operating point with specificity >= {target}"))
        })
}
