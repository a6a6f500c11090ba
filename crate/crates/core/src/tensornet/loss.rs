use crate::error::{Error, Result};

/// Mean squared error over one example's outputs, with its gradient.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "prediction/target length");
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let r = pred[i] - target[i];
        loss += r * r / n;
        grad[i] = 2.0 * r / n;
    }
    (loss, grad)
}

/// Weighted cross entropy of one example: `w[class] * -ln softmax(logits)[class]`.
/// Softmax subtracts the max logit, so large logits cannot overflow.
pub fn loss_weighted_ce(
    logits: &[f64],
    class: usize,
    class_weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() || class_weights.len() != logits.len() {
        return Err(Error::ShapeMismatch(format!(
            "class {class} with {} logits and {} weights",
            logits.len(),
            class_weights.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let w = class_weights[class];
    if !(w.is_finite() && w >= 0.0) {
        return Err(Error::InvalidInput(format!("class weight {w}")));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let log_p = logits[class] - max - z.ln();
    let loss = -w * log_p;
    let grad: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let softmax = e / z;
            w * (softmax - if j == class { 1.0 } else { 0.0 })
        })
        .collect();
    Ok((loss, grad))
}

/// Per-class loss weights proportional to `count^exponent`, normalized so the
/// count-weighted mean weight is 1. Classes with zero count get weight 0;
/// they contribute no examples.
pub fn class_weights(counts: &[usize], exponent: f64) -> Vec<f64> {
    let total: f64 = counts.iter().map(|c| *c as f64).sum();
    let weighted: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|c| (*c as f64) * (*c as f64).powf(exponent))
        .sum();
    if total == 0.0 || weighted == 0.0 {
        return vec![0.0; counts.len()];
    }
    let scale = total / weighted;
    counts
        .iter()
        .map(|c| {
            if *c == 0 {
                0.0
            } else {
                scale * (*c as f64).powf(exponent)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_zero_when_equal() {
        let (loss, grad) = loss_mse(&[1.0, -2.0, 0.5], &[1.0, -2.0, 0.5]);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn mse_averages_over_targets() {
        let (loss, grad) = loss_mse(&[1.0, 3.0], &[0.0, 1.0]);
        assert!((loss - (1.0 + 4.0) / 2.0).abs() < 1e-15);
        assert!((grad[0] - 1.0).abs() < 1e-15);
        assert!((grad[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ce_uniform_logits() {
        let (loss, _) = loss_weighted_ce(&[0.0, 0.0], 0, &[1.0, 1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        let (loss, _) = loss_weighted_ce(&[0.0, 0.0], 1, &[1.0, 1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ce_weighted_example() {
        let (loss, grad) = loss_weighted_ce(&[2.0, 0.0], 0, &[3.0, 3.0]).unwrap();
        let expect = 3.0 * (1.0 + (-2.0f64).exp()).ln();
        assert!((loss - expect).abs() < 1e-12, "{loss} vs {expect}");
        // gradient sums to zero across classes
        assert!((grad[0] + grad[1]).abs() < 1e-12);
        assert!(grad[0] < 0.0 && grad[1] > 0.0);
    }

    #[test]
    fn ce_survives_huge_logits() {
        let (loss, grad) = loss_weighted_ce(&[1e6, 0.0], 0, &[1.0, 1.0]).unwrap();
        assert!(loss.is_finite() && loss >= 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn ce_gradient_matches_finite_difference() {
        let logits = [0.3, -0.7, 1.2];
        let weights = [2.0, 1.0, 0.5];
        let (_, grad) = loss_weighted_ce(&logits, 2, &weights).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut lp = logits;
            lp[j] += h;
            let mut lm = logits;
            lm[j] -= h;
            let (fp, _) = loss_weighted_ce(&lp, 2, &weights).unwrap();
            let (fm, _) = loss_weighted_ce(&lm, 2, &weights).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((grad[j] - fd).abs() < 1e-8, "j={j}: {} vs {fd}", grad[j]);
        }
    }

    #[test]
    fn class_weight_ratio_matches_power_law() {
        let w = class_weights(&[100, 10], -0.9);
        let ratio = w[1] / w[0];
        assert!((ratio - 10f64.powf(0.9)).abs() < 1e-9, "ratio {ratio}");
        // count-weighted mean is 1
        let mean = (100.0 * w[0] + 10.0 * w[1]) / 110.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_counts_give_unit_weights() {
        let w = class_weights(&[50, 50], -0.9);
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_gets_unit_weight() {
        let w = class_weights(&[1000], -0.9);
        assert!((w[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_count_class_excluded() {
        let w = class_weights(&[80, 0, 20], -0.9);
        assert_eq!(w[1], 0.0);
        let mean = (80.0 * w[0] + 20.0 * w[2]) / 100.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }
}
