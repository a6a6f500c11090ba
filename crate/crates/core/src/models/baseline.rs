use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear predictor over standardized metadata features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Logistic predictor over standardized metadata features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub const RIDGE_EPS: f64 = 1e-8;

/// Solve a symmetric positive-definite system by Gaussian elimination with
/// partial pivoting. Dimensions here are tiny (metadata width + 1).
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Degenerate("singular normal equations".to_string()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

fn check_design(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    for r in rows {
        if r.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "ragged design matrix: {} vs {} columns",
                r.len(),
                d
            )));
        }
        if let Some(bad) = r.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("design value {bad}")));
        }
    }
    Ok(d)
}

/// Ordinary least squares with an intercept, stabilized by a tiny ridge term
/// on the normal equations.
pub fn fit_metadata_regression(rows: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let d = check_design(rows)?;
    if rows.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} targets",
            rows.len(),
            y.len()
        )));
    }
    if rows.len() < d + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} rows for {} features, got {}",
            d + 1,
            d,
            rows.len()
        )));
    }
    // Augmented design [1, x]; G = A'A + eps*I, rhs = A'y.
    let m = d + 1;
    let mut g = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for (row, &yi) in rows.iter().zip(y) {
        let aug = |j: usize| if j == 0 { 1.0 } else { row[j - 1] };
        for i in 0..m {
            rhs[i] += aug(i) * yi;
            for j in i..m {
                g[i][j] += aug(i) * aug(j);
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[i][j] = g[j][i];
        }
        g[i][i] += RIDGE_EPS;
    }
    let beta = solve(g, rhs)?;
    Ok(LinearModel {
        intercept: beta[0],
        weights: beta[1..].to_vec(),
    })
}

pub fn predict_linear(model: &LinearModel, row: &[f64]) -> f64 {
    model.intercept
        + model
            .weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logistic_loss_grad(
    rows: &[Vec<f64>],
    labels: &[bool],
    weights: &[f64],
    intercept: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        let z = intercept + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        let p = sigmoid(z);
        // Numerically safe CE via log1p on the logit.
        loss += if label {
            (1.0 + (-z).exp()).ln()
        } else {
            (1.0 + (-z).exp()).ln() + z
        } / n;
        let r = (p - label as u8 as f64) / n;
        for (g, x) in gw.iter_mut().zip(row) {
            *g += r * x;
        }
        gb += r;
    }
    (loss, gw, gb)
}

/// Logistic regression by gradient descent with a backtracking step size,
/// run to gradient norm <= 1e-6 or `max_iters`.
pub fn fit_metadata_logistic(
    rows: &[Vec<f64>],
    labels: &[bool],
    max_iters: usize,
) -> Result<LogisticModel> {
    let d = check_design(rows)?;
    if rows.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass(format!(
            "{n_pos} positive out of {} rows",
            labels.len()
        )));
    }
    let mut weights = vec![0.0; d];
    let mut intercept = 0.0;
    let mut lr = 1.0;
    let (mut loss, mut gw, mut gb) = logistic_loss_grad(rows, labels, &weights, intercept);
    let mut iterations = 0;
    let mut grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
    while grad_norm > 1e-6 && iterations < max_iters {
        loop {
            let cand_w: Vec<f64> = weights.iter().zip(&gw).map(|(w, g)| w - lr * g).collect();
            let cand_b = intercept - lr * gb;
            let (cand_loss, cand_gw, cand_gb) = logistic_loss_grad(rows, labels, &cand_w, cand_b);
            if cand_loss <= loss || lr < 1e-12 {
                weights = cand_w;
                intercept = cand_b;
                loss = cand_loss;
                gw = cand_gw;
                gb = cand_gb;
                lr = (lr * 1.2).min(1e3);
                break;
            }
            lr *= 0.5;
        }
        grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        iterations += 1;
    }
    Ok(LogisticModel {
        weights,
        intercept,
        iterations,
        grad_norm,
    })
}

/// Positive-class probability, always strictly inside (0, 1).
pub fn predict_logistic(model: &LogisticModel, row: &[f64]) -> f64 {
    let z = model.intercept
        + model
            .weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>();
    sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_line_is_recovered() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0]).collect();
        let m = fit_metadata_regression(&rows, &y).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-8);
        assert!(m.intercept.abs() < 1e-8);
    }

    #[test]
    fn constant_target_gets_constant_model() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![3.5; 8];
        let m = fit_metadata_regression(&rows, &y).unwrap();
        assert!((m.intercept - 3.5).abs() < 1e-6);
        for w in &m.weights {
            assert!(w.abs() < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn three_point_line() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![1.0, 3.0, 5.0];
        let m = fit_metadata_regression(&rows, &y).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn residuals_are_orthogonal_to_columns() {
        let mut stream = rng::stream(11, "ols");
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| stream.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 1.5 * r[0] - 0.7 * r[2] + 0.3 + 0.1 * stream.sample::<f64, _>(StandardNormal))
            .collect();
        let m = fit_metadata_regression(&rows, &y).unwrap();
        let residuals: Vec<f64> = rows
            .iter()
            .zip(&y)
            .map(|(r, yi)| yi - predict_linear(&m, r))
            .collect();
        // The ridge identity `X'(y - Xb) = eps*b` makes each dot product
        // exactly eps times the coefficient, so orthogonality holds at the
        // 1e-8 scale and the deviation from zero is fully accounted for.
        for col in 0..4 {
            let dot: f64 = rows.iter().zip(&residuals).map(|(r, e)| r[col] * e).sum();
            assert!(dot.abs() < 1e-8 * (1.0 + m.weights[col].abs()), "column {col}: {dot}");
            assert!((dot - RIDGE_EPS * m.weights[col]).abs() < 1e-10, "column {col}: {dot}");
        }
        let sum: f64 = residuals.iter().sum();
        assert!((sum - RIDGE_EPS * m.intercept).abs() < 1e-10, "{sum}");
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let y = vec![1.0, 2.0];
        assert!(matches!(
            fit_metadata_regression(&rows, &y).unwrap_err(),
            Error::InvalidInput(_)
        ));
    }

    #[test]
    fn collinear_columns_survive_via_ridge() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..12).map(|i| 3.0 * i as f64 + 1.0).collect();
        let m = fit_metadata_regression(&rows, &y).unwrap();
        for (row, &yi) in rows.iter().zip(&y) {
            assert!((predict_linear(&m, row) - yi).abs() < 1e-4);
        }
    }

    #[test]
    fn separable_data_reaches_perfect_auc() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 10 { -1.0 - 0.1 * i as f64 } else { 1.0 + 0.1 * i as f64 }])
            .collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let m = fit_metadata_logistic(&rows, &labels, 2000).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| predict_logistic(&m, r)).collect();
        assert!(scores.iter().all(|s| *s > 0.0 && *s < 1.0));
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn independent_labels_hover_at_chance() {
        let mut stream = rng::stream(13, "logit-null");
        let rows: Vec<Vec<f64>> = (0..800)
            .map(|_| (0..3).map(|_| stream.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let labels: Vec<bool> = (0..800).map(|_| stream.random_bool(0.5)).collect();
        let m = fit_metadata_logistic(&rows, &labels, 500).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| predict_logistic(&m, r)).collect();
        let (_, auc) = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.05, "auc {auc}");
    }

    #[test]
    fn duplicating_rows_leaves_the_fit_unchanged() {
        let mut stream = rng::stream(17, "logit-dup");
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..2).map(|_| stream.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + r[1] > 0.3).collect();
        let mut doubled_rows = rows.clone();
        doubled_rows.extend(rows.iter().cloned());
        let mut doubled_labels = labels.clone();
        doubled_labels.extend(labels.iter().copied());
        let a = fit_metadata_logistic(&rows, &labels, 3000).unwrap();
        let b = fit_metadata_logistic(&doubled_rows, &doubled_labels, 3000).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-6, "{a:?} vs {b:?}");
        }
        assert!((a.intercept - b.intercept).abs() < 1e-6);
    }

    #[test]
    fn single_class_labels_are_rejected() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert!(matches!(
            fit_metadata_logistic(&rows, &[true, true, true], 100).unwrap_err(),
            Error::SingleClass(_)
        ));
    }

    #[test]
    fn logistic_converges_to_tiny_gradient_on_overlapping_data() {
        let mut stream = rng::stream(19, "logit-conv");
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![stream.sample::<f64, _>(StandardNormal)])
            .collect();
        let labels: Vec<bool> = rows
            .iter()
            .map(|r| {
                let noise: f64 = stream.sample(StandardNormal);
                r[0] + 2.0 * noise > 0.0
            })
            .collect();
        let m = fit_metadata_logistic(&rows, &labels, 20_000).unwrap();
        assert!(m.grad_norm <= 1e-6, "{m:?}");
    }
}
