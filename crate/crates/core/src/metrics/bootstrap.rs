use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::regress::pearson_r;

/// Point estimate with a percentile-bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub point: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Rows (resampling units) in the underlying data.
    pub n: usize,
    pub n_bootstrap: usize,
    /// Resamples that were redrawn because the statistic was undefined.
    pub n_redrawn: usize,
    /// Set when more than 10% of resamples had to be redrawn.
    pub unreliable: bool,
}

/// Nearest-rank percentile of an ascending-sorted slice: the ceil(q*n)-th
/// order statistic.
fn percentile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

const MAX_REDRAWS_PER_SAMPLE: usize = 1000;

/// Percentile bootstrap over resampling units (callers pass one row per
/// patient so visits move together). The statistic sees resampled row
/// indices and returns None when undefined on that resample, which triggers
/// a redraw.
pub fn bootstrap_ci(
    metric: &str,
    n_rows: usize,
    statistic: impl Fn(&[usize]) -> Option<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<MetricReport> {
    if n_rows == 0 {
        return Err(Error::InvalidInput("no rows to bootstrap".to_string()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least 1 bootstrap sample".to_string()));
    }
    let identity: Vec<usize> = (0..n_rows).collect();
    let point = statistic(&identity)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Degenerate(format!("{metric} undefined on the full data")))?;

    let mut stats = Vec::with_capacity(n_samples);
    let mut n_redrawn = 0usize;
    let mut indices = vec![0usize; n_rows];
    for i in 0..n_samples {
        let mut stream = rng::stream(seed, &format!("bootstrap/{metric}/{i}"));
        let mut attempts = 0;
        loop {
            for slot in indices.iter_mut() {
                *slot = stream.random_range(0..n_rows);
            }
            match statistic(&indices).filter(|v| v.is_finite()) {
                Some(v) => {
                    stats.push(v);
                    break;
                }
                None => {
                    n_redrawn += 1;
                    attempts += 1;
                    if attempts > MAX_REDRAWS_PER_SAMPLE {
                        return Err(Error::Degenerate(format!(
                            "{metric} undefined on {attempts} consecutive resamples"
                        )));
                    }
                }
            }
        }
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(MetricReport {
        metric: metric.to_string(),
        point,
        ci_lo: percentile_nearest_rank(&stats, 0.025),
        ci_hi: percentile_nearest_rank(&stats, 0.975),
        n: n_rows,
        n_bootstrap: n_samples,
        n_redrawn,
        unreliable: n_redrawn * 10 > n_samples,
    })
}

/// Correlation of per-visit residuals across each patient's two visits,
/// with a patient-level bootstrap CI.
pub fn residual_visit_correlation(
    pairs: &[(f64, f64)],
    n_samples: usize,
    seed: u64,
) -> Result<MetricReport> {
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    // Surface degenerate input directly rather than as a bootstrap failure.
    pearson_r(&x, &y)?;
    bootstrap_ci(
        "residual_visit_correlation",
        pairs.len(),
        |idx| {
            let rx: Vec<f64> = idx.iter().map(|&i| pairs[i].0).collect();
            let ry: Vec<f64> = idx.iter().map(|&i| pairs[i].1).collect();
            pearson_r(&rx, &ry).ok()
        },
        n_samples,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn nearest_rank_matches_order_statistics() {
        let sorted: Vec<f64> = (1..=2000).map(|i| i as f64).collect();
        assert_eq!(percentile_nearest_rank(&sorted, 0.025), 50.0);
        assert_eq!(percentile_nearest_rank(&sorted, 0.975), 1950.0);
        assert_eq!(percentile_nearest_rank(&sorted, 1.0), 2000.0);
        assert_eq!(percentile_nearest_rank(&[7.0], 0.025), 7.0);
    }

    #[test]
    fn identical_rows_give_zero_width_interval() {
        let rows = vec![4.2; 17];
        let report = bootstrap_ci(
            "mean",
            rows.len(),
            |idx| Some(idx.iter().map(|&i| rows[i]).sum::<f64>() / idx.len() as f64),
            200,
            3,
        )
        .unwrap();
        assert!((report.point - 4.2).abs() < 1e-12);
        assert_eq!(report.ci_lo, report.point);
        assert_eq!(report.ci_hi, report.point);
        assert!(!report.unreliable);
        assert_eq!(report.n_redrawn, 0);
    }

    #[test]
    fn same_seed_reproduces_the_report() {
        let rows: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let stat = |idx: &[usize]| Some(idx.iter().map(|&i| rows[i]).sum::<f64>() / idx.len() as f64);
        let a = bootstrap_ci("mean", rows.len(), stat, 500, 9).unwrap();
        let b = bootstrap_ci("mean", rows.len(), stat, 500, 9).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_ci("mean", rows.len(), stat, 500, 10).unwrap();
        assert!(a.ci_lo != c.ci_lo || a.ci_hi != c.ci_hi);
    }

    #[test]
    fn interval_contains_point_on_random_data() {
        for seed in 0..20 {
            let mut stream = rng::stream(seed, "boot-data");
            let rows: Vec<f64> = (0..50)
                .map(|_| {
                    let e: f64 = stream.sample(StandardNormal);
                    10.0 + 2.0 * e
                })
                .collect();
            let report = bootstrap_ci(
                "mean",
                rows.len(),
                |idx| Some(idx.iter().map(|&i| rows[i]).sum::<f64>() / idx.len() as f64),
                400,
                seed,
            )
            .unwrap();
            assert!(
                report.ci_lo <= report.point && report.point <= report.ci_hi,
                "seed {seed}: {report:?}"
            );
            assert!(report.ci_lo < report.ci_hi);
        }
    }

    #[test]
    fn frequent_redraws_flag_the_report() {
        // Two rows; the statistic needs both, so half of all resamples
        // are redrawn.
        let report = bootstrap_ci(
            "needs-both",
            2,
            |idx| {
                if idx.contains(&0) && idx.contains(&1) {
                    Some(1.0)
                } else {
                    None
                }
            },
            200,
            5,
        )
        .unwrap();
        assert!(report.unreliable, "{report:?}");
        assert!(report.n_redrawn > 20);
    }

    #[test]
    fn undefined_point_estimate_is_an_error() {
        let err = bootstrap_ci("nan", 3, |_| Some(f64::NAN), 10, 1).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn identical_residuals_correlate_perfectly() {
        let pairs: Vec<(f64, f64)> = (0..12).map(|i| (i as f64 * 0.3 - 2.0, i as f64 * 0.3 - 2.0)).collect();
        let report = residual_visit_correlation(&pairs, 200, 4).unwrap();
        assert!((report.point - 1.0).abs() < 1e-12);
        assert!((report.ci_lo - 1.0).abs() < 1e-9);
        assert!((report.ci_hi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlated_pairs_exclude_zero() {
        let mut stream = rng::stream(8, "pairs");
        let pairs: Vec<(f64, f64)> = (0..80)
            .map(|_| {
                let shared: f64 = stream.sample(StandardNormal);
                let e1: f64 = stream.sample(StandardNormal);
                let e2: f64 = stream.sample(StandardNormal);
                (shared + 0.5 * e1, shared + 0.5 * e2)
            })
            .collect();
        let report = residual_visit_correlation(&pairs, 500, 8).unwrap();
        assert!(report.point > 0.5, "{report:?}");
        assert!(report.ci_lo > 0.0, "{report:?}");
    }

    #[test]
    fn too_few_pairs_propagate_the_error() {
        let err = residual_visit_correlation(&[(1.0, 2.0), (2.0, 1.0)], 100, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
