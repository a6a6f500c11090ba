use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureStat {
    name: String,
    mean: f64,
    sd: f64,
    retained: bool,
}

/// Per-feature zero-mean unit-variance scaling, fit on the training split only.
///
/// Uses the sample standard deviation (n-1 denominator). Features with zero
/// variance are dropped and recorded by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    stats: Vec<FeatureStat>,
}

impl Standardizer {
    /// Fit from per-feature columns of training values.
    pub fn fit(names: &[&str], columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut stats = Vec::with_capacity(columns.len());
        for (name, col) in names.iter().zip(columns) {
            if col.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "feature {name:?}: need at least 2 train values, got {}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature {name:?} train values")));
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            stats.push(FeatureStat {
                name: (*name).to_string(),
                mean,
                sd,
                retained: sd > 0.0,
            });
        }
        Ok(Standardizer { stats })
    }

    /// Names of features dropped for zero variance.
    pub fn dropped(&self) -> Vec<&str> {
        self.stats
            .iter()
            .filter(|s| !s.retained)
            .map(|s| s.name.as_str())
            .collect()
    }

    pub fn retained_names(&self) -> Vec<&str> {
        self.stats
            .iter()
            .filter(|s| s.retained)
            .map(|s| s.name.as_str())
            .collect()
    }

    pub fn n_input(&self) -> usize {
        self.stats.len()
    }

    pub fn n_retained(&self) -> usize {
        self.stats.iter().filter(|s| s.retained).count()
    }

    /// Standardize one row of raw feature values; dropped features are omitted.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.stats.len() {
            return Err(Error::ShapeMismatch(format!(
                "row has {} values, standardizer expects {}",
                row.len(),
                self.stats.len()
            )));
        }
        Ok(self
            .stats
            .iter()
            .zip(row)
            .filter(|(s, _)| s.retained)
            .map(|(s, v)| (v - s.mean) / s.sd)
            .collect())
    }

    /// Invert a standardized row back to raw values for the retained features.
    pub fn invert(&self, zrow: &[f64]) -> Result<Vec<f64>> {
        let retained: Vec<&FeatureStat> = self.stats.iter().filter(|s| s.retained).collect();
        if zrow.len() != retained.len() {
            return Err(Error::ShapeMismatch(format!(
                "z-row has {} values, {} features retained",
                zrow.len(),
                retained.len()
            )));
        }
        Ok(retained
            .iter()
            .zip(zrow)
            .map(|(s, z)| z * s.sd + s.mean)
            .collect())
    }
}
