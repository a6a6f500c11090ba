use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::bootstrap::MetricReport;
use super::roc::RocCurve;

pub fn write_metric_reports(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let json = serde_json::to_string_pretty(reports).map_err(|e| Error::json(path, e))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_metric_reports(path: &Path) -> Result<Vec<MetricReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Plot-ready dump of a ROC curve, one operating point per line.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut out = String::from("threshold,sensitivity,specificity\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.threshold, p.sensitivity, p.specificity
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
