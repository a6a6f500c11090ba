//! Evaluation statistics: ROC curves and AUC, sensitivity at fixed
//! specificity, regression error, method-agreement summaries, and
//! patient-level percentile bootstrap intervals.

mod bootstrap;
mod regress;
mod report;
mod roc;

pub use bootstrap::{bootstrap_ci, residual_visit_correlation, MetricReport};
pub use regress::{
    agreement_stats, gaussian_mae_from_sd, pearson_r, regression_metrics, AgreementStats,
    RegressionMetrics,
};
pub use report::{read_metric_reports, write_metric_reports, write_roc_csv};
pub use roc::{
    auc, mann_whitney_auc, roc_auc, roc_curve, sensitivity_at_specificity, RocCurve, RocPoint,
};
