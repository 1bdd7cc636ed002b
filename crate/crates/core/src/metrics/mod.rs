//! Explanation quality metrics and the benchmark driver.

mod evaluate;
mod filesize;
mod morf;
mod sensitivity;
mod stats;

pub use evaluate::{evaluate_all, ClassSelection, EvalConfig, EvaluationReport, Failure, ReportRow, SampleMetrics};
pub use filesize::{file_size_proxy, predictor_filter, DEFLATE_LEVEL};
pub use morf::{auc_morf, mean_curve, morf_curve, morf_curve_with, removal_order, MorfConfig, MorfCurve};
pub use sensitivity::{max_sensitivity, perturbation, SensitivityConfig};
pub use stats::{pearson, random_attribution};
