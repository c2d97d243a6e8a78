//! Accuracy and AUC, stratified folds, and grid-search cross-validation.

mod cv;
mod metrics;

pub use cv::{
    cross_validate, default_cs, fit_fold, linspace, select_best, stratified_folds, train_indices,
    CvOptions, CvResult, CvRow, FoldOutcome, Grid, GridPoint, MetricReport, SelectionMetric,
    CV_CSV_HEADER,
};
pub use metrics::{accuracy, auc};
