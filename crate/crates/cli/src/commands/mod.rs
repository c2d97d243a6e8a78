mod bound;
mod cluster;
mod cv;
mod evaluate;
mod kernels;
mod predict;
mod train;

pub use bound::bound;
pub use cluster::cluster;
pub use cv::cv;
pub use evaluate::evaluate;
pub use kernels::{compute_kernels, Manifest, ManifestEntry};
pub use predict::predict;
pub use train::{train, ReportRow};

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Training stopped at the iteration cap; the model was still written.
    NotConverged,
}
