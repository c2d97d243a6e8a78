//! Localized multiple kernel learning over precomputed Gram matrices.
//!
//! Points are partitioned by kernel k-means, soft cluster likelihoods are
//! calibrated by average evenness, and per-cluster ℓp-constrained kernel
//! weights are learned by alternating SVM solves with closed-form weight
//! updates. Global ℓp-MKL and a kernelized gated-LMKL baseline are included,
//! along with Rademacher-complexity bound calculators and CV tooling.

pub mod bounds;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod lmkl;
mod matrix_serde;
pub mod pipeline;
pub mod seed;
pub mod smo;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

// The guide's snippets compile and run as doctests of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/lmkl.md")]
    mod lmkl {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
