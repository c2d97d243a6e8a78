//! The alternating CLMKL trainer, its objectives and the trained model.

mod model;
mod objective;
mod trainer;
mod weights;

pub use model::{
    argmax_classes, sign_labels, train_one_vs_all, Algorithm, ClmklModel, OneVsAll, MODEL_VERSION,
};
pub use objective::{
    dual_objective, dual_objective_from_q, optimal_offset, primal_objective, total_loss, LossKind,
};
pub use trainer::{
    train_clmkl, train_fixed, train_mkl, ClmklSolution, TrainOptions, TrainReport, DEFAULT_GAP_TOL,
    DEFAULT_INNER_TOL, DEFAULT_MAX_OUTER,
};
pub use weights::{
    block_norm_regularizer, composite_kernel, dual_regularizer, quad_forms,
    representer_multipliers, representer_weights, update_beta, weight_norms_sq, BetaUpdate,
    KernelWeights, BETA_FLOOR,
};
