//! End-to-end fitting from raw Gram matrices: normalization, clustering,
//! τ calibration, training, and prediction from raw cross matrices.

use serde::{Deserialize, Serialize};

use crate::cluster::{
    calibrate_tau, kernel_kmeans, LikelihoodMatrix, LikelihoodModel, DEFAULT_EVENNESS_TOL,
    DEFAULT_MAX_ITER, DEFAULT_RESTARTS,
};
use crate::error::{Error, Result};
use crate::kernel::{
    sum_uniform, sum_uniform_cross, CrossKernelMatrix, FittedNormalization, GramMatrix,
    KernelBundle, Normalization,
};
use crate::lmkl::{train_lmkl, LmklModel, LmklOptions, DEFAULT_STEPS};
use crate::train::{
    argmax_classes, sign_labels, train_clmkl, train_fixed, train_one_vs_all, Algorithm, ClmklModel,
    KernelWeights, LossKind, TrainOptions, TrainReport, MODEL_VERSION,
};

/// Cluster-kernel identifier meaning "mean of the normalized base kernels".
pub const UNIFORM_CLUSTER_KERNEL: &str = "uniform";

/// How sharply cluster likelihoods concentrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Localization {
    /// Calibrate τ so that the average evenness hits this target.
    Evenness(f64),
    /// Use this τ directly (`inf` for hard assignments).
    Tau(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    pub normalization: Normalization,
    pub clusters: usize,
    pub localization: Localization,
    pub cluster_kernel: String,
    pub restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
    pub train: TrainOptions,
    pub lmkl_steps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Clmkl,
            normalization: Normalization::Multiplicative,
            clusters: 3,
            localization: Localization::Evenness(0.7),
            cluster_kernel: UNIFORM_CLUSTER_KERNEL.into(),
            restarts: DEFAULT_RESTARTS,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            train: TrainOptions::default(),
            lmkl_steps: DEFAULT_STEPS,
        }
    }
}

impl PipelineConfig {
    fn effective_clusters(&self) -> usize {
        match self.algorithm {
            Algorithm::Clmkl => self.clusters,
            _ => 1,
        }
    }
}

/// Normalized training kernels plus the clustering kernel built from them.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub bundle: KernelBundle,
    pub normalization: Vec<FittedNormalization>,
    pub k0: GramMatrix,
}

pub fn prepare(
    raw: &KernelBundle,
    normalization: Normalization,
    cluster_kernel: &str,
) -> Result<Prepared> {
    let fitted = raw
        .kernels()
        .iter()
        .map(|k| normalization.fit(k))
        .collect::<Result<Vec<_>>>()?;
    let kernels = raw
        .kernels()
        .iter()
        .zip(&fitted)
        .map(|(k, f)| f.apply_gram(k))
        .collect::<Result<Vec<_>>>()?;
    let bundle = KernelBundle::new(kernels, raw.names().to_vec())?;
    let k0 = cluster_gram(&bundle, cluster_kernel)?;
    Ok(Prepared {
        bundle,
        normalization: fitted,
        k0,
    })
}

pub fn cluster_gram(bundle: &KernelBundle, name: &str) -> Result<GramMatrix> {
    if name == UNIFORM_CLUSTER_KERNEL {
        return Ok(sum_uniform(bundle));
    }
    bundle
        .position(name)
        .map(|m| bundle.kernel(m).clone())
        .ok_or_else(|| Error::InvalidParameter(format!("unknown clustering kernel '{name}'")))
}

pub fn cluster_cross(
    crosses: &[CrossKernelMatrix],
    names: &[String],
    name: &str,
) -> Result<CrossKernelMatrix> {
    if name == UNIFORM_CLUSTER_KERNEL {
        return sum_uniform_cross(crosses);
    }
    names
        .iter()
        .position(|n| n == name)
        .map(|m| crosses[m].clone())
        .ok_or_else(|| Error::InvalidParameter(format!("unknown clustering kernel '{name}'")))
}

/// Kernel k-means on `k0` followed by τ selection.
pub fn fit_likelihood(
    k0: &GramMatrix,
    clusters: usize,
    localization: Localization,
    restarts: usize,
    max_iter: usize,
    seed: u64,
    kernel_id: &str,
) -> Result<LikelihoodModel> {
    if clusters == 1 {
        return Ok(LikelihoodModel::single_cluster(k0.n()));
    }
    let assignment = kernel_kmeans(k0, clusters, restarts, max_iter, seed)?;
    let model = LikelihoodModel::new(k0, &assignment, 0.0, kernel_id)?;
    let tau = match localization {
        Localization::Tau(t) => t,
        Localization::Evenness(target) => {
            calibrate_tau(&model.train_distances(k0)?, target, DEFAULT_EVENNESS_TOL)?
        }
    };
    model.with_tau(tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsAllModel {
    pub version: u32,
    pub classes: Vec<i64>,
    pub models: Vec<ClmklModel>,
}

/// Any trained model, tagged by `schema` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schema")]
pub enum TrainedModel {
    #[serde(rename = "clmkl")]
    Clmkl(ClmklModel),
    #[serde(rename = "lmkl")]
    Lmkl(LmklModel),
    #[serde(rename = "clmkl-ova")]
    OneVsAll(OneVsAllModel),
}

impl TrainedModel {
    pub fn kernel_names(&self) -> &[String] {
        match self {
            TrainedModel::Clmkl(m) => &m.kernel_names,
            TrainedModel::Lmkl(m) => &m.kernel_names,
            TrainedModel::OneVsAll(m) => &m.models[0].kernel_names,
        }
    }

    pub fn n_train(&self) -> usize {
        match self {
            TrainedModel::Clmkl(m) => m.n_train(),
            TrainedModel::Lmkl(m) => m.alpha.len(),
            TrainedModel::OneVsAll(m) => m.models[0].n_train(),
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            TrainedModel::Clmkl(m) => m.converged,
            TrainedModel::Lmkl(_) => true,
            TrainedModel::OneVsAll(m) => m.models.iter().all(|m| m.converged),
        }
    }

    /// Whether prediction needs `k(x, x)` for the test points.
    pub fn needs_test_diagonal(&self) -> bool {
        let check = |norm: &[FittedNormalization], clusters: usize| {
            clusters > 1
                || norm
                    .iter()
                    .any(|f| matches!(f, FittedNormalization::Multiplicative { .. }))
        };
        match self {
            TrainedModel::Clmkl(m) => check(&m.normalization, m.likelihood.clusters()),
            TrainedModel::Lmkl(m) => check(&m.normalization, 1),
            TrainedModel::OneVsAll(m) => check(
                &m.models[0].normalization,
                m.models[0].likelihood.clusters(),
            ),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(text)?;
        let version = match &model {
            TrainedModel::Clmkl(m) => m.version,
            TrainedModel::Lmkl(m) => m.version,
            TrainedModel::OneVsAll(m) => m.version,
        };
        if version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {version}")));
        }
        Ok(model)
    }
}

/// Whether targets call for one-vs-all: integral values other than ±1.
pub fn is_multiclass(targets: &[f64]) -> bool {
    targets.iter().any(|&v| v != 1.0 && v != -1.0) && targets.iter().all(|v| v.fract() == 0.0)
}

/// Fits the configured algorithm on raw (unnormalized) training kernels.
/// Classification targets other than ±1 are trained one-vs-all.
pub fn fit(
    raw: &KernelBundle,
    targets: &[f64],
    cfg: &PipelineConfig,
) -> Result<(TrainedModel, Vec<TrainReport>)> {
    if targets.len() != raw.n() {
        return Err(Error::Dimension(format!(
            "{} targets for n = {}",
            targets.len(),
            raw.n()
        )));
    }
    let cluster_kernel = if cfg.effective_clusters() > 1 || cfg.algorithm == Algorithm::Lmkl {
        cfg.cluster_kernel.as_str()
    } else {
        UNIFORM_CLUSTER_KERNEL
    };
    let prep = prepare(raw, cfg.normalization, cluster_kernel)?;

    if cfg.algorithm == Algorithm::Lmkl {
        if cfg.train.loss != LossKind::Hinge {
            return Err(Error::InvalidParameter(
                "the gated baseline supports the hinge loss only".into(),
            ));
        }
        let opts = LmklOptions {
            c: cfg.train.c,
            steps: cfg.lmkl_steps,
            ..LmklOptions::default()
        };
        let mut model = train_lmkl(&prep.bundle, &prep.k0, targets, &opts, cluster_kernel)?;
        model.normalization = prep.normalization;
        let report = TrainReport {
            outer_iterations: model.objective_history.len(),
            dual_history: model.objective_history.clone(),
            converged: true,
            ..TrainReport::default()
        };
        return Ok((TrainedModel::Lmkl(model), vec![report]));
    }

    let l = cfg.effective_clusters();
    let likelihood = fit_likelihood(
        &prep.k0,
        l,
        cfg.localization,
        cfg.restarts,
        cfg.kmeans_max_iter,
        cfg.seed,
        cluster_kernel,
    )?;
    let c = likelihood.train_likelihoods(Some(&prep.k0))?;
    let names = raw.names().to_vec();
    let build = |solution, report: &TrainReport, y: Vec<f64>| {
        let mut model = ClmklModel::from_solution(
            cfg.algorithm,
            solution,
            likelihood.clone(),
            &c,
            &cfg.train,
            names.clone(),
            y,
            report.converged,
        );
        model.normalization = prep.normalization.clone();
        model
    };

    if cfg.train.loss.is_classification() && is_multiclass(targets) {
        if cfg.algorithm == Algorithm::UnifSvm {
            return Err(Error::InvalidParameter(
                "unif-svm supports binary targets only".into(),
            ));
        }
        let labels: Vec<i64> = targets.iter().map(|&v| v as i64).collect();
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        let ova = train_one_vs_all(&prep.bundle, &labels, &classes, &c, &cfg.train)?;
        let models = ova
            .solutions
            .into_iter()
            .zip(&ova.reports)
            .zip(&classes)
            .map(|((s, r), &k)| {
                build(
                    s,
                    r,
                    labels
                        .iter()
                        .map(|&v| if v == k { 1.0 } else { -1.0 })
                        .collect(),
                )
            })
            .collect();
        let model = OneVsAllModel {
            version: MODEL_VERSION,
            classes,
            models,
        };
        return Ok((TrainedModel::OneVsAll(model), ova.reports));
    }

    let (solution, report) = match cfg.algorithm {
        Algorithm::UnifSvm => {
            let m = prep.bundle.len();
            let beta = KernelWeights::new(
                ndarray::Array2::from_elem((1, m), 1.0 / m as f64),
                cfg.train.p,
            )?;
            train_fixed(&prep.bundle, targets, &c, &beta, &cfg.train)?
        }
        _ => train_clmkl(&prep.bundle, targets, &c, &cfg.train)?,
    };
    let model = build(solution, &report, targets.to_vec());
    Ok((TrainedModel::Clmkl(model), vec![report]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One row of decision values per binary model (one per class for one-vs-all).
    pub decisions: Vec<Vec<f64>>,
    /// Predicted labels: sign (0 maps to +1), class id, or the regression output.
    pub labels: Vec<f64>,
}

fn clmkl_decisions(model: &ClmklModel, crosses: &[CrossKernelMatrix]) -> Result<Vec<f64>> {
    let normalized = normalize_crosses(&model.normalization, crosses)?;
    let n_test = normalized[0].n_test();
    let c_test = if model.likelihood.clusters() == 1 {
        LikelihoodMatrix::uniform(n_test, 1)
    } else {
        let cc = cluster_cross(
            &normalized,
            &model.kernel_names,
            &model.likelihood.clustering_kernel,
        )?;
        model.likelihood.test_likelihoods(Some(&cc), n_test)?
    };
    model.decision_function(&normalized, &c_test)
}

fn normalize_crosses(
    fitted: &[FittedNormalization],
    crosses: &[CrossKernelMatrix],
) -> Result<Vec<CrossKernelMatrix>> {
    if crosses.len() != fitted.len() || crosses.is_empty() {
        return Err(Error::Dimension(format!(
            "{} cross matrices for {} kernels",
            crosses.len(),
            fitted.len()
        )));
    }
    crosses
        .iter()
        .zip(fitted)
        .map(|(x, f)| f.apply_cross(x))
        .collect()
}

/// Predicts from raw cross matrices `k_m(x_test, x_train)` given in the
/// model's kernel order.
pub fn predict(model: &TrainedModel, crosses: &[CrossKernelMatrix]) -> Result<Prediction> {
    if let Some(x) = crosses.iter().find(|x| x.n_train() != model.n_train()) {
        return Err(Error::Dimension(format!(
            "cross matrix has {} training columns, model was trained on {}",
            x.n_train(),
            model.n_train()
        )));
    }
    match model {
        TrainedModel::Clmkl(m) => {
            let f = clmkl_decisions(m, crosses)?;
            let labels = if m.loss.is_classification() {
                sign_labels(&f)
            } else {
                f.clone()
            };
            Ok(Prediction {
                decisions: vec![f],
                labels,
            })
        }
        TrainedModel::Lmkl(m) => {
            let normalized = normalize_crosses(&m.normalization, crosses)?;
            let gate = cluster_cross(&normalized, &m.kernel_names, &m.gating.clustering_kernel)?;
            let f = m.decision_function(&normalized, &gate)?;
            Ok(Prediction {
                labels: sign_labels(&f),
                decisions: vec![f],
            })
        }
        TrainedModel::OneVsAll(m) => {
            let decisions = m
                .models
                .iter()
                .map(|b| clmkl_decisions(b, crosses))
                .collect::<Result<Vec<_>>>()?;
            let labels = argmax_classes(&decisions)
                .into_iter()
                .map(|k| m.classes[k] as f64)
                .collect();
            Ok(Prediction { decisions, labels })
        }
    }
}
