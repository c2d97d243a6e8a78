use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::LossKind;
use super::trainer::{train_clmkl, ClmklSolution, TrainOptions, TrainReport};
use super::weights::KernelWeights;
use crate::cluster::{LikelihoodMatrix, LikelihoodModel};
use crate::error::{Error, Result};
use crate::kernel::{CrossKernelMatrix, FittedNormalization, KernelBundle};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Clustered, per-cluster ℓp-constrained kernel weights.
    Clmkl,
    /// Global ℓp-norm MKL (one cluster).
    Mkl,
    /// SVM on the uniform kernel average.
    UnifSvm,
    /// Gated localized MKL baseline.
    Lmkl,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clmkl" => Ok(Algorithm::Clmkl),
            "mkl" => Ok(Algorithm::Mkl),
            "unif-svm" => Ok(Algorithm::UnifSvm),
            "lmkl" => Ok(Algorithm::Lmkl),
            other => Err(Error::InvalidParameter(format!(
                "unknown algorithm '{other}' (expected clmkl, mkl, unif-svm or lmkl)"
            ))),
        }
    }
}

/// Everything needed to evaluate
/// `f(x) = Σ_j c_j(x) Σ_m β_jm Σ_i a_i c_j(x_i) k_m(x_i, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClmklModel {
    pub version: u32,
    pub algorithm: Algorithm,
    pub kernel_names: Vec<String>,
    /// Per-kernel normalization fitted on the training points.
    pub normalization: Vec<FittedNormalization>,
    pub likelihood: LikelihoodModel,
    #[serde(with = "crate::matrix_serde")]
    pub beta: Array2<f64>,
    /// Signed expansion coefficients (`α_i y_i` for the hinge loss).
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub p: f64,
    pub c: f64,
    pub loss: LossKind,
    #[serde(with = "crate::matrix_serde")]
    pub weight_norms_sq: Array2<f64>,
    /// `c_j(x_i)` on the training points.
    #[serde(with = "crate::matrix_serde")]
    pub train_likelihoods: Array2<f64>,
    /// Training targets.
    pub targets: Vec<f64>,
    pub converged: bool,
}

impl ClmklModel {
    pub fn from_solution(
        algorithm: Algorithm,
        solution: ClmklSolution,
        likelihood: LikelihoodModel,
        train_likelihoods: &LikelihoodMatrix,
        opts: &TrainOptions,
        kernel_names: Vec<String>,
        targets: Vec<f64>,
        converged: bool,
    ) -> Self {
        let normalization = vec![FittedNormalization::None; kernel_names.len()];
        Self {
            version: MODEL_VERSION,
            algorithm,
            kernel_names,
            normalization,
            likelihood,
            beta: solution.beta.values().clone(),
            alpha: solution.alpha,
            bias: solution.bias,
            p: opts.p,
            c: opts.c,
            loss: opts.loss,
            weight_norms_sq: solution.weight_norms_sq,
            train_likelihoods: train_likelihoods.values().clone(),
            targets,
            converged,
        }
    }

    pub fn n_train(&self) -> usize {
        self.alpha.len()
    }

    pub fn weights(&self) -> KernelWeights {
        KernelWeights::from_raw(self.beta.clone())
    }

    /// Decision values for test points given cross matrices `k_m(x_test, x_train)`
    /// (already normalized, in `kernel_names` order) and test likelihoods.
    pub fn decision_function(
        &self,
        cross: &[CrossKernelMatrix],
        c_test: &LikelihoodMatrix,
    ) -> Result<Vec<f64>> {
        let (l, m) = self.beta.dim();
        let n = self.n_train();
        if cross.len() != m {
            return Err(Error::Dimension(format!(
                "{} cross matrices for {m} kernels",
                cross.len()
            )));
        }
        let n_test = c_test.n();
        for (mi, x) in cross.iter().enumerate() {
            if x.n_train() != n || x.n_test() != n_test {
                return Err(Error::Dimension(format!(
                    "cross matrix for kernel '{}' is {}x{}, expected {n_test}x{n}",
                    self.kernel_names.get(mi).map_or("?", String::as_str),
                    x.n_test(),
                    x.n_train()
                )));
            }
        }
        if c_test.clusters() != l {
            return Err(Error::Dimension(format!(
                "test likelihoods have {} clusters, model has {l}",
                c_test.clusters()
            )));
        }
        let c_train = &self.train_likelihoods;
        // h[t][j][m] = Σ_i a_i c_j(x_i) k_m(x_t, x_i)
        let support: Vec<usize> = (0..n).filter(|&i| self.alpha[i] != 0.0).collect();
        let mut out = vec![self.bias; n_test];
        for t in 0..n_test {
            let mut f = 0.0;
            for j in 0..l {
                let cj = c_test.get(t, j);
                if cj == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (mi, x) in cross.iter().enumerate() {
                    let row = x.values().row(t);
                    let h: f64 = support
                        .iter()
                        .map(|&i| self.alpha[i] * c_train[[i, j]] * row[i])
                        .sum();
                    inner += self.beta[[j, mi]] * h;
                }
                f += cj * inner;
            }
            out[t] += f;
        }
        Ok(out)
    }
}

/// `+1` for nonnegative decision values, `−1` otherwise.
pub fn sign_labels(decisions: &[f64]) -> Vec<f64> {
    decisions
        .iter()
        .map(|&f| if f >= 0.0 { 1.0 } else { -1.0 })
        .collect()
}

/// One binary problem per class (class vs rest) over shared likelihoods.
#[derive(Debug, Clone)]
pub struct OneVsAll {
    pub classes: Vec<i64>,
    pub solutions: Vec<ClmklSolution>,
    pub reports: Vec<TrainReport>,
}

/// Trains one CLMKL model per entry of `classes`; every class must occur in `labels`.
pub fn train_one_vs_all(
    bundle: &KernelBundle,
    labels: &[i64],
    classes: &[i64],
    c: &LikelihoodMatrix,
    opts: &TrainOptions,
) -> Result<OneVsAll> {
    if classes.len() < 2 {
        return Err(Error::InvalidLabels(
            "one-vs-all needs at least two classes".into(),
        ));
    }
    if let Some(k) = classes.iter().find(|k| !labels.contains(k)) {
        return Err(Error::InvalidLabels(format!(
            "class {k} is absent from the training labels"
        )));
    }
    let results: Vec<Result<(ClmklSolution, TrainReport)>> = classes
        .par_iter()
        .map(|&k| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&v| if v == k { 1.0 } else { -1.0 })
                .collect();
            train_clmkl(bundle, &y, c, opts)
        })
        .collect();
    let mut solutions = Vec::with_capacity(classes.len());
    let mut reports = Vec::with_capacity(classes.len());
    for r in results {
        let (s, rep) = r?;
        solutions.push(s);
        reports.push(rep);
    }
    Ok(OneVsAll {
        classes: classes.to_vec(),
        solutions,
        reports,
    })
}

/// Index of the largest decision value per point (lowest class index on ties).
pub fn argmax_classes(decisions: &[Vec<f64>]) -> Vec<usize> {
    let n = decisions.first().map_or(0, Vec::len);
    (0..n)
        .map(|t| {
            let mut best = 0;
            for k in 1..decisions.len() {
                if decisions[k][t] > decisions[best][t] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
