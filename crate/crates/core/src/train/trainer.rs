use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::objective::{dual_objective_from_q, primal_objective, LossKind};
use super::weights::{
    check_p, composite_kernel, quad_forms, scale_norms, update_beta, KernelWeights,
};
use crate::cluster::LikelihoodMatrix;
use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, KernelBundle};
use crate::smo::{self, DualSolution, SmoOptions};

pub const DEFAULT_GAP_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_OUTER: usize = 200;
pub const DEFAULT_INNER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub p: f64,
    pub c: f64,
    pub loss: LossKind,
    pub gap_tol: f64,
    pub max_outer: usize,
    /// KKT tolerance of every inner SVM solve.
    pub inner_tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            p: 2.0,
            c: 1.0,
            loss: LossKind::Hinge,
            gap_tol: DEFAULT_GAP_TOL,
            max_outer: DEFAULT_MAX_OUTER,
            inner_tol: DEFAULT_INNER_TOL,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "C must be > 0, got {}",
                self.c
            )));
        }
        if !(self.gap_tol > 0.0) {
            return Err(Error::InvalidParameter("gap tolerance must be > 0".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidParameter(
                "max outer iterations must be >= 1".into(),
            ));
        }
        self.loss.validate()
    }
}

/// Per-outer-iteration diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub outer_iterations: usize,
    pub primal_history: Vec<f64>,
    pub dual_history: Vec<f64>,
    pub gap_history: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub converged: bool,
    /// `(iteration, cluster)` pairs where a weight row was reset to uniform.
    pub beta_resets: Vec<(usize, usize)>,
}

impl TrainReport {
    pub fn final_gap(&self) -> Option<f64> {
        self.gap_history.last().copied()
    }
}

/// Trained parameters, with `beta` being the weights the final `alpha` was solved under.
#[derive(Debug, Clone, PartialEq)]
pub struct ClmklSolution {
    pub beta: KernelWeights,
    /// Signed expansion coefficients: `α_i y_i` (hinge) or `α⁺_i − α⁻_i` (regression).
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// `‖w_j^(m)‖² = β_jm² Q_jm`.
    pub weight_norms_sq: Array2<f64>,
    /// In-sample decision values.
    pub train_decisions: Vec<f64>,
}

pub(crate) fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual) / primal.abs().max(1.0)
}

fn check_inputs(
    bundle: &KernelBundle,
    y: &[f64],
    c: &LikelihoodMatrix,
    opts: &TrainOptions,
) -> Result<()> {
    opts.validate()?;
    if y.len() != bundle.n() || c.n() != bundle.n() {
        return Err(Error::Dimension(format!(
            "kernels have n = {}, targets {}, likelihood rows {}",
            bundle.n(),
            y.len(),
            c.n()
        )));
    }
    if opts.loss.is_classification() {
        smo::check_binary_labels(y)?;
    }
    Ok(())
}

fn solve_inner(
    k: &GramMatrix,
    y: &[f64],
    opts: &TrainOptions,
    warm: Option<&[f64]>,
) -> Result<DualSolution> {
    let smo_opts = SmoOptions::with_tol(opts.inner_tol);
    match opts.loss {
        LossKind::Hinge => {
            let warm_alpha: Option<Vec<f64>> =
                warm.map(|a| a.iter().zip(y).map(|(a, y)| a * y).collect());
            smo::solve_hinge_warm(k, y, opts.c, smo_opts, warm_alpha.as_deref())
        }
        LossKind::EpsInsensitive { eps } => {
            smo::solve_eps_insensitive_warm(k, y, opts.c, eps, smo_opts, warm)
        }
    }
}

fn coefficients(sol: &DualSolution, y: &[f64], loss: LossKind) -> Vec<f64> {
    match loss {
        LossKind::Hinge => sol.alpha.iter().zip(y).map(|(a, y)| a * y).collect(),
        LossKind::EpsInsensitive { .. } => sol.alpha.clone(),
    }
}

/// Alternates SVM solves on the composite kernel with closed-form weight
/// updates until the relative duality gap reaches `opts.gap_tol` or
/// `opts.max_outer` iterations have run. Non-convergence is reported, not an error.
pub fn train_clmkl(
    bundle: &KernelBundle,
    y: &[f64],
    c: &LikelihoodMatrix,
    opts: &TrainOptions,
) -> Result<(ClmklSolution, TrainReport)> {
    check_inputs(bundle, y, c, opts)?;
    let (l, m) = (c.clusters(), bundle.len());
    let mut beta = KernelWeights::uniform(l, m, opts.p);
    let mut report = TrainReport::default();
    let mut warm: Option<Vec<f64>> = None;
    let mut solution = None;

    for iter in 1..=opts.max_outer {
        let used = beta.floored();
        let k = composite_kernel(&used, c, bundle)?;
        let sol = solve_inner(&k, y, opts, warm.as_deref())?;
        let a = coefficients(&sol, y, opts.loss);
        let q = quad_forms(&a, c, bundle)?;
        let norms = scale_norms(&q, &used);
        let g = smo::decision_values(&k, &a, 0.0);
        let primal = primal_objective(&norms, &g, y, opts.p, opts.c, opts.loss);
        let dual = dual_objective_from_q(&a, y, &q, opts.p, opts.loss);
        let gap = relative_gap(primal, dual);
        log::debug!("outer {iter}: primal {primal:.10e} dual {dual:.10e} gap {gap:.3e}");

        report.outer_iterations = iter;
        report.primal_history.push(primal);
        report.dual_history.push(dual);
        report.gap_history.push(gap);
        report.inner_iterations.push(sol.iterations);

        let update = update_beta(&norms, opts.p)?;
        report
            .beta_resets
            .extend(update.reset_clusters.iter().map(|&j| (iter, j)));
        solution = Some(ClmklSolution {
            beta: used,
            train_decisions: g.iter().map(|g| g + sol.bias).collect(),
            alpha: a.clone(),
            bias: sol.bias,
            weight_norms_sq: norms,
        });
        warm = Some(a);
        if gap <= opts.gap_tol {
            report.converged = true;
            break;
        }
        beta = update.weights;
    }
    if !report.converged {
        log::warn!(
            "stopped after {} outer iterations with relative gap {:.3e}",
            report.outer_iterations,
            report.final_gap().unwrap_or(f64::NAN)
        );
    }
    Ok((solution.expect("at least one outer iteration"), report))
}

/// Global ℓp-norm MKL: the single-cluster case with `c ≡ 1`.
pub fn train_mkl(
    bundle: &KernelBundle,
    y: &[f64],
    opts: &TrainOptions,
) -> Result<(ClmklSolution, TrainReport)> {
    train_clmkl(bundle, y, &LikelihoodMatrix::uniform(bundle.n(), 1), opts)
}

/// One SVM solve under fixed weights. The report holds that single iterate,
/// with the plain SVM dual as its dual value.
pub fn train_fixed(
    bundle: &KernelBundle,
    y: &[f64],
    c: &LikelihoodMatrix,
    beta: &KernelWeights,
    opts: &TrainOptions,
) -> Result<(ClmklSolution, TrainReport)> {
    check_inputs(bundle, y, c, opts)?;
    let k = composite_kernel(beta, c, bundle)?;
    let sol = solve_inner(&k, y, opts, None)?;
    let a = coefficients(&sol, y, opts.loss);
    let q = quad_forms(&a, c, bundle)?;
    let norms = scale_norms(&q, beta);
    let g = smo::decision_values(&k, &a, 0.0);
    let regularizer: f64 = 0.5 * (beta.values() * &q).sum();
    let primal = regularizer + opts.c * super::objective::optimal_offset(&g, y, opts.loss).1;
    let gap = relative_gap(primal, sol.objective);
    let report = TrainReport {
        outer_iterations: 1,
        primal_history: vec![primal],
        dual_history: vec![sol.objective],
        gap_history: vec![gap],
        inner_iterations: vec![sol.iterations],
        converged: true,
        beta_resets: Vec::new(),
    };
    let solution = ClmklSolution {
        beta: beta.clone(),
        train_decisions: g.iter().map(|g| g + sol.bias).collect(),
        alpha: a,
        bias: sol.bias,
        weight_norms_sq: norms,
    };
    Ok((solution, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compute_gram, KernelSpec};
    use crate::seed::{stream_rng, Purpose};
    use ndarray::{array, Array2};
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, m: usize) -> (KernelBundle, Vec<f64>, Array2<f64>) {
        let mut rng = stream_rng(seed, Purpose::Synthetic, 0);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if x[[i, 0]] + 0.5 * x[[i, 1]] * x[[i, 2]] + rng.random_range(-0.3..0.3) > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let kernels = (0..m)
            .map(|k| {
                let spec = match k % 3 {
                    0 => KernelSpec::Gaussian {
                        width: 0.5 + k as f64 * 0.3,
                    },
                    1 => KernelSpec::Linear,
                    _ => KernelSpec::Polynomial {
                        degree: 2,
                        offset: 1.0,
                    },
                };
                compute_gram(&x, &spec).unwrap()
            })
            .collect();
        (KernelBundle::unnamed(kernels).unwrap(), y, x)
    }

    #[test]
    fn single_kernel_single_cluster_is_the_svm() {
        let (bundle, y, _) = random_problem(3, 30, 1);
        let opts = TrainOptions {
            c: 2.0,
            p: 1.7,
            ..TrainOptions::default()
        };
        let (sol, report) = train_mkl(&bundle, &y, &opts).unwrap();
        assert!(report.converged);
        let svm = smo::solve_hinge(bundle.kernel(0), &y, 2.0, 1e-9).unwrap();
        for i in 0..30 {
            assert!((sol.alpha[i] - svm.alpha[i] * y[i]).abs() < 1e-6);
        }
        assert!((sol.beta.values()[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn primal_decreases_and_gap_closes() {
        let (bundle, y, x) = random_problem(11, 60, 3);
        let d = Array2::from_shape_fn((60, 2), |(i, j)| {
            (x[[i, 0]] - if j == 0 { -0.5 } else { 0.5 }).powi(2)
        });
        let c = crate::cluster::likelihoods(&d, 3.0).unwrap();
        for p in [1.33, 2.0] {
            let opts = TrainOptions {
                p,
                c: 1.0,
                ..TrainOptions::default()
            };
            let (_, report) = train_clmkl(&bundle, &y, &c, &opts).unwrap();
            assert!(report.converged, "gap {:?}", report.final_gap());
            for w in report.primal_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0));
            }
            for (pr, du) in report.primal_history.iter().zip(&report.dual_history) {
                assert!(du <= &(pr + 1e-8 * pr.abs().max(1.0)));
            }
        }
    }

    #[test]
    fn regression_path_converges() {
        let (bundle, _, x) = random_problem(5, 40, 2);
        let y: Vec<f64> = (0..40)
            .map(|i| (2.0 * x[[i, 0]]).sin() + 0.2 * x[[i, 1]])
            .collect();
        let opts = TrainOptions {
            p: 2.0,
            c: 5.0,
            loss: LossKind::EpsInsensitive { eps: 0.05 },
            ..TrainOptions::default()
        };
        let (sol, report) = train_mkl(&bundle, &y, &opts).unwrap();
        assert!(report.converged);
        assert!(sol.alpha.iter().sum::<f64>().abs() < 1e-8);
    }

    #[test]
    fn zero_expansion_resets_weights() {
        // Identical targets inside the tube give α = 0 and all norms vanish.
        let x = array![[0.0], [1.0], [2.0]];
        let bundle = KernelBundle::unnamed(vec![
            compute_gram(&x, &KernelSpec::Linear).unwrap(),
            compute_gram(&x, &KernelSpec::Gaussian { width: 1.0 }).unwrap(),
        ])
        .unwrap();
        let opts = TrainOptions {
            loss: LossKind::EpsInsensitive { eps: 0.5 },
            ..TrainOptions::default()
        };
        let (sol, report) = train_mkl(&bundle, &[1.0, 1.0, 1.0], &opts).unwrap();
        assert!(sol.alpha.iter().all(|&a| a == 0.0));
        assert!(report.converged);
        assert_eq!(report.beta_resets, vec![(1, 0)]);
    }
}
