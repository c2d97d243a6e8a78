//! Dual SVM solvers (hinge and ε-insensitive loss) over a dense precomputed
//! kernel, by sequential minimal optimization with maximal-violating-pair
//! working-set selection.
//!
//! Both problems are cast as
//!
//! ```text
//! min ½ λᵀQλ + pᵀλ   s.t. 0 ≤ λ_s ≤ C,  Σ_s z_s λ_s = 0,   Q_st = z_s z_t K(idx_s, idx_t)
//! ```
//!
//! with `z = y, p = −1` for classification and `2n` variables
//! (`α⁺` with `z = +1, p = ε − y`, `α⁻` with `z = −1, p = ε + y`) for regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const MAX_PAIR_UPDATES: usize = 10_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    /// Classification: `α_i ∈ [0, C]`. Regression: `α⁺_i − α⁻_i ∈ [−C, C]`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Dual objective (maximization form).
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation `m(λ) − M(λ)` is at most this.
    pub tol: f64,
    pub max_updates: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_updates: MAX_PAIR_UPDATES,
        }
    }
}

impl SmoOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

struct Problem<'a> {
    k: &'a [f64],
    n_kernel: usize,
    idx: Vec<usize>,
    z: Vec<f64>,
    p: Vec<f64>,
    c: f64,
}

struct Solved {
    lambda: Vec<f64>,
    grad: Vec<f64>,
    bias: f64,
    iterations: usize,
}

impl Problem<'_> {
    #[inline]
    fn kval(&self, s: usize, t: usize) -> f64 {
        self.k[self.idx[s] * self.n_kernel + self.idx[t]]
    }

    fn in_up(&self, s: usize, l: f64) -> bool {
        if self.z[s] > 0.0 {
            l < self.c
        } else {
            l > 0.0
        }
    }

    fn in_low(&self, s: usize, l: f64) -> bool {
        if self.z[s] > 0.0 {
            l > 0.0
        } else {
            l < self.c
        }
    }

    /// `½ λᵀQλ + pᵀλ` given the gradient `G = Qλ + p`.
    fn primal_value(&self, lambda: &[f64], grad: &[f64]) -> f64 {
        0.5 * lambda
            .iter()
            .zip(grad.iter().zip(&self.p))
            .map(|(l, (g, p))| l * (g + p))
            .sum::<f64>()
    }

    fn solve(
        &self,
        mut lambda: Vec<f64>,
        opts: SmoOptions,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<Solved> {
        let v = lambda.len();
        let c = self.c;
        let mut grad = self.p.clone();
        for t in 0..v {
            if lambda[t] != 0.0 {
                let zl = self.z[t] * lambda[t];
                for s in 0..v {
                    grad[s] += self.z[s] * zl * self.kval(s, t);
                }
            }
        }
        let mut iterations = 0;
        loop {
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(-self.primal_value(&lambda, &grad));
            }
            let mut i = usize::MAX;
            let mut j = usize::MAX;
            let mut m = f64::NEG_INFINITY;
            let mut big_m = f64::INFINITY;
            for s in 0..v {
                let score = -self.z[s] * grad[s];
                if self.in_up(s, lambda[s]) && score > m {
                    m = score;
                    i = s;
                }
                if self.in_low(s, lambda[s]) && score < big_m {
                    big_m = score;
                    j = s;
                }
            }
            if i == usize::MAX || j == usize::MAX || m - big_m <= opts.tol {
                break;
            }
            if iterations >= opts.max_updates {
                return Err(Error::SolverFailure {
                    iterations,
                    violation: m - big_m,
                });
            }
            iterations += 1;

            let mut eta = self.kval(i, i) + self.kval(j, j) - 2.0 * self.kval(i, j);
            if eta <= 0.0 {
                eta = TAU;
            }
            // λ_i += z_i δ, λ_j −= z_j δ keeps Σ z λ fixed.
            let cap_i = if self.z[i] > 0.0 {
                c - lambda[i]
            } else {
                lambda[i]
            };
            let cap_j = if self.z[j] > 0.0 {
                lambda[j]
            } else {
                c - lambda[j]
            };
            let step = (m - big_m) / eta;
            let delta = step.min(cap_i).min(cap_j);

            let old_i = lambda[i];
            let old_j = lambda[j];
            lambda[i] = if delta == cap_i {
                if self.z[i] > 0.0 {
                    c
                } else {
                    0.0
                }
            } else {
                (old_i + self.z[i] * delta).clamp(0.0, c)
            };
            lambda[j] = if delta == cap_j {
                if self.z[j] > 0.0 {
                    0.0
                } else {
                    c
                }
            } else {
                (old_j - self.z[j] * delta).clamp(0.0, c)
            };
            let dzi = self.z[i] * (lambda[i] - old_i);
            let dzj = self.z[j] * (lambda[j] - old_j);
            for s in 0..v {
                grad[s] += self.z[s] * (dzi * self.kval(s, i) + dzj * self.kval(s, j));
            }
        }
        let bias = -self.rho(&lambda, &grad);
        Ok(Solved {
            lambda,
            grad,
            bias,
            iterations,
        })
    }

    fn rho(&self, lambda: &[f64], grad: &[f64]) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for s in 0..lambda.len() {
            let zg = self.z[s] * grad[s];
            let at_upper = lambda[s] >= self.c;
            let at_lower = lambda[s] <= 0.0;
            if at_upper {
                if self.z[s] < 0.0 {
                    ub = ub.min(zg);
                } else {
                    lb = lb.max(zg);
                }
            } else if at_lower {
                if self.z[s] > 0.0 {
                    ub = ub.min(zg);
                } else {
                    lb = lb.max(zg);
                }
            } else {
                free += 1;
                free_sum += zg;
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else if ub.is_finite() && lb.is_finite() {
            0.5 * (ub + lb)
        } else if ub.is_finite() {
            ub
        } else if lb.is_finite() {
            lb
        } else {
            0.0
        }
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be > 0, got {c}")));
    }
    Ok(())
}

pub(crate) fn check_binary_labels(y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidLabels(format!(
            "label {} at index {i} is not ±1",
            y[i]
        )));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::InvalidLabels("both classes must be present".into()));
    }
    Ok(())
}

fn check_len(k: &GramMatrix, what: &str, len: usize) -> Result<()> {
    if len != k.n() {
        return Err(Error::Dimension(format!(
            "{what} has length {len}, kernel has n = {}",
            k.n()
        )));
    }
    Ok(())
}

fn hinge_problem<'a>(k: &'a GramMatrix, y: &[f64], c: f64) -> Problem<'a> {
    Problem {
        k: k.values().as_slice().expect("standard layout"),
        n_kernel: k.n(),
        idx: (0..k.n()).collect(),
        z: y.to_vec(),
        p: vec![-1.0; k.n()],
        c,
    }
}

fn eps_problem<'a>(k: &'a GramMatrix, y: &[f64], c: f64, eps: f64) -> Problem<'a> {
    let n = k.n();
    Problem {
        k: k.values().as_slice().expect("standard layout"),
        n_kernel: n,
        idx: (0..n).chain(0..n).collect(),
        z: std::iter::repeat_n(1.0, n)
            .chain(std::iter::repeat_n(-1.0, n))
            .collect(),
        p: y.iter()
            .map(|v| eps - v)
            .chain(y.iter().map(|v| eps + v))
            .collect(),
        c,
    }
}

/// Maximizes `Σα − ½ ΣΣ α_i α_j y_i y_j K_ij` over `0 ≤ α ≤ C, Σ α y = 0`.
pub fn solve_hinge(k: &GramMatrix, y: &[f64], c: f64, tol: f64) -> Result<DualSolution> {
    solve_hinge_warm(k, y, c, SmoOptions::with_tol(tol), None)
}

/// As [`solve_hinge`], starting from `warm` when it is feasible.
pub fn solve_hinge_warm(
    k: &GramMatrix,
    y: &[f64],
    c: f64,
    opts: SmoOptions,
    warm: Option<&[f64]>,
) -> Result<DualSolution> {
    hinge_inner(k, y, c, opts, warm, None)
}

fn hinge_inner(
    k: &GramMatrix,
    y: &[f64],
    c: f64,
    opts: SmoOptions,
    warm: Option<&[f64]>,
    trace: Option<&mut Vec<f64>>,
) -> Result<DualSolution> {
    check_len(k, "label vector", y.len())?;
    check_c(c)?;
    check_binary_labels(y)?;
    let n = k.n();
    let start = match warm {
        Some(w) if w.len() == n && w.iter().all(|&a| (0.0..=c).contains(&a)) => {
            let balance: f64 = w.iter().zip(y).map(|(a, y)| a * y).sum();
            if balance.abs() <= 1e-12 * c * n as f64 {
                w.to_vec()
            } else {
                vec![0.0; n]
            }
        }
        _ => vec![0.0; n],
    };
    let problem = hinge_problem(k, y, c);
    let solved = problem.solve(start, opts, trace)?;
    let objective = -problem.primal_value(&solved.lambda, &solved.grad);
    Ok(DualSolution {
        alpha: solved.lambda,
        bias: solved.bias,
        objective,
        iterations: solved.iterations,
    })
}

/// Maximizes `−½ aᵀKa + Σ a y − ε Σ |a|` over `a = α⁺ − α⁻`, `0 ≤ α± ≤ C`, `Σ a = 0`.
pub fn solve_eps_insensitive(
    k: &GramMatrix,
    y: &[f64],
    c: f64,
    eps: f64,
    tol: f64,
) -> Result<DualSolution> {
    solve_eps_insensitive_warm(k, y, c, eps, SmoOptions::with_tol(tol), None)
}

pub fn solve_eps_insensitive_warm(
    k: &GramMatrix,
    y: &[f64],
    c: f64,
    eps: f64,
    opts: SmoOptions,
    warm: Option<&[f64]>,
) -> Result<DualSolution> {
    eps_inner(k, y, c, eps, opts, warm, None)
}

fn eps_inner(
    k: &GramMatrix,
    y: &[f64],
    c: f64,
    eps: f64,
    opts: SmoOptions,
    warm: Option<&[f64]>,
    trace: Option<&mut Vec<f64>>,
) -> Result<DualSolution> {
    check_len(k, "target vector", y.len())?;
    check_c(c)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps must be >= 0, got {eps}"
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidLabels(format!(
            "target at index {i} is not finite"
        )));
    }
    let n = k.n();
    let start = match warm {
        Some(w)
            if w.len() == n
                && w.iter().all(|a| a.abs() <= c)
                && w.iter().sum::<f64>().abs() <= 1e-12 * c * n as f64 =>
        {
            w.iter()
                .map(|a| a.max(0.0))
                .chain(w.iter().map(|a| (-a).max(0.0)))
                .collect()
        }
        _ => vec![0.0; 2 * n],
    };
    let problem = eps_problem(k, y, c, eps);
    let solved = problem.solve(start, opts, trace)?;
    let alpha: Vec<f64> = (0..n)
        .map(|i| solved.lambda[i] - solved.lambda[n + i])
        .collect();
    let objective = dual_objective_eps_unchecked(k, y, &alpha, eps);
    Ok(DualSolution {
        alpha,
        bias: solved.bias,
        objective,
        iterations: solved.iterations,
    })
}

/// `Σ_j a_j K_ij + b` for every training point `i`.
pub fn decision_values(k: &GramMatrix, coeffs: &[f64], bias: f64) -> Vec<f64> {
    (0..k.n())
        .map(|i| {
            k.row(i)
                .iter()
                .zip(coeffs)
                .map(|(kv, a)| kv * a)
                .sum::<f64>()
                + bias
        })
        .collect()
}

fn quad_form(k: &GramMatrix, a: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..k.n() {
        if a[i] != 0.0 {
            total += a[i] * k.row(i).iter().zip(a).map(|(kv, b)| kv * b).sum::<f64>();
        }
    }
    total
}

/// `Σα − ½ ΣΣ α_i α_j y_i y_j K_ij`; `alpha` must satisfy the box and equality constraints.
pub fn dual_objective_hinge(k: &GramMatrix, y: &[f64], alpha: &[f64], c: f64) -> Result<f64> {
    check_len(k, "label vector", y.len())?;
    check_len(k, "alpha", alpha.len())?;
    let slack = 1e-8 * c * k.n() as f64;
    if let Some(i) = alpha.iter().position(|&a| a < -slack || a > c + slack) {
        return Err(Error::Infeasible(format!(
            "alpha[{i}] = {} outside [0, {c}]",
            alpha[i]
        )));
    }
    let balance: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
    if balance.abs() > slack {
        return Err(Error::Infeasible(format!("Σ α y = {balance}")));
    }
    let a: Vec<f64> = alpha.iter().zip(y).map(|(a, y)| a * y).collect();
    Ok(alpha.iter().sum::<f64>() - 0.5 * quad_form(k, &a))
}

/// `−½ aᵀKa + Σ a y − ε Σ |a|` for signed `a = α⁺ − α⁻`.
pub fn dual_objective_eps(
    k: &GramMatrix,
    y: &[f64],
    alpha: &[f64],
    c: f64,
    eps: f64,
) -> Result<f64> {
    check_len(k, "target vector", y.len())?;
    check_len(k, "alpha", alpha.len())?;
    let slack = 1e-8 * c * k.n() as f64;
    if let Some(i) = alpha.iter().position(|&a| a.abs() > c + slack) {
        return Err(Error::Infeasible(format!(
            "alpha[{i}] = {} outside [-{c}, {c}]",
            alpha[i]
        )));
    }
    let balance: f64 = alpha.iter().sum();
    if balance.abs() > slack {
        return Err(Error::Infeasible(format!("Σ α = {balance}")));
    }
    Ok(dual_objective_eps_unchecked(k, y, alpha, eps))
}

fn dual_objective_eps_unchecked(k: &GramMatrix, y: &[f64], alpha: &[f64], eps: f64) -> f64 {
    let linear: f64 = alpha
        .iter()
        .zip(y)
        .map(|(a, y)| a * y - eps * a.abs())
        .sum();
    linear - 0.5 * quad_form(k, alpha)
}

#[cfg(test)]
pub(crate) fn hinge_trace(k: &GramMatrix, y: &[f64], c: f64, tol: f64) -> Vec<f64> {
    let mut trace = Vec::new();
    hinge_inner(k, y, c, SmoOptions::with_tol(tol), None, Some(&mut trace)).unwrap();
    trace
}
