use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::weights::{block_norm_regularizer, dual_regularizer, quad_forms};
use crate::cluster::LikelihoodMatrix;
use crate::error::{Error, Result};
use crate::kernel::KernelBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    Hinge,
    EpsInsensitive { eps: f64 },
}

impl LossKind {
    pub fn eval(&self, f: f64, y: f64) -> f64 {
        match *self {
            LossKind::Hinge => (1.0 - y * f).max(0.0),
            LossKind::EpsInsensitive { eps } => ((y - f).abs() - eps).max(0.0),
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, LossKind::Hinge)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Hinge => Ok(()),
            LossKind::EpsInsensitive { eps } if eps >= 0.0 && eps.is_finite() => Ok(()),
            LossKind::EpsInsensitive { eps } => Err(Error::InvalidParameter(format!(
                "eps must be >= 0, got {eps}"
            ))),
        }
    }
}

/// Total loss `Σ_i ℓ(g_i + b, y_i)`.
pub fn total_loss(g: &[f64], y: &[f64], bias: f64, loss: LossKind) -> f64 {
    g.iter().zip(y).map(|(g, y)| loss.eval(g + bias, *y)).sum()
}

/// Minimizes the total loss over the offset `b` for fixed bias-free outputs `g`.
///
/// Every per-point loss is a sum of hinge pieces `max(0, s (b − t))`, so the
/// total is convex piecewise linear and its minimum sits at the first breakpoint
/// where the right slope turns nonnegative.
pub fn optimal_offset(g: &[f64], y: &[f64], loss: LossKind) -> (f64, f64) {
    let mut pieces: Vec<(f64, bool)> = Vec::with_capacity(2 * g.len());
    for (g, y) in g.iter().zip(y) {
        match loss {
            LossKind::Hinge if *y > 0.0 => pieces.push((1.0 - g, false)),
            LossKind::Hinge => pieces.push((-1.0 - g, true)),
            LossKind::EpsInsensitive { eps } => {
                pieces.push((y - g + eps, true));
                pieces.push((y - g - eps, false));
            }
        }
    }
    if pieces.is_empty() {
        return (0.0, 0.0);
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut slope = -(pieces.iter().filter(|p| !p.1).count() as i64);
    let mut best = pieces[0].0;
    for &(t, _) in &pieces {
        best = t;
        slope += 1;
        if slope >= 0 {
            break;
        }
    }
    (best, total_loss(g, y, best, loss))
}

/// Primal objective in block-norm form with the loss at the optimal offset:
/// `½ Σ_j (Σ_m ‖w_jm‖^{2p/(p+1)})^{(p+1)/p} + C min_b Σ_i ℓ(g_i + b, y_i)`.
pub fn primal_objective(
    norms_sq: &Array2<f64>,
    g: &[f64],
    y: &[f64],
    p: f64,
    c: f64,
    loss: LossKind,
) -> f64 {
    block_norm_regularizer(norms_sq, p) + c * optimal_offset(g, y, loss).1
}

/// Loss-dependent linear part of the dual: `Σ α_i` for the hinge loss
/// (with `α_i = a_i y_i`) and `Σ a_i y_i − ε Σ |a_i|` for regression.
pub(crate) fn dual_linear(coeffs: &[f64], y: &[f64], loss: LossKind) -> f64 {
    match loss {
        LossKind::Hinge => coeffs.iter().zip(y).map(|(a, y)| a * y).sum(),
        LossKind::EpsInsensitive { eps } => coeffs
            .iter()
            .zip(y)
            .map(|(a, y)| a * y - eps * a.abs())
            .sum(),
    }
}

/// Dual objective from precomputed quadratic forms.
pub fn dual_objective_from_q(
    coeffs: &[f64],
    y: &[f64],
    q: &Array2<f64>,
    p: f64,
    loss: LossKind,
) -> f64 {
    dual_linear(coeffs, y, loss) - dual_regularizer(q, p)
}

/// Dual objective for expansion coefficients `a` (signed: `α_i y_i` for the
/// hinge loss, `α⁺_i − α⁻_i` for regression). Fails on infeasible coefficients.
pub fn dual_objective(
    coeffs: &[f64],
    y: &[f64],
    c_mat: &LikelihoodMatrix,
    bundle: &KernelBundle,
    p: f64,
    c: f64,
    loss: LossKind,
) -> Result<f64> {
    let n = coeffs.len();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{} targets for {n} coefficients",
            y.len()
        )));
    }
    let slack = 1e-8 * c * n as f64;
    let balance: f64 = coeffs.iter().sum();
    if balance.abs() > slack {
        return Err(Error::Infeasible(format!("Σ a = {balance}")));
    }
    for (i, (a, yi)) in coeffs.iter().zip(y).enumerate() {
        let ok = match loss {
            LossKind::Hinge => {
                let alpha = a * yi;
                alpha >= -slack && alpha <= c + slack
            }
            LossKind::EpsInsensitive { .. } => a.abs() <= c + slack,
        };
        if !ok {
            return Err(Error::Infeasible(format!(
                "coefficient {i} = {a} violates the box"
            )));
        }
    }
    let q = quad_forms(coeffs, c_mat, bundle)?;
    Ok(dual_objective_from_q(coeffs, y, &q, p, loss))
}
