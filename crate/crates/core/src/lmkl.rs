//! Gated localized MKL with a kernelized gating model
//! `η_m(x) ∝ exp(⟨v_m, φ₀(x)⟩ + v_m0)`, `v_m = Σ_i r(i, m) φ₀(x_i)`.
//!
//! The gating parameters descend on
//! `J = Σ α_i − ½ Σ_{i,i'} α_i α_i' y_i y_i' Σ_m η_m(x_i) k_m(x_i, x_i') η_m(x_i')`
//! with the SVM re-solved after every step.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{CrossKernelMatrix, FittedNormalization, GramMatrix, KernelBundle};
use crate::smo::{self, SmoOptions};
use crate::train::MODEL_VERSION;

pub const DEFAULT_STEPS: usize = 50;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatingState {
    /// n x M representation coefficients of `v_m` over `φ₀(x_i)`.
    #[serde(with = "crate::matrix_serde")]
    pub r: Array2<f64>,
    pub v0: Vec<f64>,
    pub clustering_kernel: String,
}

impl GatingState {
    pub fn zeros(n: usize, m: usize, clustering_kernel: impl Into<String>) -> Self {
        Self {
            r: Array2::zeros((n, m)),
            v0: vec![0.0; m],
            clustering_kernel: clustering_kernel.into(),
        }
    }

    fn stepped(&self, grad: &GatingGradient, mu: f64) -> GatingState {
        GatingState {
            r: &self.r - &(&grad.g * mu),
            v0: self
                .v0
                .iter()
                .zip(&grad.bias)
                .map(|(v, g)| v - mu * g)
                .collect(),
            clustering_kernel: self.clustering_kernel.clone(),
        }
    }
}

/// Row-wise softmax of gating scores.
pub fn gates_from_scores(scores: &Array2<f64>) -> Array2<f64> {
    let mut s = scores.clone();
    for mut row in s.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    s
}

fn scores_from_rows(state: &GatingState, rows: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
    if rows.ncols() != state.r.nrows() {
        return Err(Error::Dimension(format!(
            "gating kernel has {} training columns, gating model has {}",
            rows.ncols(),
            state.r.nrows()
        )));
    }
    let mut s = rows.dot(&state.r);
    for mut row in s.rows_mut() {
        for (v, b) in row.iter_mut().zip(&state.v0) {
            *v += b;
        }
    }
    Ok(s)
}

/// n x M scores `⟨v_m, φ₀(x_i)⟩ + v_m0` on the training points.
pub fn gating_scores(state: &GatingState, k0: &GramMatrix) -> Result<Array2<f64>> {
    scores_from_rows(state, k0.values().view())
}

/// n x M gating values on the training points.
pub fn gating_values(state: &GatingState, k0: &GramMatrix) -> Result<Array2<f64>> {
    Ok(gates_from_scores(&gating_scores(state, k0)?))
}

/// Gating values on test points from `k₀(x_test, x_train)`.
pub fn gating_values_cross(state: &GatingState, cross: &CrossKernelMatrix) -> Result<Array2<f64>> {
    Ok(gates_from_scores(&scores_from_rows(
        state,
        cross.values().view(),
    )?))
}

/// Change of the training scores per unit step along `−grad`: `K₀ g + 1 biasᵀ`.
/// Scores are affine in the parameters, so a line search only needs this once.
pub fn score_direction(grad: &GatingGradient, k0: &GramMatrix) -> Array2<f64> {
    let mut d = k0.values().dot(&grad.g);
    for mut row in d.rows_mut() {
        for (v, b) in row.iter_mut().zip(&grad.bias) {
            *v += b;
        }
    }
    d
}

/// `K(i, i') = Σ_m η_m(x_i) k_m(x_i, x_i') η_m(x_i')`.
pub fn gated_kernel(eta: &Array2<f64>, bundle: &KernelBundle) -> Result<GramMatrix> {
    let n = bundle.n();
    if eta.dim() != (n, bundle.len()) {
        return Err(Error::Dimension(format!(
            "gating values are {:?}, expected ({n}, {})",
            eta.dim(),
            bundle.len()
        )));
    }
    let mut out = vec![0.0; n * n];
    for (m, k) in bundle.kernels().iter().enumerate() {
        let kv = k.values().as_slice().expect("standard layout");
        let em: Vec<f64> = eta.column(m).to_vec();
        for i in 0..n {
            let ei = em[i];
            let row = &mut out[i * n + i..(i + 1) * n];
            for ((o, kv), e) in row
                .iter_mut()
                .zip(&kv[i * n + i..(i + 1) * n])
                .zip(&em[i..])
            {
                *o += ei * kv * e;
            }
        }
    }
    Ok(GramMatrix::from_upper_triangle(out, n))
}

/// `J` for signed coefficients `a_i = α_i y_i`, with `Σ α_i = Σ |a_i|`.
pub fn lmkl_objective(coeffs: &[f64], eta: &Array2<f64>, bundle: &KernelBundle) -> Result<f64> {
    let n = bundle.n();
    if eta.dim() != (n, bundle.len()) || coeffs.len() != n {
        return Err(Error::Dimension("objective inputs disagree in size".into()));
    }
    let support: Vec<usize> = (0..n).filter(|&i| coeffs[i] != 0.0).collect();
    let mut quad = 0.0;
    for (m, k) in bundle.kernels().iter().enumerate() {
        let kv = k.values().as_slice().expect("standard layout");
        let u: Vec<f64> = (0..n).map(|i| coeffs[i] * eta[[i, m]]).collect();
        for &i in &support {
            let row = &kv[i * n..(i + 1) * n];
            quad += u[i] * support.iter().map(|&i2| row[i2] * u[i2]).sum::<f64>();
        }
    }
    Ok(coeffs.iter().map(|a| a.abs()).sum::<f64>() - 0.5 * quad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatingGradient {
    /// Representation of `∂J/∂v_m` over `φ₀(x_i)`.
    pub g: Array2<f64>,
    /// `∂J/∂v_m0 = Σ_i g(i, m)`.
    pub bias: Vec<f64>,
}

/// `g(i, m) = −a_i η_m(x_i) [B(i, m) − A(i)]` with
/// `B(i, m) = Σ_i' a_i' k_m(x_i, x_i') η_m(x_i')` and `A(i) = Σ_m η_m(x_i) B(i, m)`.
pub fn gating_gradient(
    coeffs: &[f64],
    eta: &Array2<f64>,
    bundle: &KernelBundle,
) -> Result<GatingGradient> {
    let (n, m) = eta.dim();
    if n != bundle.n() || m != bundle.len() || coeffs.len() != n {
        return Err(Error::Dimension(
            "gating gradient inputs disagree in size".into(),
        ));
    }
    let mut b = Array2::zeros((n, m));
    for (mi, k) in bundle.kernels().iter().enumerate() {
        let kv = k.values().as_slice().expect("standard layout");
        let u: Vec<f64> = (0..n).map(|i| coeffs[i] * eta[[i, mi]]).collect();
        for i in 0..n {
            let row = &kv[i * n..(i + 1) * n];
            b[[i, mi]] = row.iter().zip(&u).map(|(k, u)| k * u).sum::<f64>();
        }
    }
    let mut g = Array2::zeros((n, m));
    for i in 0..n {
        let a: f64 = (0..m).map(|mi| eta[[i, mi]] * b[[i, mi]]).sum();
        for mi in 0..m {
            g[[i, mi]] = -coeffs[i] * eta[[i, mi]] * (b[[i, mi]] - a);
        }
    }
    let bias = (0..m).map(|mi| g.column(mi).sum()).collect();
    Ok(GatingGradient { g, bias })
}

/// Derivative of `J` along `(δr, δv0)` at fixed α: `Σ_m g_mᵀ K₀ δr_m + Σ_m ∂J/∂v_m0 δv0_m`.
pub fn directional_derivative(
    grad: &GatingGradient,
    k0: &GramMatrix,
    dr: &Array2<f64>,
    dv0: &[f64],
) -> f64 {
    let kdr = k0.values().dot(dr);
    (&grad.g * &kdr).sum() + grad.bias.iter().zip(dv0).map(|(g, d)| g * d).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmklModel {
    pub version: u32,
    pub kernel_names: Vec<String>,
    pub normalization: Vec<FittedNormalization>,
    pub gating: GatingState,
    /// Signed coefficients `α_i y_i`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Gating values on the training points.
    #[serde(with = "crate::matrix_serde")]
    pub train_gating: Array2<f64>,
    pub targets: Vec<f64>,
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmklOptions {
    pub c: f64,
    pub steps: usize,
    pub inner_tol: f64,
}

impl Default for LmklOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            steps: DEFAULT_STEPS,
            inner_tol: 1e-6,
        }
    }
}

/// Alternates an SVM solve on the gated kernel with one backtracking gradient
/// step on the gating parameters; returns the iterate with the lowest `J`.
pub fn train_lmkl(
    bundle: &KernelBundle,
    k0: &GramMatrix,
    y: &[f64],
    opts: &LmklOptions,
    clustering_kernel: &str,
) -> Result<LmklModel> {
    let n = bundle.n();
    if k0.n() != n || y.len() != n {
        return Err(Error::Dimension(format!(
            "kernels have n = {n}, gating kernel {}, labels {}",
            k0.n(),
            y.len()
        )));
    }
    smo::check_binary_labels(y)?;
    let smo_opts = SmoOptions::with_tol(opts.inner_tol);
    let mut state = GatingState::zeros(n, bundle.len(), clustering_kernel);
    let mut scores = gating_scores(&state, k0)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, GatingState, Vec<f64>, f64, Array2<f64>)> = None;
    let mut warm: Option<Vec<f64>> = None;

    for step in 0..opts.steps.max(1) {
        let eta = gates_from_scores(&scores);
        let k = gated_kernel(&eta, bundle)?;
        let sol = smo::solve_hinge_warm(&k, y, opts.c, smo_opts, warm.as_deref())?;
        let a: Vec<f64> = sol.alpha.iter().zip(y).map(|(a, y)| a * y).collect();
        let j = sol.objective;
        history.push(j);
        log::debug!("lmkl step {step}: J = {j:.10e}");
        if best.as_ref().is_none_or(|b| j < b.0) {
            best = Some((j, state.clone(), a.clone(), sol.bias, eta.clone()));
        }
        warm = Some(sol.alpha.clone());

        let grad = gating_gradient(&a, &eta, bundle)?;
        let dir = score_direction(&grad, k0);
        let mut mu = 1.0;
        let mut next = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &scores - &(&dir * mu);
            if lmkl_objective(&a, &gates_from_scores(&trial), bundle)? < j {
                next = Some((state.stepped(&grad, mu), trial));
                break;
            }
            mu *= 0.5;
        }
        match next {
            Some((s, t)) => {
                state = s;
                scores = t;
            }
            None => break,
        }
    }
    let (_, gating, alpha, bias, train_gating) = best.expect("at least one step");
    Ok(LmklModel {
        version: MODEL_VERSION,
        kernel_names: bundle.names().to_vec(),
        normalization: vec![FittedNormalization::None; bundle.len()],
        gating,
        alpha,
        bias,
        c: opts.c,
        train_gating,
        targets: y.to_vec(),
        objective_history: history,
    })
}

impl LmklModel {
    /// `f(x) = Σ_i a_i Σ_m η_m(x_i) k_m(x_i, x) η_m(x) + b`.
    pub fn decision_function(
        &self,
        cross: &[CrossKernelMatrix],
        gate_cross: &CrossKernelMatrix,
    ) -> Result<Vec<f64>> {
        let n = self.alpha.len();
        if cross.len() != self.kernel_names.len() {
            return Err(Error::Dimension(format!(
                "{} cross matrices for {} kernels",
                cross.len(),
                self.kernel_names.len()
            )));
        }
        let eta_test = gating_values_cross(&self.gating, gate_cross)?;
        let n_test = gate_cross.n_test();
        for (m, x) in cross.iter().enumerate() {
            if x.n_train() != n || x.n_test() != n_test {
                return Err(Error::Dimension(format!(
                    "cross matrix for kernel '{}' is {}x{}, expected {n_test}x{n}",
                    self.kernel_names[m],
                    x.n_test(),
                    x.n_train()
                )));
            }
        }
        let mut out = vec![self.bias; n_test];
        for (m, x) in cross.iter().enumerate() {
            let u: Vec<f64> = (0..n)
                .map(|i| self.alpha[i] * self.train_gating[[i, m]])
                .collect();
            for t in 0..n_test {
                let h: f64 = x.values().row(t).iter().zip(&u).map(|(k, u)| k * u).sum();
                out[t] += eta_test[[t, m]] * h;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compute_gram, KernelSpec};
    use crate::seed::{stream_rng, Purpose};
    use ndarray::array;
    use rand::Rng;

    fn instance(seed: u64, n: usize, m: usize) -> (KernelBundle, GramMatrix, Vec<f64>) {
        let mut rng = stream_rng(seed, Purpose::Synthetic, 7);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let kernels = (0..m)
            .map(|k| {
                compute_gram(
                    &x,
                    &KernelSpec::Gaussian {
                        width: 0.4 + 0.4 * k as f64,
                    },
                )
                .unwrap()
            })
            .collect();
        let k0 = compute_gram(&x, &KernelSpec::Linear).unwrap();
        let mut y: Vec<f64> = (0..n)
            .map(|i| {
                if x[[i, 0]] * x[[i, 1]] > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        y[0] = 1.0;
        y[1] = -1.0;
        (KernelBundle::unnamed(kernels).unwrap(), k0, y)
    }

    #[test]
    fn gating_examples() {
        let k0 = GramMatrix::new(array![[1.0, 0.2], [0.2, 1.0]]).unwrap();
        let state = GatingState::zeros(2, 3, "k0");
        let eta = gating_values(&state, &k0).unwrap();
        assert!(eta.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        let mut state = GatingState::zeros(2, 2, "k0");
        state.v0 = vec![3f64.ln(), 0.0];
        let eta = gating_values(&state, &k0).unwrap();
        assert!((eta[[0, 0]] - 0.75).abs() < 1e-15 && (eta[[1, 1]] - 0.25).abs() < 1e-15);

        let mut shifted = state.clone();
        shifted.v0 = vec![3f64.ln() + 5.0, 5.0];
        let eta2 = gating_values(&shifted, &k0).unwrap();
        for (a, b) in eta.iter().zip(eta2.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gated_kernel_examples() {
        let (bundle, _, _) = instance(1, 5, 1);
        let k = gated_kernel(&Array2::ones((5, 1)), &bundle).unwrap();
        assert_eq!(k.values(), bundle.kernel(0).values());

        let (bundle, _, _) = instance(1, 5, 3);
        let k = gated_kernel(&Array2::from_elem((5, 3), 1.0 / 3.0), &bundle).unwrap();
        let sum = crate::kernel::sum_uniform(&bundle);
        for (a, b) in k.values().iter().zip(sum.values().iter()) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }

        let bundle = KernelBundle::unnamed(vec![
            GramMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap(),
            GramMatrix::new(array![[2.0, 0.3], [0.3, 2.0]]).unwrap(),
        ])
        .unwrap();
        let k = gated_kernel(&array![[1.0, 0.0], [0.0, 1.0]], &bundle).unwrap();
        assert_eq!(k.values(), &array![[1.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn degenerate_gradients_vanish() {
        let (bundle, _, _) = instance(2, 6, 3);
        let eta = Array2::from_elem((6, 3), 1.0 / 3.0);
        let g = gating_gradient(&[0.0; 6], &eta, &bundle).unwrap();
        assert!(g.g.iter().all(|&v| v == 0.0));

        let (bundle, _, _) = instance(2, 6, 1);
        let g = gating_gradient(
            &[0.3, -0.2, 0.1, -0.4, 0.5, -0.3],
            &Array2::ones((6, 1)),
            &bundle,
        )
        .unwrap();
        assert!(g.g.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (bundle, k0, y) = instance(3, 12, 3);
        let mut state = GatingState::zeros(12, 3, "k0");
        let mut rng = stream_rng(3, Purpose::Synthetic, 8);
        state.r.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        state.v0 = vec![0.2, -0.1, 0.4];
        let eta = gating_values(&state, &k0).unwrap();
        let sol = smo::solve_hinge(&gated_kernel(&eta, &bundle).unwrap(), &y, 1.0, 1e-10).unwrap();
        let a: Vec<f64> = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
        let grad = gating_gradient(&a, &eta, &bundle).unwrap();
        let dr = Array2::from_shape_fn((12, 3), |_| rng.random_range(-1.0..1.0));
        let dv0: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = 1e-5;
        let j_at = |s: f64| {
            let st = GatingState {
                r: &state.r + &(&dr * s),
                v0: state.v0.iter().zip(&dv0).map(|(v, d)| v + s * d).collect(),
                clustering_kernel: "k0".into(),
            };
            lmkl_objective(&a, &gating_values(&st, &k0).unwrap(), &bundle).unwrap()
        };
        let fd = (j_at(h) - j_at(-h)) / (2.0 * h);
        let an = directional_derivative(&grad, &k0, &dr, &dv0);
        assert!(
            (fd - an).abs() <= 1e-4 * an.abs().max(1e-8),
            "fd {fd} analytic {an}"
        );
    }

    #[test]
    fn single_kernel_is_the_svm() {
        let (bundle, k0, y) = instance(4, 20, 1);
        let model = train_lmkl(
            &bundle,
            &k0,
            &y,
            &LmklOptions {
                c: 1.0,
                steps: 5,
                inner_tol: 1e-10,
            },
            "k0",
        )
        .unwrap();
        let svm = smo::solve_hinge(bundle.kernel(0), &y, 1.0, 1e-10).unwrap();
        for i in 0..20 {
            assert!((model.alpha[i] - svm.alpha[i] * y[i]).abs() < 1e-6);
        }
        let f = model
            .decision_function(&[bundle.kernel(0).as_cross()], &k0.as_cross())
            .unwrap();
        let a: Vec<f64> = svm.alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
        let g = smo::decision_values(bundle.kernel(0), &a, svm.bias);
        for i in 0..20 {
            assert!((f[i] - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn training_decreases_and_reproduces_in_sample_values() {
        let (bundle, k0, y) = instance(5, 30, 3);
        let model = train_lmkl(
            &bundle,
            &k0,
            &y,
            &LmklOptions {
                c: 1.0,
                steps: 10,
                inner_tol: 1e-9,
            },
            "k0",
        )
        .unwrap();
        assert!(model.objective_history.iter().all(|j| j.is_finite()));
        let best = model
            .objective_history
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(best <= model.objective_history[0]);
        let crosses: Vec<_> = bundle.kernels().iter().map(|k| k.as_cross()).collect();
        let f = model.decision_function(&crosses, &k0.as_cross()).unwrap();
        let k = gated_kernel(&model.train_gating, &bundle).unwrap();
        let g = smo::decision_values(&k, &model.alpha, model.bias);
        for i in 0..30 {
            assert!((f[i] - g[i]).abs() < 1e-10);
        }
    }
}
