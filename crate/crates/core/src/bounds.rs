//! Empirical Rademacher complexity bounds and the resulting generalization
//! bound for per-cluster ℓp-constrained kernel combinations.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cluster::LikelihoodMatrix;
use crate::error::{Error, Result};

/// Finite stand-in for the unbounded `t` range when `p = 1`.
pub const P_ONE_T_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// M x n matrix of `k_m(x_i, x_i)`.
    pub kernel_diagonals: Array2<f64>,
    pub likelihoods: LikelihoodMatrix,
    /// Radius `D` of the hypothesis class.
    pub d: f64,
    pub p: f64,
    /// Uniform bound `B ≥ k_m(x, x)`.
    pub b: f64,
    /// Loss bound `B_ℓ`.
    pub loss_bound: f64,
    /// Lipschitz constant of the loss; recorded but absent from the bound itself.
    pub lipschitz: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `2 ln M` lies inside the admissible `t` range: logarithmic dependence on M.
    LogM,
    /// The range is capped below `2 ln M`: dependence `M^{(p−1)/(2p)}`.
    PolynomialM,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rademacher_exact: f64,
    pub exact_t: f64,
    pub rademacher_simplified: f64,
    pub optimal_t: f64,
    pub generalization: f64,
    pub regime: Regime,
}

impl BoundInputs {
    pub fn n(&self) -> usize {
        self.likelihoods.n()
    }

    pub fn kernels(&self) -> usize {
        self.kernel_diagonals.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d > 0.0 && self.b > 0.0) {
            return Err(Error::InvalidParameter("D and B must be > 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.p >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "p must be >= 1, got {}",
                self.p
            )));
        }
        if self.kernel_diagonals.nrows() == 0 || self.kernel_diagonals.ncols() != self.n() {
            return Err(Error::Dimension(format!(
                "kernel diagonals are {:?}, expected (M >= 1, {})",
                self.kernel_diagonals.dim(),
                self.n()
            )));
        }
        Ok(())
    }

    fn check_b(&self) -> Result<()> {
        if let Some(&v) = self.kernel_diagonals.iter().find(|&&v| v > self.b) {
            return Err(Error::BoundViolated {
                value: v,
                bound: self.b,
            });
        }
        Ok(())
    }
}

/// Upper end `2p/(p−1)` of the admissible `t` range (capped for `p = 1`).
pub fn t_upper(p: f64) -> f64 {
    if p == 1.0 {
        P_ONE_T_CAP
    } else {
        (2.0 * p / (p - 1.0)).min(P_ONE_T_CAP)
    }
}

/// Minimizer of `t M^{2/t}` over `[2, 2p/(p−1)]`: `clamp(2 ln M, 2, 2p/(p−1))`.
pub fn optimal_t(m: f64, p: f64) -> f64 {
    (2.0 * m.ln()).clamp(2.0, t_upper(p))
}

pub fn regime(m: f64, p: f64) -> Regime {
    if 2.0 * m.ln() <= t_upper(p) {
        Regime::LogM
    } else {
        Regime::PolynomialM
    }
}

/// `Σ_j Σ_i c_j(x_i)²`
pub fn likelihood_mass(c: &LikelihoodMatrix) -> f64 {
    c.sum_squares()
}

fn exact_term(inputs: &BoundInputs, t: f64) -> f64 {
    let (m, n) = inputs.kernel_diagonals.dim();
    let l = inputs.likelihoods.clusters();
    let q = t / 2.0;
    let mut total = 0.0;
    for j in 0..l {
        let v: Vec<f64> = (0..m)
            .map(|mi| {
                (0..n)
                    .map(|i| {
                        inputs.likelihoods.get(i, j).powi(2) * inputs.kernel_diagonals[[mi, i]]
                    })
                    .sum::<f64>()
            })
            .collect();
        let vmax = v.iter().copied().fold(0.0, f64::max);
        if vmax > 0.0 {
            total += vmax
                * v.iter()
                    .map(|x| (x / vmax).powf(q))
                    .sum::<f64>()
                    .powf(1.0 / q);
        }
    }
    t * total
}

/// `(√D / n) inf_{2 ≤ t ≤ 2p/(p−1)} (t Σ_j ‖(Σ_i c_j(x_i)² k_m(x_i, x_i))_m‖_{t/2})^{1/2}`,
/// with the infimum taken over `t* = clamp(2 ln M)` and both endpoints.
/// Returns the bound and the minimizing `t`.
pub fn rademacher_bound_exact(inputs: &BoundInputs) -> Result<(f64, f64)> {
    inputs.validate()?;
    let m = inputs.kernels() as f64;
    let scale = inputs.d.sqrt() / inputs.n() as f64;
    let mut best = (f64::INFINITY, 2.0);
    for t in [optimal_t(m, inputs.p), 2.0, t_upper(inputs.p)] {
        let v = scale * exact_term(inputs, t).sqrt();
        if v < best.0 {
            best = (v, t);
        }
    }
    Ok(best)
}

/// `(√(DB) / n) (t* M^{2/t*} Σ_j Σ_i c_j(x_i)²)^{1/2}`. Fails if a diagonal exceeds `B`.
pub fn rademacher_bound_simplified(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    inputs.check_b()?;
    Ok(simplified_value(
        inputs.d,
        inputs.b,
        inputs.kernels() as f64,
        inputs.p,
        inputs.n(),
        likelihood_mass(&inputs.likelihoods),
    ))
}

/// The simplified bound from summary statistics; `m` may be non-integral.
pub fn simplified_value(d: f64, b: f64, m: f64, p: f64, n: usize, mass: f64) -> f64 {
    let t = optimal_t(m, p);
    (d * b).sqrt() / n as f64 * (t * m.powf(2.0 / t) * mass).sqrt()
}

/// `E_z + B_ℓ √(ln(2/δ) / (2n)) + 2 R`, with `R` the simplified Rademacher bound.
pub fn generalization_bound(inputs: &BoundInputs, empirical_risk: f64) -> Result<BoundReport> {
    if !(empirical_risk >= 0.0) {
        return Err(Error::InvalidParameter(
            "empirical risk must be >= 0".into(),
        ));
    }
    let (exact, exact_t) = rademacher_bound_exact(inputs)?;
    let simplified = rademacher_bound_simplified(inputs)?;
    let m = inputs.kernels() as f64;
    Ok(BoundReport {
        rademacher_exact: exact,
        exact_t,
        rademacher_simplified: simplified,
        optimal_t: optimal_t(m, inputs.p),
        generalization: empirical_risk
            + confidence_term(inputs.loss_bound, inputs.delta, inputs.n())
            + 2.0 * simplified,
        regime: regime(m, inputs.p),
    })
}

/// `B_ℓ √(ln(2/δ) / (2n))`
pub fn confidence_term(loss_bound: f64, delta: f64, n: usize) -> f64 {
    loss_bound * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// `D = Σ_j ‖w_j‖²_{2, 2p/(p+1)}` from stored squared weight norms.
pub fn estimate_d(norms_sq: &Array2<f64>, p: f64) -> f64 {
    2.0 * crate::train::block_norm_regularizer(norms_sq, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inputs(diag: Array2<f64>, c: LikelihoodMatrix, p: f64) -> BoundInputs {
        BoundInputs {
            kernel_diagonals: diag,
            likelihoods: c,
            d: 2.0,
            p,
            b: 1.0,
            loss_bound: 1.0,
            lipschitz: 1.0,
            delta: 0.1,
        }
    }

    #[test]
    fn single_kernel_uses_t_two() {
        let diag = Array2::from_shape_fn((1, 6), |(_, i)| 0.5 + 0.05 * i as f64);
        let c = LikelihoodMatrix::hard(&[0, 0, 1, 1, 2, 2], 3);
        let inp = inputs(diag.clone(), c.clone(), 2.0);
        let (v, t) = rademacher_bound_exact(&inp).unwrap();
        assert_eq!(t, 2.0);
        let s: f64 = (0..6).map(|i| diag[[0, i]]).sum();
        assert!((v - 2f64.sqrt() / 6.0 * (2.0 * s).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hard_versus_uniform_is_sqrt_l() {
        let n = 12;
        let l = 4;
        let diag = Array2::ones((3, n));
        let labels: Vec<usize> = (0..n).map(|i| i % l).collect();
        let hard = rademacher_bound_simplified(&inputs(
            diag.clone(),
            LikelihoodMatrix::hard(&labels, l),
            2.0,
        ))
        .unwrap();
        let unif = rademacher_bound_simplified(&inputs(diag, LikelihoodMatrix::uniform(n, l), 2.0))
            .unwrap();
        assert!((hard / unif - (l as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn t_star_examples() {
        let m = std::f64::consts::E.powi(2);
        assert!((optimal_t(m, 1.0) - 4.0).abs() < 1e-15);
        // 4 e² ... t M^{2/t} at t = 4 equals 4e.
        assert!((optimal_t(m, 1.0) * m.powf(2.0 / 4.0) - 4.0 * std::f64::consts::E).abs() < 1e-12);
        assert_eq!(optimal_t(1.0, 2.0), 2.0);
        assert_eq!(optimal_t(1000.0, 2.0), 4.0);
        assert_eq!(regime(1000.0, 2.0), Regime::PolynomialM);
        assert_eq!(regime(3.0, 2.0), Regime::LogM);
        // Capped at t = 4: the M factor is M^{1/2} inside the root, M^{1/4} outside.
        let a = simplified_value(1.0, 1.0, 1e4, 2.0, 10, 10.0);
        let b = simplified_value(1.0, 1.0, 1.6e5, 2.0, 10, 10.0);
        assert!((b / a - 16f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn generalization_examples() {
        assert!((confidence_term(1.0, 0.5, 50) - (4f64.ln() / 100.0).sqrt()).abs() < 1e-15);
        let diag = Array2::from_elem((2, 50), 0.5);
        let mut inp = inputs(diag, LikelihoodMatrix::uniform(50, 2), 2.0);
        inp.delta = 0.5;
        let r = generalization_bound(&inp, 0.0).unwrap();
        assert!(
            (r.generalization - confidence_term(1.0, 0.5, 50) - 2.0 * r.rademacher_simplified)
                .abs()
                < 1e-15
        );
        inp.delta = 2.0;
        assert!(generalization_bound(&inp, 0.0).is_err());
    }

    #[test]
    fn doubling_n_scales_by_inverse_sqrt_two() {
        let a = simplified_value(1.0, 1.0, 5.0, 2.0, 20, 20.0 / 3.0);
        let b = simplified_value(1.0, 1.0, 5.0, 2.0, 40, 40.0 / 3.0);
        assert!((b / a - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn diagonal_above_b_is_reported() {
        let inp = inputs(
            Array2::from_elem((1, 3), 1.5),
            LikelihoodMatrix::uniform(3, 1),
            2.0,
        );
        assert!(matches!(
            rademacher_bound_simplified(&inp),
            Err(Error::BoundViolated { .. })
        ));
    }

    proptest! {
        #[test]
        fn exact_never_exceeds_simplified(
            raw in prop::collection::vec(0.0f64..1.0, 40),
            p in prop_oneof![Just(1.0), 1.1f64..6.0],
            tau in 0.0f64..5.0,
        ) {
            let diag = Array2::from_shape_vec((4, 10), raw.clone()).unwrap();
            let d = Array2::from_shape_fn((10, 3), |(i, j)| raw[(i * 3 + j) % 40] * 3.0);
            let c = crate::cluster::likelihoods(&d, tau).unwrap();
            let inp = inputs(diag, c, p);
            let (exact, _) = rademacher_bound_exact(&inp).unwrap();
            let simple = rademacher_bound_simplified(&inp).unwrap();
            prop_assert!(exact <= simple + 1e-12);
        }

        #[test]
        fn t_star_is_stationary_or_an_endpoint(m in 1.0f64..1e6, p in 1.0f64..8.0) {
            let t = optimal_t(m, p);
            let upper = t_upper(p);
            if t > 2.0 && t < upper {
                // d/dt (t M^{2/t}) = M^{2/t} (1 − 2 ln M / t)
                prop_assert!((1.0 - 2.0 * m.ln() / t).abs() < 1e-12);
            } else {
                prop_assert!(t == 2.0 || t == upper);
            }
        }

        #[test]
        fn invariant_under_permutations(raw in prop::collection::vec(0.01f64..1.0, 30), shift in 1usize..10) {
            let diag = Array2::from_shape_vec((3, 10), raw.clone()).unwrap();
            let d = Array2::from_shape_fn((10, 2), |(i, j)| raw[(i * 2 + j) % 30]);
            let c = crate::cluster::likelihoods(&d, 1.0).unwrap();
            let perm: Vec<usize> = (0..10).map(|i| (i + shift) % 10).collect();
            let diag_p = Array2::from_shape_fn((3, 10), |(m, i)| diag[[2 - m, perm[i]]]);
            let c_p = c.select(&perm);
            let a = rademacher_bound_exact(&inputs(diag, c, 2.0)).unwrap().0;
            let b = rademacher_bound_exact(&inputs(diag_p, c_p, 2.0)).unwrap().0;
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
