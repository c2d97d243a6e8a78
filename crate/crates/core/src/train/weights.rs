//! Kernel weights and everything computed from the per-(cluster, kernel)
//! quadratic forms `Q_jm = Σ_{i,i'} a_i a_i' c_j(x_i) c_j(x_i') k_m(x_i, x_i')`.

use ndarray::Array2;

use crate::cluster::LikelihoodMatrix;
use crate::error::{Error, Result};
use crate::kernel::{GramMatrix, KernelBundle};

/// Lower bound applied to β before it enters the composite kernel.
pub const BETA_FLOOR: f64 = 1e-12;
const CONSTRAINT_TOL: f64 = 1e-10;

/// l x M matrix of nonnegative weights with `Σ_m β_jm^p ≤ 1` per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    beta: Array2<f64>,
}

impl KernelWeights {
    pub fn new(beta: Array2<f64>, p: f64) -> Result<Self> {
        check_p(p)?;
        for (j, row) in beta.rows().into_iter().enumerate() {
            if row.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "beta row {j} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().map(|b| b.powf(p)).sum();
            if s > 1.0 + CONSTRAINT_TOL {
                return Err(Error::InvalidParameter(format!(
                    "beta row {j} has Σ β^p = {s} > 1"
                )));
            }
        }
        Ok(Self { beta })
    }

    /// `β_jm = M^{-1/p}` everywhere.
    pub fn uniform(l: usize, m: usize, p: f64) -> Self {
        Self {
            beta: Array2::from_elem((l, m), (m as f64).powf(-1.0 / p)),
        }
    }

    pub(crate) fn from_raw(beta: Array2<f64>) -> Self {
        Self { beta }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn clusters(&self) -> usize {
        self.beta.nrows()
    }

    pub fn kernels(&self) -> usize {
        self.beta.ncols()
    }

    /// Copy with every entry raised to at least [`BETA_FLOOR`].
    pub fn floored(&self) -> KernelWeights {
        Self {
            beta: self.beta.mapv(|b| b.max(BETA_FLOOR)),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.beta.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    Ok(())
}

fn check_dims(l: usize, m: usize, c: &LikelihoodMatrix, bundle: &KernelBundle) -> Result<()> {
    if c.n() != bundle.n() {
        return Err(Error::Dimension(format!(
            "likelihoods cover {} points, kernels have n = {}",
            c.n(),
            bundle.n()
        )));
    }
    if c.clusters() != l || bundle.len() != m {
        return Err(Error::Dimension(format!(
            "weights are {l}x{m}, data has {} clusters and {} kernels",
            c.clusters(),
            bundle.len()
        )));
    }
    Ok(())
}

/// `k̃(x_i, x_i') = Σ_m Σ_j β_jm c_j(x_i) c_j(x_i') k_m(x_i, x_i')`.
pub fn composite_kernel(
    beta: &KernelWeights,
    c: &LikelihoodMatrix,
    bundle: &KernelBundle,
) -> Result<GramMatrix> {
    let (l, m) = beta.values().dim();
    check_dims(l, m, c, bundle)?;
    let n = bundle.n();
    let b = beta.values();
    let kernels: Vec<&[f64]> = bundle
        .kernels()
        .iter()
        .map(|k| k.values().as_slice().expect("standard layout"))
        .collect();
    // column-major copy of c so every cluster's likelihoods are contiguous
    let ct: Vec<f64> = c.values().t().iter().copied().collect();
    let mut out = vec![0.0; n * n];
    let mut prod = vec![0.0; l * n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let len = n - i;
        for j in 0..l {
            let cij = ct[j * n + i];
            let col = &ct[j * n + i..(j + 1) * n];
            for (pv, cv) in prod[j * n..j * n + len].iter_mut().zip(col) {
                *pv = cij * cv;
            }
        }
        let row = &mut out[i * n + i..(i + 1) * n];
        let p_row = |j: usize| &prod[j * n..j * n + len];
        for (mi, k) in kernels.iter().enumerate() {
            let k_row = &k[i * n + i..(i + 1) * n];
            let last = b[[l - 1, mi]];
            if l == 1 {
                for ((r, pv), kv) in row.iter_mut().zip(p_row(0)).zip(k_row) {
                    *r += last * pv * kv;
                }
                continue;
            }
            let b0 = b[[0, mi]];
            for (wv, pv) in w[..len].iter_mut().zip(p_row(0)) {
                *wv = b0 * pv;
            }
            for j in 1..l - 1 {
                let bj = b[[j, mi]];
                for (wv, pv) in w[..len].iter_mut().zip(p_row(j)) {
                    *wv += bj * pv;
                }
            }
            for (((r, wv), pv), kv) in row.iter_mut().zip(&w[..len]).zip(p_row(l - 1)).zip(k_row) {
                *r += (wv + last * pv) * kv;
            }
        }
    }
    Ok(GramMatrix::from_upper_triangle(out, n))
}

/// `Q_jm` for expansion coefficients `a` (`α_i y_i` for the hinge loss,
/// `α⁺_i − α⁻_i` for regression), clamped at zero.
pub fn quad_forms(
    coeffs: &[f64],
    c: &LikelihoodMatrix,
    bundle: &KernelBundle,
) -> Result<Array2<f64>> {
    let l = c.clusters();
    let m = bundle.len();
    check_dims(l, m, c, bundle)?;
    let n = bundle.n();
    if coeffs.len() != n {
        return Err(Error::Dimension(format!(
            "{} coefficients for n = {n}",
            coeffs.len()
        )));
    }
    let support: Vec<usize> = (0..n).filter(|&i| coeffs[i] != 0.0).collect();
    let mut q = Array2::zeros((l, m));
    let mut u = vec![0.0; n];
    for j in 0..l {
        for &i in &support {
            u[i] = coeffs[i] * c.get(i, j);
        }
        for (mi, k) in bundle.kernels().iter().enumerate() {
            let kv = k.values().as_slice().expect("standard layout");
            let mut total = 0.0;
            for &i in &support {
                let row = &kv[i * n..(i + 1) * n];
                let inner: f64 = support.iter().map(|&i2| row[i2] * u[i2]).sum();
                total += u[i] * inner;
            }
            q[[j, mi]] = total.max(0.0);
        }
    }
    Ok(q)
}

/// `‖w_j^(m)‖² = β_jm² Q_jm`.
pub fn weight_norms_sq(
    coeffs: &[f64],
    c: &LikelihoodMatrix,
    beta: &KernelWeights,
    bundle: &KernelBundle,
) -> Result<Array2<f64>> {
    let q = quad_forms(coeffs, c, bundle)?;
    if q.dim() != beta.values().dim() {
        return Err(Error::Dimension(
            "beta shape does not match clusters x kernels".into(),
        ));
    }
    Ok(scale_norms(&q, beta))
}

pub(crate) fn scale_norms(q: &Array2<f64>, beta: &KernelWeights) -> Array2<f64> {
    ndarray::Zip::from(q)
        .and(beta.values())
        .map_collect(|&q, &b| (b * b * q).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaUpdate {
    pub weights: KernelWeights,
    /// Clusters whose norms were all zero and whose row was reset to `M^{-1/p}`.
    pub reset_clusters: Vec<usize>,
}

/// Closed-form minimizer of `Σ_m ‖w_jm‖² / β_jm` over `{β ≥ 0, Σ_m β_jm^p ≤ 1}`:
/// `β_jm = ‖w_jm‖^{2/(p+1)} / (Σ_k ‖w_jk‖^{2p/(p+1)})^{1/p}`.
pub fn update_beta(norms_sq: &Array2<f64>, p: f64) -> Result<BetaUpdate> {
    check_p(p)?;
    let (l, m) = norms_sq.dim();
    let mut beta = Array2::zeros((l, m));
    let mut reset_clusters = Vec::new();
    for j in 0..l {
        let row = norms_sq.row(j);
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "weight norm {v} in cluster {j}"
            )));
        }
        let smax = row.iter().copied().fold(0.0, f64::max);
        if smax == 0.0 {
            log::warn!(
                "all weight norms vanish in cluster {j}; resetting its kernel weights to uniform"
            );
            beta.row_mut(j).fill((m as f64).powf(-1.0 / p));
            reset_clusters.push(j);
            continue;
        }
        // The formula is scale-invariant; normalizing by the largest norm avoids overflow.
        let scaled: Vec<f64> = row.iter().map(|s| s / smax).collect();
        let denom = scaled
            .iter()
            .map(|s| s.powf(p / (p + 1.0)))
            .sum::<f64>()
            .powf(1.0 / p);
        for (mi, s) in scaled.iter().enumerate() {
            beta[[j, mi]] = s.powf(1.0 / (p + 1.0)) / denom;
        }
    }
    Ok(BetaUpdate {
        weights: KernelWeights::from_raw(beta),
        reset_clusters,
    })
}

/// `½ Σ_j (Σ_m ‖w_jm‖^{2p/(p+1)})^{(p+1)/p}`, the regularizer at the optimal β.
pub fn block_norm_regularizer(norms_sq: &Array2<f64>, p: f64) -> f64 {
    let e = p / (p + 1.0);
    0.5 * norms_sq
        .rows()
        .into_iter()
        .map(|row| {
            let smax = row.iter().copied().fold(0.0, f64::max);
            if smax == 0.0 {
                0.0
            } else {
                smax * row
                    .iter()
                    .map(|s| (s / smax).powf(e))
                    .sum::<f64>()
                    .powf(1.0 / e)
            }
        })
        .sum::<f64>()
}

/// `½ Σ_j ‖(Σ_i a_i c_j(x_i) φ_m(x_i))_m‖²_{2, 2p/(p−1)}` from the quadratic forms;
/// the inner norm is a max over kernels when `p = 1`.
pub fn dual_regularizer(q: &Array2<f64>, p: f64) -> f64 {
    0.5 * q
        .rows()
        .into_iter()
        .map(|row| {
            let qmax = row.iter().copied().fold(0.0, f64::max);
            if qmax == 0.0 || p == 1.0 {
                return qmax;
            }
            let e = p / (p - 1.0);
            qmax * row
                .iter()
                .map(|v| (v / qmax).powf(e))
                .sum::<f64>()
                .powf(1.0 / e)
        })
        .sum::<f64>()
}

/// Scalar multipliers `[Σ_m̃ Q_jm̃^{p/(p−1)}]^{−1/p} Q_jm^{1/(p−1)}` mapping each
/// expansion `Σ_i a_i c_j(x_i) φ_m(x_i)` to the optimal `w_j^(m)`. For `p = 1`
/// the weight is split evenly over the kernels attaining `max_m Q_jm`.
pub fn representer_multipliers(q: &Array2<f64>, p: f64) -> Result<Array2<f64>> {
    check_p(p)?;
    let (l, m) = q.dim();
    let mut out = Array2::zeros((l, m));
    for j in 0..l {
        let row = q.row(j);
        let qmax = row.iter().copied().fold(0.0, f64::max);
        if qmax == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "expansion vanishes in cluster {j}"
            )));
        }
        if p == 1.0 {
            let ties = row.iter().filter(|&&v| v == qmax).count() as f64;
            for mi in 0..m {
                if row[mi] == qmax {
                    out[[j, mi]] = 1.0 / ties;
                }
            }
            continue;
        }
        let scaled: Vec<f64> = row.iter().map(|v| v / qmax).collect();
        let denom = scaled
            .iter()
            .map(|v| v.powf(p / (p - 1.0)))
            .sum::<f64>()
            .powf(1.0 / p);
        for mi in 0..m {
            out[[j, mi]] = scaled[mi].powf(1.0 / (p - 1.0)) / denom;
        }
    }
    Ok(out)
}

/// Representer multipliers computed directly from expansion coefficients.
pub fn representer_weights(
    coeffs: &[f64],
    c: &LikelihoodMatrix,
    bundle: &KernelBundle,
    p: f64,
) -> Result<Array2<f64>> {
    representer_multipliers(&quad_forms(coeffs, c, bundle)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compute_gram, KernelSpec};
    use ndarray::array;
    use proptest::prelude::*;

    fn ones_bundle(n: usize) -> KernelBundle {
        KernelBundle::unnamed(vec![GramMatrix::new(Array2::ones((n, n))).unwrap()]).unwrap()
    }

    #[test]
    fn composite_examples() {
        let bundle = ones_bundle(2);
        let c = LikelihoodMatrix::uniform(2, 2);
        let beta = KernelWeights::from_raw(array![[1.0], [1.0]]);
        let k = composite_kernel(&beta, &c, &bundle).unwrap();
        assert_eq!(k.get(0, 1), 0.5);

        let hard = LikelihoodMatrix::hard(&[0, 1], 2);
        assert_eq!(
            composite_kernel(&beta, &hard, &bundle).unwrap().get(0, 1),
            0.0
        );

        let x = array![[0.0], [1.0], [3.0]];
        let k1 = compute_gram(&x, &KernelSpec::Linear).unwrap();
        let k2 = compute_gram(&x, &KernelSpec::Gaussian { width: 1.0 }).unwrap();
        let bundle = KernelBundle::unnamed(vec![k1.clone(), k2.clone()]).unwrap();
        let beta = KernelWeights::from_raw(array![[0.3, 0.8]]);
        let k = composite_kernel(&beta, &LikelihoodMatrix::uniform(3, 1), &bundle).unwrap();
        let expected = k1.values() * 0.3 + k2.values() * 0.8;
        for (a, b) in k.values().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn norm_examples() {
        let k = GramMatrix::new(array![[4.0]]).unwrap();
        let bundle = KernelBundle::unnamed(vec![k]).unwrap();
        let c = LikelihoodMatrix::uniform(1, 1);
        let beta = KernelWeights::from_raw(array![[1.0]]);
        assert_eq!(
            weight_norms_sq(&[1.0], &c, &beta, &bundle).unwrap()[[0, 0]],
            4.0
        );
        assert_eq!(
            weight_norms_sq(&[0.0], &c, &beta, &bundle).unwrap()[[0, 0]],
            0.0
        );
        let zero = KernelWeights::from_raw(array![[0.0]]);
        assert_eq!(
            weight_norms_sq(&[1.0], &c, &zero, &bundle).unwrap()[[0, 0]],
            0.0
        );
    }

    #[test]
    fn beta_examples() {
        let eq = update_beta(&array![[2.0, 2.0, 2.0]], 2.0).unwrap();
        for &b in eq.weights.values() {
            assert!((b - 3f64.powf(-0.5)).abs() < 1e-15);
        }

        let b = update_beta(&array![[9.0, 16.0]], 1.0).unwrap();
        assert!((b.weights.values()[[0, 0]] - 3.0 / 7.0).abs() < 1e-15);
        assert!((b.weights.values()[[0, 1]] - 4.0 / 7.0).abs() < 1e-15);

        let b = update_beta(&array![[1.0, 4.0]], 2.0).unwrap();
        let v = b.weights.values();
        assert!((v[[0, 0]] - 0.5330).abs() < 5e-5);
        assert!((v[[0, 1]] - 0.8461).abs() < 5e-5);
        assert!((v[[0, 0]].powi(2) + v[[0, 1]].powi(2) - 1.0).abs() < 1e-12);

        let r = update_beta(&array![[0.0, 0.0], [1.0, 0.0]], 2.0).unwrap();
        assert_eq!(r.reset_clusters, vec![0]);
        assert!((r.weights.values()[[0, 0]] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    /// Numerically minimizes `Σ a_m / β_m` on the simplex by a fine grid (M = 2).
    #[test]
    fn p_one_matches_simplex_grid_search() {
        let a = [9.0, 16.0];
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..100_000 {
            let b = k as f64 / 100_000.0;
            let v = a[0] / b + a[1] / (1.0 - b);
            if v < best.0 {
                best = (v, b);
            }
        }
        assert!((best.1 - 3.0 / 7.0).abs() < 1e-4);
    }

    #[test]
    fn representer_examples() {
        let m = representer_multipliers(&array![[5.0], [0.3]], 1.7).unwrap();
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let m = representer_multipliers(&array![[2.0, 2.0, 2.0, 2.0]], 1.5).unwrap();
        for &v in m.iter() {
            assert!((v - 4f64.powf(-1.0 / 1.5)).abs() < 1e-14);
        }
        let m = representer_multipliers(&array![[1.0, 3.0, 3.0]], 1.0).unwrap();
        assert_eq!(m, array![[0.0, 0.5, 0.5]]);
        assert!(representer_multipliers(&array![[0.0, 0.0]], 2.0).is_err());
    }

    #[test]
    fn regularizers_agree_at_the_fixed_point() {
        // At β = multipliers(Q), the SVM regularizer Σ β Q equals the dual block norm.
        let q = array![[1.0, 2.5, 0.2], [0.7, 0.1, 3.0]];
        for p in [1.33, 2.0, 4.0] {
            let beta = representer_multipliers(&q, p).unwrap();
            let svm: f64 = 0.5 * (&beta * &q).sum();
            assert!((svm - dual_regularizer(&q, p)).abs() < 1e-12);
            let norms = scale_norms(&q, &KernelWeights::from_raw(beta));
            assert!((block_norm_regularizer(&norms, p) - svm).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn updated_beta_meets_the_constraint(
            raw in prop::collection::vec(0.0f64..1e3, 12),
            p in prop_oneof![Just(1.0), Just(1.33), Just(2.0), Just(4.0), 1.0f64..10.0],
        ) {
            let s = Array2::from_shape_vec((3, 4), raw).unwrap();
            let b = update_beta(&s, p).unwrap();
            for row in b.weights.values().rows() {
                let total: f64 = row.iter().map(|v| v.powf(p)).sum();
                prop_assert!((total - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn composite_of_psd_is_psd(
            raw in prop::collection::vec(-2.0f64..2.0, 16),
            braw in prop::collection::vec(0.0f64..1.0, 6),
            tau in 0.0f64..5.0,
        ) {
            let x = Array2::from_shape_vec((8, 2), raw).unwrap();
            let bundle = KernelBundle::unnamed(vec![
                compute_gram(&x, &KernelSpec::Linear).unwrap(),
                compute_gram(&x, &KernelSpec::Gaussian { width: 1.0 }).unwrap(),
            ]).unwrap();
            let d = Array2::from_shape_fn((8, 3), |(i, j)| x[[i, 0]] * (j as f64 - 1.0) + x[[i, 1]].abs());
            let d = d.mapv(|v| v.abs());
            let c = crate::cluster::likelihoods(&d, tau).unwrap();
            let beta = KernelWeights::from_raw(Array2::from_shape_vec((3, 2), braw).unwrap());
            let k = composite_kernel(&beta, &c, &bundle).unwrap();
            prop_assert!(k.check_psd().is_psd());
        }
    }
}
