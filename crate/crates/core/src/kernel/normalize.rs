use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{CrossKernelMatrix, GramMatrix};
use crate::error::{Error, Result};

/// `K[i][j] / sqrt(K[i][i] K[j][j])`; the result has a unit diagonal.
pub fn normalize_multiplicative(k: &GramMatrix) -> Result<GramMatrix> {
    let diag = positive_diagonal(k)?;
    Ok(scale_by_diag(k, &diag))
}

/// `K * n / trace(K)`, so that the trace of the result equals `n`.
pub fn normalize_trace(k: &GramMatrix) -> Result<GramMatrix> {
    let scale = trace_scale(k)?;
    Ok(GramMatrix::from_symmetric_unchecked(k.values() * scale))
}

fn positive_diagonal(k: &GramMatrix) -> Result<Vec<f64>> {
    let diag = k.diagonal();
    if let Some(i) = diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::InvalidKernel(format!(
            "multiplicative normalization needs a positive diagonal, K[{i}][{i}] = {}",
            diag[i]
        )));
    }
    Ok(diag)
}

fn trace_scale(k: &GramMatrix) -> Result<f64> {
    let trace = k.trace();
    if trace <= 0.0 {
        return Err(Error::InvalidKernel(format!(
            "trace normalization needs a positive trace, got {trace}"
        )));
    }
    Ok(k.n() as f64 / trace)
}

fn scale_by_diag(k: &GramMatrix, diag: &[f64]) -> GramMatrix {
    let n = k.n();
    let sqrt: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        values[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let v = k.get(i, j) / (sqrt[i] * sqrt[j]);
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    GramMatrix::from_symmetric_unchecked(values)
}

/// How base kernels are normalized before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    None,
    #[default]
    Multiplicative,
    Trace,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "multiplicative" => Ok(Normalization::Multiplicative),
            "trace" => Ok(Normalization::Trace),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalization '{other}' (expected none, multiplicative or trace)"
            ))),
        }
    }
}

/// Normalization statistics fitted on training points, reusable on cross matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FittedNormalization {
    None,
    Multiplicative { train_diag: Vec<f64> },
    Trace { scale: f64 },
}

impl Normalization {
    pub fn fit(self, k: &GramMatrix) -> Result<FittedNormalization> {
        Ok(match self {
            Normalization::None => FittedNormalization::None,
            Normalization::Multiplicative => FittedNormalization::Multiplicative {
                train_diag: positive_diagonal(k)?,
            },
            Normalization::Trace => FittedNormalization::Trace {
                scale: trace_scale(k)?,
            },
        })
    }
}

impl FittedNormalization {
    pub fn apply_gram(&self, k: &GramMatrix) -> Result<GramMatrix> {
        match self {
            FittedNormalization::None => Ok(k.clone()),
            FittedNormalization::Multiplicative { train_diag } => {
                if train_diag.len() != k.n() {
                    return Err(Error::Dimension(format!(
                        "normalization fitted on {} points, applied to {}",
                        train_diag.len(),
                        k.n()
                    )));
                }
                Ok(scale_by_diag(k, train_diag))
            }
            FittedNormalization::Trace { scale } => {
                Ok(GramMatrix::from_symmetric_unchecked(k.values() * *scale))
            }
        }
    }

    pub fn apply_cross(&self, c: &CrossKernelMatrix) -> Result<CrossKernelMatrix> {
        match self {
            FittedNormalization::None => Ok(c.clone()),
            FittedNormalization::Multiplicative { train_diag } => {
                if train_diag.len() != c.n_train() {
                    return Err(Error::Dimension(format!(
                        "normalization fitted on {} points, cross matrix has {} training columns",
                        train_diag.len(),
                        c.n_train()
                    )));
                }
                let test_diag = c.require_diag("multiplicative normalization")?;
                if let Some(t) = test_diag.iter().position(|&d| d <= 0.0) {
                    return Err(Error::InvalidKernel(format!(
                        "test self-evaluation k(x, x) = {} at row {t} is not positive",
                        test_diag[t]
                    )));
                }
                let values = Array2::from_shape_fn(c.values().dim(), |(t, i)| {
                    c.get(t, i) / (test_diag[t] * train_diag[i]).sqrt()
                });
                CrossKernelMatrix::new(values, Some(vec![1.0; c.n_test()]))
            }
            FittedNormalization::Trace { scale } => {
                let diag = c.diag_test().map(|d| d.iter().map(|v| v * scale).collect());
                CrossKernelMatrix::new(c.values() * *scale, diag)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn gram(rows: Array2<f64>) -> GramMatrix {
        GramMatrix::new(rows).unwrap()
    }

    #[test]
    fn multiplicative_examples() {
        let k = normalize_multiplicative(&gram(array![[4.0, 2.0], [2.0, 1.0]])).unwrap();
        assert_eq!(k.values(), &array![[1.0, 1.0], [1.0, 1.0]]);

        let unit = gram(array![[1.0, 0.3, -0.2], [0.3, 1.0, 0.1], [-0.2, 0.1, 1.0]]);
        assert_eq!(normalize_multiplicative(&unit).unwrap(), unit);

        let eye = gram(Array2::eye(3));
        assert_eq!(normalize_multiplicative(&eye).unwrap(), eye);

        assert!(normalize_multiplicative(&gram(array![[0.0, 0.0], [0.0, 1.0]])).is_err());
    }

    #[test]
    fn trace_examples() {
        let eye = gram(Array2::eye(3));
        assert_eq!(normalize_trace(&eye).unwrap(), eye);
        let k = normalize_trace(&gram(array![[2.0, 0.0], [0.0, 2.0]])).unwrap();
        assert_eq!(k.values(), &array![[1.0, 0.0], [0.0, 1.0]]);
        let ones = gram(array![[1.0, 1.0], [1.0, 1.0]]);
        assert_eq!(normalize_trace(&ones).unwrap(), ones);
        assert!(normalize_trace(&gram(array![[0.0]])).is_err());
    }

    #[test]
    fn fitted_cross_matches_gram_on_training_points() {
        let k = gram(array![[4.0, 1.0, 0.5], [1.0, 2.0, 0.3], [0.5, 0.3, 9.0]]);
        for mode in [
            Normalization::None,
            Normalization::Multiplicative,
            Normalization::Trace,
        ] {
            let fitted = mode.fit(&k).unwrap();
            let g = fitted.apply_gram(&k).unwrap();
            let c = fitted.apply_cross(&k.as_cross()).unwrap();
            for t in 0..3 {
                for i in 0..3 {
                    assert!((c.get(t, i) - g.get(t, i)).abs() < 1e-15);
                }
                assert!((c.diag_test().unwrap()[t] - g.get(t, t)).abs() < 1e-15);
            }
        }
    }

    fn random_psd(n: usize, entries: &[f64]) -> GramMatrix {
        let a = Array2::from_shape_fn((n, n + 1), |(i, j)| {
            entries[(i * (n + 1) + j) % entries.len()]
        });
        let mut k = a.dot(&a.t());
        for i in 0..n {
            k[[i, i]] += 0.05;
        }
        let k = (&k + &k.t()) * 0.5;
        gram(k)
    }

    proptest! {
        #[test]
        fn normalizations_preserve_psd(
            n in 1usize..7,
            entries in prop::collection::vec(-2.0f64..2.0, 64),
        ) {
            let k = random_psd(n, &entries);
            let m = normalize_multiplicative(&k).unwrap();
            let t = normalize_trace(&k).unwrap();
            prop_assert!(GramMatrix::new(m.values().clone()).is_ok());
            prop_assert!(m.check_psd().is_psd());
            prop_assert!(t.check_psd().is_psd());
            prop_assert!((t.trace() - n as f64).abs() < 1e-9 * n as f64);
            let twice = normalize_multiplicative(&m).unwrap();
            for (a, b) in twice.values().iter().zip(m.values().iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
