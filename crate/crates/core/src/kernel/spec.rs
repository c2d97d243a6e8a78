use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{CrossKernelMatrix, GramMatrix};
use crate::error::{Error, Result};

/// Closed-form base kernels that can be evaluated on feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// `<x, y>`
    Linear,
    /// `exp(-|x - y|^2 / (2 width^2))`
    Gaussian { width: f64 },
    /// `(<x, y> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-(1/width) sum_d (x_d - y_d)^2 / (x_d + y_d))` with `0/0 := 0`.
    /// A missing width is set to the mean pairwise chi-squared distance of the training points.
    ChiSquared { width: Option<f64> },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { width } => positive_width(width),
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::InvalidKernel(
                        "polynomial degree must be >= 1".into(),
                    ));
                }
                if !offset.is_finite() {
                    return Err(Error::InvalidKernel(
                        "polynomial offset must be finite".into(),
                    ));
                }
                Ok(())
            }
            KernelSpec::ChiSquared { width: Some(w) } => positive_width(w),
            KernelSpec::ChiSquared { width: None } => Ok(()),
        }
    }

    /// Fills data-dependent parameters from the training features.
    pub fn resolve(&self, train: &Array2<f64>) -> Result<KernelSpec> {
        self.validate()?;
        check_features(train, self)?;
        Ok(match *self {
            KernelSpec::ChiSquared { width: None } => {
                let n = train.nrows();
                let mut total = 0.0;
                let mut pairs = 0usize;
                for i in 0..n {
                    for j in (i + 1)..n {
                        total += chi2_distance(train.row(i), train.row(j));
                        pairs += 1;
                    }
                }
                let mean = if pairs == 0 {
                    0.0
                } else {
                    total / pairs as f64
                };
                KernelSpec::ChiSquared {
                    width: Some(if mean > 0.0 { mean } else { 1.0 }),
                }
            }
            other => other,
        })
    }

    fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match *self {
            KernelSpec::Linear => x.dot(&y),
            KernelSpec::Gaussian { width } => {
                let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            KernelSpec::Polynomial { degree, offset } => (x.dot(&y) + offset).powi(degree as i32),
            KernelSpec::ChiSquared { width } => {
                let width = width.expect("chi-squared width resolved before evaluation");
                (-chi2_distance(x, y) / width).exp()
            }
        }
    }
}

/// `linear`, `gaussian:WIDTH`, `poly:DEGREE[:OFFSET]`, `chi2[:WIDTH]`.
impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts[i].parse::<f64>().map_err(|_| {
                Error::InvalidKernel(format!("'{}' is not a number in '{s}'", parts[i]))
            })
        };
        let spec = match (parts[0], parts.len()) {
            ("linear", 1) => KernelSpec::Linear,
            ("gaussian", 2) => KernelSpec::Gaussian { width: num(1)? },
            ("poly", 2 | 3) => {
                let degree = parts[1]
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidKernel(format!("bad polynomial degree in '{s}'")))?;
                let offset = if parts.len() == 3 { num(2)? } else { 0.0 };
                KernelSpec::Polynomial { degree, offset }
            }
            ("chi2", 1) => KernelSpec::ChiSquared { width: None },
            ("chi2", 2) => KernelSpec::ChiSquared { width: Some(num(1)?) },
            _ => {
                return Err(Error::InvalidKernel(format!(
                    "unrecognized kernel spec '{s}' (expected linear, gaussian:W, poly:D[:C] or chi2[:W])"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn positive_width(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!(
            "kernel width must be > 0, got {w}"
        )))
    }
}

fn chi2_distance(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(&a, &b)| {
            let s = a + b;
            if s == 0.0 {
                0.0
            } else {
                (a - b) * (a - b) / s
            }
        })
        .sum()
}

fn check_features(features: &Array2<f64>, spec: &KernelSpec) -> Result<()> {
    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(Error::Dimension("features need n >= 1 and d >= 1".into()));
    }
    for ((i, j), &v) in features.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row: i, col: j });
        }
        if matches!(spec, KernelSpec::ChiSquared { .. }) && v < 0.0 {
            return Err(Error::InvalidKernel(format!(
                "chi-squared kernel needs nonnegative features, found {v} at ({i}, {j})"
            )));
        }
    }
    Ok(())
}

/// Gram matrix of `spec` over the rows of `features` (n x d).
pub fn compute_gram(features: &Array2<f64>, spec: &KernelSpec) -> Result<GramMatrix> {
    let spec = spec.resolve(features)?;
    let n = features.nrows();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(features.row(i), features.row(j));
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    GramMatrix::new(values)
}

/// Cross evaluations `k(test_t, train_i)` plus the test self-evaluations.
/// Data-dependent parameters are resolved on `train` only.
pub fn compute_cross(
    train: &Array2<f64>,
    test: &Array2<f64>,
    spec: &KernelSpec,
) -> Result<CrossKernelMatrix> {
    let spec = spec.resolve(train)?;
    check_features(test, &spec)?;
    if test.ncols() != train.ncols() {
        return Err(Error::Dimension(format!(
            "test features have d = {}, training d = {}",
            test.ncols(),
            train.ncols()
        )));
    }
    let values = Array2::from_shape_fn((test.nrows(), train.nrows()), |(t, i)| {
        spec.eval(test.row(t), train.row(i))
    });
    let diag = test.rows().into_iter().map(|r| spec.eval(r, r)).collect();
    CrossKernelMatrix::new(values, Some(diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn parses_spec_strings() {
        assert_eq!("linear".parse::<KernelSpec>().unwrap(), KernelSpec::Linear);
        assert_eq!(
            "gaussian:0.5".parse::<KernelSpec>().unwrap(),
            KernelSpec::Gaussian { width: 0.5 }
        );
        assert_eq!(
            "poly:3".parse::<KernelSpec>().unwrap(),
            KernelSpec::Polynomial {
                degree: 3,
                offset: 0.0
            }
        );
        assert_eq!(
            "poly:2:1".parse::<KernelSpec>().unwrap(),
            KernelSpec::Polynomial {
                degree: 2,
                offset: 1.0
            }
        );
        assert_eq!(
            "chi2".parse::<KernelSpec>().unwrap(),
            KernelSpec::ChiSquared { width: None }
        );
        for bad in ["", "gaussian", "gaussian:-1", "poly:0", "rbf:1", "linear:2"] {
            assert!(bad.parse::<KernelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn linear_inner_products() {
        let k = compute_gram(&array![[1.0], [-1.0]], &KernelSpec::Linear).unwrap();
        assert_eq!(k.values(), &array![[1.0, -1.0], [-1.0, 1.0]]);
    }

    #[test]
    fn gaussian_half_at_sqrt_two_ln_two() {
        let x = array![[0.0], [(2.0 * 2f64.ln()).sqrt()]];
        let k = compute_gram(&x, &KernelSpec::Gaussian { width: 1.0 }).unwrap();
        assert!((k.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(1, 1), 1.0);
    }

    #[test]
    fn polynomial_and_chi_squared_closed_forms() {
        let x = array![[1.0, 2.0], [3.0, 0.0]];
        let k = compute_gram(
            &x,
            &KernelSpec::Polynomial {
                degree: 2,
                offset: 1.0,
            },
        )
        .unwrap();
        assert_eq!(k.get(0, 1), 16.0);

        // chi2 distance = (1-3)^2/4 + (2-0)^2/2 = 3; default width is the mean distance = 3.
        let k = compute_gram(&x, &KernelSpec::ChiSquared { width: None }).unwrap();
        assert!((k.get(0, 1) - (-1f64).exp()).abs() < 1e-15);
        let k = compute_gram(&x, &KernelSpec::ChiSquared { width: Some(1.5) }).unwrap();
        assert!((k.get(0, 1) - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn feature_errors() {
        let neg = array![[1.0], [-0.5]];
        assert!(compute_gram(&neg, &KernelSpec::ChiSquared { width: None }).is_err());
        let nan = array![[1.0], [f64::NAN]];
        assert!(matches!(
            compute_gram(&nan, &KernelSpec::Linear),
            Err(Error::NonFinite { .. })
        ));
        assert!(compute_gram(&array![[1.0]], &KernelSpec::Gaussian { width: 0.0 }).is_err());
        assert!(KernelSpec::Polynomial {
            degree: 0,
            offset: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cross_matches_gram_on_training_points() {
        let x = array![[0.3, 1.0], [2.0, 0.5], [1.0, 1.0]];
        for spec in [
            KernelSpec::Linear,
            KernelSpec::Gaussian { width: 0.7 },
            KernelSpec::ChiSquared { width: None },
        ] {
            let k = compute_gram(&x, &spec).unwrap();
            let c = compute_cross(&x, &x, &spec).unwrap();
            assert_eq!(c.values(), k.values());
            assert_eq!(c.diag_test().unwrap(), k.diagonal().as_slice());
        }
    }

    fn spec_strategy() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            Just(KernelSpec::Linear),
            (0.1f64..5.0).prop_map(|width| KernelSpec::Gaussian { width }),
            (1u32..4, 0.0f64..2.0)
                .prop_map(|(degree, offset)| KernelSpec::Polynomial { degree, offset }),
            Just(KernelSpec::ChiSquared { width: None }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gram_invariants_hold(
            spec in spec_strategy(),
            n in 1usize..8,
            d in 1usize..4,
            seed in prop::collection::vec(0.0f64..3.0, 32),
        ) {
            let x = Array2::from_shape_fn((n, d), |(i, j)| seed[(i * d + j) % seed.len()] + 0.1 * i as f64);
            let k = compute_gram(&x, &spec).unwrap();
            prop_assert!(GramMatrix::new(k.values().clone()).is_ok());
            prop_assert!(k.check_psd().is_psd());
        }
    }
}
