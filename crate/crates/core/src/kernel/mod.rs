//! Gram matrices, kernel bundles and cross-kernel evaluations.
//!
//! Everything downstream consumes precomputed kernel values: the trainers never
//! see feature vectors, only the matrices defined here.

mod io;
mod normalize;
mod spec;

pub use io::{
    decode_kmx, encode_kmx, load_gram, read_csv_matrix, read_kmx, store_gram, write_kmx, KMX_MAGIC,
};
pub use normalize::{
    normalize_multiplicative, normalize_trace, FittedNormalization, Normalization,
};
pub use spec::{compute_cross, compute_gram, KernelSpec};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Relative tolerance of the symmetry invariant.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dense symmetric matrix of kernel evaluations `k(x_i, x_j)` over `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
}

/// Outcome of the (advisory) positive semi-definiteness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub min_eigenvalue: f64,
    pub threshold: f64,
}

impl PsdCheck {
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= self.threshold
    }
}

impl GramMatrix {
    /// Validates squareness, finiteness and symmetry.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(Error::Dimension(format!(
                "Gram matrix must be square, got {rows}x{cols}"
            )));
        }
        if rows == 0 {
            return Err(Error::Dimension("Gram matrix must have n >= 1".into()));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        for i in 0..rows {
            for j in (i + 1)..rows {
                let upper = values[[i, j]];
                let lower = values[[j, i]];
                if (upper - lower).abs() > SYMMETRY_TOL * upper.abs().max(1.0) {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        upper,
                        lower,
                    });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut values = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                values[[i, j]] = v;
            }
        }
        Self::new(values)
    }

    /// Builds from an `n x n` closure evaluated on the upper triangle and mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        Self::new(values)
    }

    /// Wraps a matrix the caller built symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(values: Array2<f64>) -> Self {
        debug_assert_eq!(values.nrows(), values.ncols());
        Self { values }
    }

    /// Builds the matrix from a row-major buffer whose upper triangle
    /// (diagonal included) is filled; the lower triangle is overwritten.
    pub(crate) fn from_upper_triangle(mut buf: Vec<f64>, n: usize) -> Self {
        const TILE: usize = 64;
        for bi in (0..n).step_by(TILE) {
            for bj in (bi..n).step_by(TILE) {
                for i in bi..(bi + TILE).min(n) {
                    for j in bj.max(i + 1)..(bj + TILE).min(n) {
                        buf[j * n + i] = buf[i * n + j];
                    }
                }
            }
        }
        Self::from_symmetric_unchecked(Array2::from_shape_vec((n, n), buf).expect("n x n buffer"))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.values.diag().to_vec()
    }

    pub fn trace(&self) -> f64 {
        self.values.diag().sum()
    }

    /// Smallest eigenvalue of the symmetric matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let n = self.n();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.values[[i, j]]);
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks `lambda_min >= -1e-8 * trace / n`. Advisory: logs a warning rather than failing.
    pub fn check_psd(&self) -> PsdCheck {
        let threshold = -1e-8 * self.trace().abs() / self.n() as f64;
        let check = PsdCheck {
            min_eigenvalue: self.min_eigenvalue(),
            threshold,
        };
        if !check.is_psd() {
            log::warn!(
                "Gram matrix is not PSD: smallest eigenvalue {:e} below {:e}",
                check.min_eigenvalue,
                threshold
            );
        }
        check
    }

    /// Principal submatrix on `idx` (rows and columns).
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        let m = idx.len();
        let values = Array2::from_shape_fn((m, m), |(a, b)| self.values[[idx[a], idx[b]]]);
        GramMatrix { values }
    }

    /// Cross block `k(x_rows, x_cols)` with the self-evaluations of `rows` as diagonal.
    pub fn cross_block(&self, rows: &[usize], cols: &[usize]) -> CrossKernelMatrix {
        let values = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
            self.values[[rows[a], cols[b]]]
        });
        let diag = rows.iter().map(|&r| self.values[[r, r]]).collect();
        CrossKernelMatrix {
            values,
            diag_test: Some(diag),
        }
    }

    /// The matrix viewed as a cross matrix of the training points against themselves.
    pub fn as_cross(&self) -> CrossKernelMatrix {
        CrossKernelMatrix {
            values: self.values.clone(),
            diag_test: Some(self.diagonal()),
        }
    }
}

/// Ordered list of `M >= 1` Gram matrices over the same points, each with a unique name.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBundle {
    kernels: Vec<GramMatrix>,
    names: Vec<String>,
}

impl KernelBundle {
    pub fn new(kernels: Vec<GramMatrix>, names: Vec<String>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidKernel(
                "a bundle needs at least one kernel".into(),
            ));
        }
        if kernels.len() != names.len() {
            return Err(Error::Dimension(format!(
                "{} kernels but {} names",
                kernels.len(),
                names.len()
            )));
        }
        let n = kernels[0].n();
        if let Some(k) = kernels.iter().position(|k| k.n() != n) {
            return Err(Error::Dimension(format!(
                "kernel '{}' has n = {}, expected {n}",
                names[k],
                kernels[k].n()
            )));
        }
        for (a, name) in names.iter().enumerate() {
            if names[..a].contains(name) {
                return Err(Error::InvalidKernel(format!(
                    "duplicate kernel name '{name}'"
                )));
            }
        }
        Ok(Self { kernels, names })
    }

    /// Bundle with generated names `k0, k1, ...`.
    pub fn unnamed(kernels: Vec<GramMatrix>) -> Result<Self> {
        let names = (0..kernels.len()).map(|m| format!("k{m}")).collect();
        Self::new(kernels, names)
    }

    pub fn n(&self) -> usize {
        self.kernels[0].n()
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernels(&self) -> &[GramMatrix] {
        &self.kernels
    }

    pub fn kernel(&self, m: usize) -> &GramMatrix {
        &self.kernels[m]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select(&self, idx: &[usize]) -> KernelBundle {
        KernelBundle {
            kernels: self.kernels.iter().map(|k| k.select(idx)).collect(),
            names: self.names.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(&GramMatrix) -> Result<GramMatrix>) -> Result<KernelBundle> {
        let kernels = self.kernels.iter().map(f).collect::<Result<Vec<_>>>()?;
        KernelBundle::new(kernels, self.names.clone())
    }
}

/// Entrywise mean `(1/M) sum_m K_m` of a bundle.
pub fn sum_uniform(bundle: &KernelBundle) -> GramMatrix {
    let scale = 1.0 / bundle.len() as f64;
    let mut acc = Array2::zeros((bundle.n(), bundle.n()));
    for k in bundle.kernels() {
        acc.scaled_add(scale, k.values());
    }
    GramMatrix::from_symmetric_unchecked(acc)
}

/// Kernel evaluations between test points (rows) and training points (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossKernelMatrix {
    values: Array2<f64>,
    diag_test: Option<Vec<f64>>,
}

impl CrossKernelMatrix {
    pub fn new(values: Array2<f64>, diag_test: Option<Vec<f64>>) -> Result<Self> {
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        if let Some(d) = &diag_test {
            if d.len() != values.nrows() {
                return Err(Error::Dimension(format!(
                    "diagonal has {} entries for {} test points",
                    d.len(),
                    values.nrows()
                )));
            }
            if let Some(i) = d.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col: i });
            }
        }
        Ok(Self { values, diag_test })
    }

    pub fn n_test(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_train(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn diag_test(&self) -> Option<&[f64]> {
        self.diag_test.as_deref()
    }

    pub fn require_diag(&self, what: &str) -> Result<&[f64]> {
        self.diag_test.as_deref().ok_or_else(|| {
            Error::Dimension(format!(
                "{what}: test self-evaluations k(x, x) are required"
            ))
        })
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.values[[t, i]]
    }

    /// Keeps only the training columns in `cols`.
    pub fn select_train(&self, cols: &[usize]) -> CrossKernelMatrix {
        let values = Array2::from_shape_fn((self.n_test(), cols.len()), |(t, b)| {
            self.values[[t, cols[b]]]
        });
        CrossKernelMatrix {
            values,
            diag_test: self.diag_test.clone(),
        }
    }
}

/// Entrywise mean of cross matrices (the cross counterpart of [`sum_uniform`]).
pub fn sum_uniform_cross(crosses: &[CrossKernelMatrix]) -> Result<CrossKernelMatrix> {
    let first = crosses
        .first()
        .ok_or_else(|| Error::InvalidKernel("no cross matrices".into()))?;
    let shape = first.values.dim();
    let scale = 1.0 / crosses.len() as f64;
    let mut values = Array2::zeros(shape);
    let mut diag = first.diag_test.as_ref().map(|d| vec![0.0; d.len()]);
    for c in crosses {
        if c.values.dim() != shape {
            return Err(Error::Dimension(format!(
                "cross matrices disagree in shape: {:?} vs {:?}",
                c.values.dim(),
                shape
            )));
        }
        values.scaled_add(scale, &c.values);
        diag = match (diag, &c.diag_test) {
            (Some(mut acc), Some(d)) => {
                acc.iter_mut().zip(d).for_each(|(a, v)| *a += scale * v);
                Some(acc)
            }
            _ => None,
        };
    }
    CrossKernelMatrix::new(values, diag)
}
