//! Kernel k-means partitioning and the soft cluster-likelihood model
//! `c_j(x) ∝ exp(-tau * dist²(x, S_j))`.
//!
//! Cluster indices are 0-based throughout the crate.

use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{CrossKernelMatrix, GramMatrix};
use crate::seed::{stream_rng, Purpose};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_EVENNESS_TOL: f64 = 1e-3;
const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub clusters: usize,
    /// Sum of squared feature-space distances to the assigned cluster mean.
    pub clustering_error: f64,
}

impl ClusterAssignment {
    pub fn member_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.clusters];
        for (i, &j) in self.labels.iter().enumerate() {
            sets[j].push(i);
        }
        sets
    }
}

/// Per-cluster sums needed to kernelize distances to cluster means.
struct ClusterStats {
    sizes: Vec<usize>,
    /// `(1/|S_j|²) Σ_{a,b ∈ S_j} k(x_a, x_b)`
    intra: Vec<f64>,
}

fn distances_to_means(k0: &GramMatrix, labels: &[usize], l: usize) -> (Array2<f64>, ClusterStats) {
    let n = k0.n();
    let mut sizes = vec![0usize; l];
    for &j in labels {
        sizes[j] += 1;
    }
    // row_sums[i][j] = Σ_{a ∈ S_j} k(x_i, x_a)
    let mut row_sums = Array2::<f64>::zeros((n, l));
    for i in 0..n {
        let row = k0.row(i);
        for (a, &j) in labels.iter().enumerate() {
            row_sums[[i, j]] += row[a];
        }
    }
    let mut intra = vec![0.0; l];
    for (a, &j) in labels.iter().enumerate() {
        intra[j] += row_sums[[a, j]];
    }
    for j in 0..l {
        if sizes[j] > 0 {
            intra[j] /= (sizes[j] * sizes[j]) as f64;
        }
    }
    let mut dist = Array2::<f64>::from_elem((n, l), f64::INFINITY);
    for i in 0..n {
        let kii = k0.get(i, i);
        for j in 0..l {
            if sizes[j] > 0 {
                let d = kii - 2.0 * row_sums[[i, j]] / sizes[j] as f64 + intra[j];
                dist[[i, j]] = d.max(0.0);
            }
        }
    }
    (dist, ClusterStats { sizes, intra })
}

fn argmin(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = j;
        }
    }
    best
}

/// One Lloyd-style run. Returns the final labels and the clustering error
/// observed at every iteration.
pub(crate) fn kmeans_single(
    k0: &GramMatrix,
    l: usize,
    max_iter: usize,
    initial_centers: &[usize],
) -> (Vec<usize>, Vec<f64>) {
    let n = k0.n();
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, &c) in initial_centers.iter().enumerate() {
                let d = k0.get(i, i) - 2.0 * k0.get(i, c) + k0.get(c, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect();
    repair_empty(&mut labels, l, |i, j| {
        let c = initial_centers[j];
        (k0.get(i, i) - 2.0 * k0.get(i, c) + k0.get(c, c)).max(0.0)
    });

    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let (dist, _) = distances_to_means(k0, &labels, l);
        history.push((0..n).map(|i| dist[[i, labels[i]]]).sum());
        let mut next: Vec<usize> = (0..n).map(|i| argmin(dist.row(i))).collect();
        repair_empty(&mut next, l, |i, j| dist[[i, j]]);
        if next == labels {
            return (labels, history);
        }
        labels = next;
    }
    let (dist, _) = distances_to_means(k0, &labels, l);
    history.push((0..n).map(|i| dist[[i, labels[i]]]).sum());
    (labels, history)
}

/// Moves the point farthest from its own center into each empty cluster.
fn repair_empty(labels: &mut [usize], l: usize, dist: impl Fn(usize, usize) -> f64) {
    loop {
        let mut sizes = vec![0usize; l];
        for &j in labels.iter() {
            sizes[j] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &j) in labels.iter().enumerate() {
            if sizes[j] > 1 {
                let d = dist(i, j);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

/// Kernel k-means with `restarts` seeded random initializations; the run with
/// the smallest clustering error wins (ties go to the earliest restart).
pub fn kernel_kmeans(
    k0: &GramMatrix,
    clusters: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let n = k0.n();
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count must be in [1, n = {n}], got {clusters}"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    let runs: Vec<(Vec<usize>, f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, Purpose::KMeansRestart, r as u32);
            let centers = sample(&mut rng, n, clusters).into_vec();
            let (labels, history) = kmeans_single(k0, clusters, max_iter, &centers);
            (labels, *history.last().unwrap())
        })
        .collect();
    let (labels, clustering_error) = runs
        .into_iter()
        .reduce(|best, run| if run.1 < best.1 { run } else { best })
        .unwrap();
    Ok(ClusterAssignment {
        labels,
        clusters,
        clustering_error,
    })
}

/// Everything needed to evaluate `c_j(x)` on training and test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    pub member_sets: Vec<Vec<usize>>,
    #[serde(with = "tau_repr")]
    pub tau: f64,
    pub clustering_kernel: String,
    /// `(1/|S_j|²) Σ_{a,b ∈ S_j} k₀(x_a, x_b)` per cluster.
    pub intra_cluster: Vec<f64>,
    pub n_train: usize,
}

impl LikelihoodModel {
    pub fn new(
        k0: &GramMatrix,
        assignment: &ClusterAssignment,
        tau: f64,
        clustering_kernel: impl Into<String>,
    ) -> Result<Self> {
        check_tau(tau)?;
        if assignment.labels.len() != k0.n() {
            return Err(Error::Dimension(format!(
                "{} cluster labels for {} points",
                assignment.labels.len(),
                k0.n()
            )));
        }
        let member_sets = assignment.member_sets();
        if let Some(j) = member_sets.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("cluster {j} is empty")));
        }
        let (_, stats) = distances_to_means(k0, &assignment.labels, assignment.clusters);
        debug_assert!(stats.sizes.iter().all(|&s| s > 0));
        Ok(Self {
            member_sets,
            tau,
            clustering_kernel: clustering_kernel.into(),
            intra_cluster: stats.intra,
            n_train: k0.n(),
        })
    }

    /// One cluster holding every point: `c ≡ 1`, i.e. global MKL.
    pub fn single_cluster(n: usize) -> Self {
        Self {
            member_sets: vec![(0..n).collect()],
            tau: 0.0,
            clustering_kernel: String::new(),
            intra_cluster: vec![0.0],
            n_train: n,
        }
    }

    pub fn clusters(&self) -> usize {
        self.member_sets.len()
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        self.tau = tau;
        Ok(self)
    }

    /// `dist²(x_i, S_j)` for every training point.
    pub fn train_distances(&self, k0: &GramMatrix) -> Result<Array2<f64>> {
        if k0.n() != self.n_train {
            return Err(Error::Dimension(format!(
                "clustering kernel has n = {}, model was fitted on {}",
                k0.n(),
                self.n_train
            )));
        }
        let mut out = Array2::zeros((self.n_train, self.clusters()));
        for i in 0..self.n_train {
            let d = feature_distance_sq(k0.row(i), k0.get(i, i), self);
            out.row_mut(i).assign(&ArrayView1::from(&d));
        }
        Ok(out)
    }

    /// `dist²(x, S_j)` for test points given `k₀(x, x_i)` and `k₀(x, x)`.
    pub fn cross_distances(&self, cross: &CrossKernelMatrix) -> Result<Array2<f64>> {
        if cross.n_train() != self.n_train {
            return Err(Error::Dimension(format!(
                "clustering cross matrix has {} training columns, model has {}",
                cross.n_train(),
                self.n_train
            )));
        }
        let diag = cross.require_diag("cluster distances")?;
        let mut out = Array2::zeros((cross.n_test(), self.clusters()));
        for t in 0..cross.n_test() {
            let d = feature_distance_sq(cross.values().row(t), diag[t], self);
            out.row_mut(t).assign(&ArrayView1::from(&d));
        }
        Ok(out)
    }

    pub fn train_likelihoods(&self, k0: Option<&GramMatrix>) -> Result<LikelihoodMatrix> {
        if self.clusters() == 1 {
            return Ok(LikelihoodMatrix::uniform(self.n_train, 1));
        }
        let k0 = k0.ok_or_else(|| Error::Dimension("clustering kernel required".into()))?;
        likelihoods(&self.train_distances(k0)?, self.tau)
    }

    pub fn test_likelihoods(
        &self,
        cross: Option<&CrossKernelMatrix>,
        n_test: usize,
    ) -> Result<LikelihoodMatrix> {
        if self.clusters() == 1 {
            return Ok(LikelihoodMatrix::uniform(n_test, 1));
        }
        let cross =
            cross.ok_or_else(|| Error::Dimension("clustering cross matrix required".into()))?;
        if cross.n_test() != n_test {
            return Err(Error::Dimension(format!(
                "clustering cross matrix has {} test rows, expected {n_test}",
                cross.n_test()
            )));
        }
        likelihoods(&self.cross_distances(cross)?, self.tau)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tau must be >= 0, got {tau}"
        )));
    }
    Ok(())
}

/// Kernelized squared distance from a point to each cluster mean:
/// `k₀(x,x) − (2/|S_j|) Σ_{i∈S_j} k₀(x,x_i) + intra_j`, clamped at zero.
pub fn feature_distance_sq(
    point_row: ArrayView1<f64>,
    self_val: f64,
    model: &LikelihoodModel,
) -> Vec<f64> {
    model
        .member_sets
        .iter()
        .zip(&model.intra_cluster)
        .map(|(members, &intra)| {
            let s: f64 = members.iter().map(|&i| point_row[i]).sum();
            (self_val - 2.0 * s / members.len() as f64 + intra).max(0.0)
        })
        .collect()
}

/// n x l matrix of `c_j(x_i)`; rows are probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrix {
    values: Array2<f64>,
}

impl LikelihoodMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (i, row) in values.rows().into_iter().enumerate() {
            if row.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                return Err(Error::InvalidParameter(format!(
                    "likelihood row {i} has entries outside [0, 1]"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "likelihood row {i} sums to {s}, expected 1"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn uniform(n: usize, l: usize) -> Self {
        Self {
            values: Array2::from_elem((n, l), 1.0 / l as f64),
        }
    }

    /// One-hot rows from cluster labels.
    pub fn hard(labels: &[usize], l: usize) -> Self {
        let mut values = Array2::zeros((labels.len(), l));
        for (i, &j) in labels.iter().enumerate() {
            values[[i, j]] = 1.0;
        }
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn clusters(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// `Σ_j Σ_i c_j(x_i)²`
    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|c| c * c).sum()
    }

    pub fn select(&self, idx: &[usize]) -> LikelihoodMatrix {
        let values = Array2::from_shape_fn((idx.len(), self.clusters()), |(a, j)| {
            self.values[[idx[a], j]]
        });
        LikelihoodMatrix { values }
    }
}

/// Softmax of `-tau * dist²` per row, stabilized by subtracting the row minimum.
/// `tau = +inf` gives one-hot rows on the nearest cluster (lowest index on ties).
pub fn likelihoods(dist_sq: &Array2<f64>, tau: f64) -> Result<LikelihoodMatrix> {
    check_tau(tau)?;
    let (n, l) = dist_sq.dim();
    let mut values = Array2::zeros((n, l));
    for i in 0..n {
        let row = dist_sq.row(i);
        if tau.is_infinite() {
            values[[i, argmin(row)]] = 1.0;
            continue;
        }
        let dmin = row.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for j in 0..l {
            let e = (-tau * (row[j] - dmin)).exp();
            values[[i, j]] = e;
            total += e;
        }
        values.row_mut(i).mapv_inplace(|e| e / total);
    }
    Ok(LikelihoodMatrix { values })
}

/// `AE(tau) = (1/(n l)) Σ_i Σ_j exp(-tau dist²_ij) / max_j' exp(-tau dist²_ij')`.
pub fn average_evenness(dist_sq: &Array2<f64>, tau: f64) -> f64 {
    let (n, l) = dist_sq.dim();
    let mut total = 0.0;
    for row in dist_sq.rows() {
        let dmin = row.iter().copied().fold(f64::INFINITY, f64::min);
        for &d in row {
            let gap = d - dmin;
            total += if gap == 0.0 {
                1.0
            } else if tau.is_infinite() {
                0.0
            } else {
                (-tau * gap).exp()
            };
        }
    }
    total / (n * l) as f64
}

/// Finds `tau` with `|AE(tau) − target| <= tol` by bracketing and bisection.
pub fn calibrate_tau(dist_sq: &Array2<f64>, target: f64, tol: f64) -> Result<f64> {
    let l = dist_sq.ncols();
    if target == 1.0 {
        return Ok(0.0);
    }
    if !(target > 1.0 / l as f64 && target <= 1.0) {
        let achievable = target.clamp(1.0 / l as f64, 1.0);
        return Err(Error::TargetUnreachable { target, achievable });
    }
    let mut hi = 1.0;
    while average_evenness(dist_sq, hi) >= target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::TargetUnreachable {
                target,
                achievable: average_evenness(dist_sq, f64::INFINITY),
            });
        }
    }
    let mut lo = 0.0;
    let mut mid = hi;
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let ae = average_evenness(dist_sq, mid);
        if (ae - target).abs() <= tol {
            return Ok(mid);
        }
        if ae > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

mod tau_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
        if tau.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*tau)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid tau '{t}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{compute_gram, KernelSpec};
    use ndarray::array;
    use proptest::prelude::*;

    fn blobs() -> GramMatrix {
        let x = array![[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]];
        compute_gram(&x, &KernelSpec::Linear).unwrap()
    }

    /// Clustering error of an arbitrary labelling, by explicit means in 1-d.
    fn brute_error(points: &[f64], labels: &[usize], l: usize) -> f64 {
        (0..l)
            .map(|j| {
                let members: Vec<f64> = points
                    .iter()
                    .zip(labels)
                    .filter(|(_, &lab)| lab == j)
                    .map(|(&p, _)| p)
                    .collect();
                if members.is_empty() {
                    return 0.0;
                }
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                members.iter().map(|p| (p - mean).powi(2)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn single_cluster_error_formula() {
        let k = blobs();
        let a = kernel_kmeans(&k, 1, 3, 50, 1).unwrap();
        let n = k.n() as f64;
        let expected = k.trace() - k.values().sum() / n;
        assert!((a.clustering_error - expected).abs() < 1e-9);
        assert!(a.labels.iter().all(|&j| j == 0));
    }

    #[test]
    fn separated_blobs_match_brute_force_optimum() {
        let points = [0.0, 0.1, 0.2, 10.0, 10.1, 10.2];
        // Enumerate all 2-partitions with both parts nonempty.
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..(1 << 6) - 1 {
            let labels: Vec<usize> = (0..6).map(|i| ((mask >> i) & 1) as usize).collect();
            let e = brute_error(&points, &labels, 2);
            if e < best.0 {
                best = (e, mask);
            }
        }
        let a = kernel_kmeans(&blobs(), 2, 10, 100, 42).unwrap();
        assert!((a.clustering_error - best.0).abs() < 1e-9);
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[1], a.labels[2]);
        assert_eq!(a.labels[3], a.labels[4]);
        assert_eq!(a.labels[4], a.labels[5]);
        assert_ne!(a.labels[0], a.labels[3]);
    }

    #[test]
    fn one_cluster_per_point_has_zero_error() {
        let k = blobs();
        let a = kernel_kmeans(&k, 6, 2, 10, 0).unwrap();
        assert!(a.clustering_error.abs() < 1e-12);
        let mut seen = a.labels.clone();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
        assert!(kernel_kmeans(&k, 7, 1, 10, 0).is_err());
    }

    #[test]
    fn empty_clusters_are_repaired() {
        // Identical initial centers leave cluster 1 empty after the first assignment.
        let k = blobs();
        let (labels, _) = kmeans_single(&k, 2, 100, &[0, 0]);
        let sets: Vec<usize> = (0..2)
            .map(|j| labels.iter().filter(|&&l| l == j).count())
            .collect();
        assert!(sets.iter().all(|&s| s > 0));
    }

    #[test]
    fn kmeans_is_seed_deterministic() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.37);
        let k = compute_gram(&x, &KernelSpec::Gaussian { width: 1.0 }).unwrap();
        let a = kernel_kmeans(&k, 3, 5, 100, 9).unwrap();
        let b = kernel_kmeans(&k, 3, 5, 100, 9).unwrap();
        assert_eq!(a, b);
    }

    fn model_for(points: &[f64], labels: Vec<usize>, l: usize) -> (GramMatrix, LikelihoodModel) {
        let x = Array2::from_shape_fn((points.len(), 1), |(i, _)| points[i]);
        let k = compute_gram(&x, &KernelSpec::Linear).unwrap();
        let a = ClusterAssignment {
            labels,
            clusters: l,
            clustering_error: 0.0,
        };
        let m = LikelihoodModel::new(&k, &a, 1.0, "lin").unwrap();
        (k, m)
    }

    #[test]
    fn distance_examples() {
        // Singleton cluster {5}: the member itself is at distance zero.
        let (k, m) = model_for(&[2.0, 4.0, 5.0], vec![0, 0, 1], 2);
        let d = feature_distance_sq(k.row(2), k.get(2, 2), &m);
        assert_eq!(d[1], 0.0);

        // x = 0 against members {2, 4}: mean 3, so dist² = 9.
        let d = feature_distance_sq(ArrayView1::from(&[0.0, 0.0, 0.0]), 0.0, &m);
        assert!((d[0] - 9.0).abs() < 1e-12);

        let (k, m) = model_for(
            &[0.0, 0.1, 0.2, 10.0, 10.1, 10.2],
            vec![0, 0, 0, 1, 1, 1],
            2,
        );
        let d = m.train_distances(&k).unwrap();
        for i in 0..3 {
            assert!(d[[i, 1]] > d[[i, 0]]);
            assert!(d[[i + 3, 0]] > d[[i + 3, 1]]);
        }
    }

    #[test]
    fn cross_distances_agree_with_training_distances() {
        let (k, m) = model_for(&[0.0, 0.3, 1.1, 5.0, 5.5], vec![0, 0, 0, 1, 1], 2);
        assert_eq!(
            m.train_distances(&k).unwrap(),
            m.cross_distances(&k.as_cross()).unwrap()
        );
    }

    #[test]
    fn likelihood_examples() {
        let d = array![[0.0, 1.0], [2.0, 0.5], [0.3, 0.3]];
        let u = likelihoods(&d, 0.0).unwrap();
        assert!(u.values().iter().all(|&c| c == 0.5));

        let h = likelihoods(&d, f64::INFINITY).unwrap();
        assert_eq!(h.values(), &array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);

        let c = likelihoods(&array![[0.0, 1.0]], 3f64.ln()).unwrap();
        assert!((c.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((c.get(0, 1) - 0.25).abs() < 1e-15);

        assert!(likelihoods(&d, -1.0).is_err());
    }

    #[test]
    fn evenness_examples() {
        let d = array![[0.0, 1.0]];
        assert_eq!(average_evenness(&d, 0.0), 1.0);
        assert_eq!(average_evenness(&d, f64::INFINITY), 0.5);
        assert!((average_evenness(&d, 2f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn calibration_examples() {
        let d = array![[0.0, 1.0]];
        assert_eq!(calibrate_tau(&d, 1.0, 1e-3).unwrap(), 0.0);
        let tau = calibrate_tau(&d, 0.75, 1e-3).unwrap();
        assert!((average_evenness(&d, tau) - 0.75).abs() <= 1e-3);
        // AE = (1 + e^{-tau}) / 2 is steep enough near ln 2 to pin tau closely.
        assert!((tau - 2f64.ln()).abs() < 5e-3);

        let d = array![[0.0, 1.0, 4.0], [2.0, 0.1, 0.7], [0.5, 0.4, 3.0]];
        assert!(calibrate_tau(&d, 0.8, 1e-6).unwrap() < calibrate_tau(&d, 0.5, 1e-6).unwrap());

        assert!(matches!(
            calibrate_tau(&d, 0.2, 1e-3),
            Err(Error::TargetUnreachable { .. })
        ));
        // Ties everywhere: AE stays at 1.
        let flat = array![[1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(
            calibrate_tau(&flat, 0.7, 1e-3),
            Err(Error::TargetUnreachable { .. })
        ));
    }

    #[test]
    fn hard_and_uniform_sum_of_squares() {
        let n = 12;
        let l = 3;
        let labels: Vec<usize> = (0..n).map(|i| i % l).collect();
        assert!((LikelihoodMatrix::hard(&labels, l).sum_squares() - n as f64).abs() < 1e-12);
        assert!(
            (LikelihoodMatrix::uniform(n, l).sum_squares() - n as f64 / l as f64).abs() < 1e-12
        );
    }

    #[test]
    fn tau_serializes_infinity() {
        let (_, m) = model_for(&[0.0, 1.0], vec![0, 1], 2);
        let m = m.with_tau(f64::INFINITY).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"inf\""));
        let back: LikelihoodModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(
            raw in prop::collection::vec(0.0f64..50.0, 12),
            tau in prop_oneof![Just(0.0), Just(f64::INFINITY), 0.0f64..100.0],
        ) {
            let d = Array2::from_shape_vec((4, 3), raw).unwrap();
            let c = likelihoods(&d, tau).unwrap();
            prop_assert!(LikelihoodMatrix::new(c.values().clone()).is_ok());
        }

        #[test]
        fn evenness_is_monotone_on_log_grid(raw in prop::collection::vec(0.0f64..10.0, 15)) {
            let d = Array2::from_shape_vec((5, 3), raw).unwrap();
            let mut prev = average_evenness(&d, 0.0);
            prop_assert!((prev - 1.0).abs() < 1e-12);
            for e in -6..8 {
                let ae = average_evenness(&d, 10f64.powi(e));
                prop_assert!(ae <= prev + 1e-15);
                prop_assert!(ae >= 1.0 / 3.0 - 1e-15);
                prev = ae;
            }
        }

        #[test]
        fn kmeans_error_never_increases(
            pts in prop::collection::vec(-5.0f64..5.0, 24),
            l in 1usize..5,
            seed in 0u64..1000,
        ) {
            let x = Array2::from_shape_vec((12, 2), pts).unwrap();
            let k = compute_gram(&x, &KernelSpec::Gaussian { width: 2.0 }).unwrap();
            let mut rng = stream_rng(seed, Purpose::KMeansRestart, 0);
            let centers = sample(&mut rng, 12, l).into_vec();
            let (_, history) = kmeans_single(&k, l, 100, &centers);
            for w in history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
