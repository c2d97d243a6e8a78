//! Seeded two-regime toy problem: points split into two well-separated
//! groups along feature 0, and the label depends on feature 1 in the first
//! group and on feature 2 in the second.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::kernel::{
    compute_cross, compute_gram, CrossKernelMatrix, GramMatrix, KernelBundle, KernelSpec,
};
use crate::seed::{stream_rng, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct TwoRegime {
    /// n x 3 features `(group location, signal for group 0, signal for group 1)`.
    pub features: Array2<f64>,
    pub labels: Vec<f64>,
    /// Group of each point (0 or 1).
    pub groups: Vec<usize>,
}

impl TwoRegime {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Kernel `m ∈ {1, 2}` sees the location and feature `m` only.
    pub fn view(&self, m: usize) -> Array2<f64> {
        let n = self.n();
        Array2::from_shape_fn((n, 2), |(i, j)| {
            self.features[[i, if j == 0 { 0 } else { m }]]
        })
    }

    /// Linear kernels `"k1"` and `"k2"` on [`TwoRegime::view`].
    pub fn bundle(&self) -> Result<KernelBundle> {
        let kernels: Vec<GramMatrix> = (1..=2)
            .map(|m| compute_gram(&self.view(m), &KernelSpec::Linear))
            .collect::<Result<_>>()?;
        KernelBundle::new(kernels, vec!["k1".into(), "k2".into()])
    }

    /// Cross matrices `k_m(test, self)` matching [`TwoRegime::bundle`].
    pub fn crosses(&self, test: &TwoRegime) -> Result<Vec<CrossKernelMatrix>> {
        (1..=2)
            .map(|m| compute_cross(&self.view(m), &test.view(m), &KernelSpec::Linear))
            .collect()
    }
}

/// `n` points, half per group, labels ±1 balanced within each group.
/// Group centres sit at `±separation` on feature 0; the informative feature
/// is `y · margin + N(0, 1)` and the other one is `N(0, noise)`.
pub fn two_regime(
    n: usize,
    separation: f64,
    margin: f64,
    noise: f64,
    seed: u64,
    index: u32,
) -> TwoRegime {
    let mut rng = stream_rng(seed, Purpose::Synthetic, index);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Array2::zeros((n, 3));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let g = i % 2;
        let y = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let centre = if g == 0 { -separation } else { separation };
        features[[i, 0]] = centre + 0.3 * unit.sample(&mut rng);
        let signal = y * margin + unit.sample(&mut rng);
        let other = noise * unit.sample(&mut rng);
        let (a, b) = if g == 0 {
            (signal, other)
        } else {
            (other, signal)
        };
        features[[i, 1]] = a;
        features[[i, 2]] = b;
        labels.push(y);
        groups.push(g);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    TwoRegime {
        features: features.select(ndarray::Axis(0), &order),
        labels: order.iter().map(|&i| labels[i]).collect(),
        groups: order.iter().map(|&i| groups[i]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_balanced() {
        let a = two_regime(40, 3.0, 1.5, 2.0, 5, 0);
        assert_eq!(a, two_regime(40, 3.0, 1.5, 2.0, 5, 0));
        assert_ne!(a.features, two_regime(40, 3.0, 1.5, 2.0, 5, 1).features);
        assert_eq!(a.labels.iter().filter(|&&y| y > 0.0).count(), 20);
        assert_eq!(a.groups.iter().filter(|&&g| g == 1).count(), 20);
        let b = a.bundle().unwrap();
        assert_eq!((b.len(), b.n()), (2, 40));
    }
}
