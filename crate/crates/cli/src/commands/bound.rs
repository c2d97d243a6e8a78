use anyhow::{bail, Result};
use clmkl::bounds::{
    estimate_d, generalization_bound, likelihood_mass, BoundInputs, BoundReport, Regime,
};
use clmkl::cluster::{kernel_kmeans, LikelihoodMatrix};
use clmkl::kernel::KernelBundle;
use clmkl::pipeline::{fit_likelihood, prepare, TrainedModel};
use ndarray::Array2;
use serde::Serialize;

use super::predict::load_model;
use super::Outcome;
use crate::args::{BoundArgs, LikelihoodSource};
use crate::config::resolve;
use crate::files::{csv_bytes, load_bundle, write_atomic};

#[derive(Debug, Serialize)]
struct BoundRow {
    n: usize,
    kernels: usize,
    clusters: usize,
    p: f64,
    d: f64,
    b: f64,
    sum_c_squared: f64,
    rademacher_exact: f64,
    exact_t: f64,
    rademacher_simplified: f64,
    optimal_t: f64,
    generalization: f64,
    regime: &'static str,
}

fn diagonals(bundle: &KernelBundle) -> Array2<f64> {
    Array2::from_shape_fn((bundle.len(), bundle.n()), |(m, i)| {
        bundle.kernel(m).get(i, i)
    })
}

pub fn bound(a: &BoundArgs) -> Result<Outcome> {
    let r = resolve(&a.model)?;
    let pc = &r.pipeline;
    let raw = load_bundle(&r.kernels)?;

    let (diag, c, p, d) = if let Some(path) = &a.trained {
        let TrainedModel::Clmkl(model) = load_model(path)? else {
            bail!("bounds need a single CLMKL/MKL model");
        };
        if raw.names() != model.kernel_names.as_slice() {
            bail!(
                "kernels must be given in model order: {}",
                model.kernel_names.join(", ")
            );
        }
        let normalized = KernelBundle::new(
            raw.kernels()
                .iter()
                .zip(&model.normalization)
                .map(|(k, f)| f.apply_gram(k))
                .collect::<clmkl::Result<Vec<_>>>()?,
            raw.names().to_vec(),
        )?;
        let l = model.beta.nrows();
        let c = match a.likelihoods {
            LikelihoodSource::Soft => LikelihoodMatrix::new(model.train_likelihoods.clone())?,
            LikelihoodSource::Uniform => LikelihoodMatrix::uniform(raw.n(), l),
            LikelihoodSource::Hard => {
                let hard: Vec<usize> = (0..raw.n())
                    .map(|i| {
                        (0..l)
                            .max_by(|&x, &y| {
                                model.train_likelihoods[[i, x]]
                                    .total_cmp(&model.train_likelihoods[[i, y]])
                                    .then(y.cmp(&x))
                            })
                            .unwrap_or(0)
                    })
                    .collect();
                LikelihoodMatrix::hard(&hard, l)
            }
        };
        let d =
            a.d.unwrap_or_else(|| estimate_d(&model.weight_norms_sq, model.p));
        (diagonals(&normalized), c, model.p, d)
    } else {
        let Some(d) = a.d else {
            bail!("--d is required without --model");
        };
        let prep = prepare(&raw, pc.normalization, &pc.cluster_kernel)?;
        let l = pc.clusters;
        let c = match a.likelihoods {
            LikelihoodSource::Uniform => LikelihoodMatrix::uniform(raw.n(), l),
            LikelihoodSource::Hard => {
                let asg = kernel_kmeans(&prep.k0, l, pc.restarts, pc.kmeans_max_iter, pc.seed)?;
                LikelihoodMatrix::hard(&asg.labels, l)
            }
            LikelihoodSource::Soft => fit_likelihood(
                &prep.k0,
                l,
                pc.localization,
                pc.restarts,
                pc.kmeans_max_iter,
                pc.seed,
                &pc.cluster_kernel,
            )?
            .train_likelihoods(Some(&prep.k0))?,
        };
        (diagonals(&prep.bundle), c, pc.train.p, d)
    };

    let b =
        a.b.unwrap_or_else(|| diag.iter().copied().fold(0.0, f64::max));
    let inputs = BoundInputs {
        kernel_diagonals: diag,
        likelihoods: c,
        d,
        p,
        b,
        loss_bound: a.loss_bound,
        lipschitz: a.lipschitz,
        delta: a.delta,
    };
    let rep: BoundReport = generalization_bound(&inputs, a.empirical_risk)?;
    let row = BoundRow {
        n: inputs.n(),
        kernels: inputs.kernels(),
        clusters: inputs.likelihoods.clusters(),
        p,
        d,
        b,
        sum_c_squared: likelihood_mass(&inputs.likelihoods),
        rademacher_exact: rep.rademacher_exact,
        exact_t: rep.exact_t,
        rademacher_simplified: rep.rademacher_simplified,
        optimal_t: rep.optimal_t,
        generalization: rep.generalization,
        regime: match rep.regime {
            Regime::LogM => "log-M",
            Regime::PolynomialM => "polynomial-M",
        },
    };
    println!("n: {}", row.n);
    println!("kernels: {}", row.kernels);
    println!("clusters: {}", row.clusters);
    println!("p: {p}");
    println!("D: {d}");
    println!("B: {b}");
    println!("sum_c_squared: {}", row.sum_c_squared);
    println!(
        "rademacher_exact: {} (t = {})",
        row.rademacher_exact, row.exact_t
    );
    println!("rademacher_simplified: {}", row.rademacher_simplified);
    println!("optimal_t: {}", row.optimal_t);
    println!("generalization: {}", row.generalization);
    println!("regime: {}", row.regime);
    println!(
        "lipschitz: {} (recorded; not a term of the bound)",
        a.lipschitz
    );
    if let Some(path) = &a.csv {
        write_atomic(path, &csv_bytes([row])?)?;
    }
    Ok(Outcome::Success)
}
