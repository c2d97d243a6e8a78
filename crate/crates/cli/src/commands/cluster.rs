use anyhow::Result;
use clmkl::cluster::{
    average_evenness, calibrate_tau, kernel_kmeans, LikelihoodModel, DEFAULT_EVENNESS_TOL,
};
use clmkl::pipeline::{prepare, Localization};

use super::Outcome;
use crate::args::ClusterArgs;
use crate::config::resolve;
use crate::files::{csv_bytes_with_header, load_bundle, write_atomic};

pub fn cluster(a: &ClusterArgs) -> Result<Outcome> {
    let r = resolve(&a.model)?;
    let pc = &r.pipeline;
    let bundle = load_bundle(&r.kernels)?;
    let prep = prepare(&bundle, pc.normalization, &pc.cluster_kernel)?;
    let l = pc.clusters;
    let assignment = kernel_kmeans(&prep.k0, l, pc.restarts, pc.kmeans_max_iter, pc.seed)?;
    let model = LikelihoodModel::new(&prep.k0, &assignment, 0.0, pc.cluster_kernel.clone())?;
    let dist = model.train_distances(&prep.k0)?;
    let tau = match pc.localization {
        Localization::Tau(t) => t,
        Localization::Evenness(e) => calibrate_tau(&dist, e, DEFAULT_EVENNESS_TOL)?,
    };
    let c = model.with_tau(tau)?.train_likelihoods(Some(&prep.k0))?;

    let mut header = vec!["index".to_string(), "cluster".to_string()];
    header.extend((0..l).map(|j| format!("c_{j}")));
    let rows: Vec<Vec<String>> = (0..c.n())
        .map(|i| {
            let mut row = vec![i.to_string(), assignment.labels[i].to_string()];
            row.extend((0..l).map(|j| c.get(i, j).to_string()));
            row
        })
        .collect();
    write_atomic(&a.out, &csv_bytes_with_header(&header, &rows)?)?;

    println!("clusters: {l}");
    println!("clustering_error: {}", assignment.clustering_error);
    println!("tau: {tau}");
    println!("average_evenness: {}", average_evenness(&dist, tau));
    Ok(Outcome::Success)
}
