use anyhow::{anyhow, bail, Result};
use clmkl::eval::{cross_validate, default_cs, linspace, CvOptions, Grid};
use clmkl::pipeline::Localization;

use super::Outcome;
use crate::args::CvArgs;
use crate::config::resolve;
use crate::files::{csv_bytes, load_bundle, read_labels, write_atomic};

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("expected LO:HI:COUNT, got '{s}'");
    }
    let bad = || anyhow!("expected LO:HI:COUNT, got '{s}'");
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    Ok(linspace(lo, hi, count))
}

pub fn cv(a: &CvArgs) -> Result<Outcome> {
    let r = resolve(&a.model)?;
    let bundle = load_bundle(&r.kernels)?;
    let labels = read_labels(r.labels()?)?;
    if labels.len() != bundle.n() {
        bail!("{} labels for {} training points", labels.len(), bundle.n());
    }
    let explicit_evenness = a.model.evenness.or(r.config.evenness);
    let evenness = if !a.evenness_grid.is_empty() {
        a.evenness_grid.clone()
    } else if let Some(range) = &a.evenness_range {
        parse_range(range)?
    } else if let (Some(e), Localization::Evenness(_)) =
        (explicit_evenness, r.pipeline.localization)
    {
        vec![e]
    } else {
        Grid::default().evenness
    };
    let grid = Grid {
        cs: if a.cs.is_empty() {
            default_cs()
        } else {
            a.cs.clone()
        },
        ps: if a.ps.is_empty() {
            vec![r.pipeline.train.p]
        } else {
            a.ps.clone()
        },
        evenness,
        clusters: if a.clusters_grid.is_empty() {
            vec![r.pipeline.clusters]
        } else {
            a.clusters_grid.clone()
        },
    };
    let opts = CvOptions {
        folds: a.folds,
        seed: r.pipeline.seed,
        metric: a.metric,
        global_normalization: a.global_normalization,
    };
    let res = cross_validate(&bundle, &labels, &grid, &r.pipeline, &opts)?;
    if let Some(out) = &a.out {
        write_atomic(out, &csv_bytes(&res.rows)?)?;
    }
    let b = res.best;
    println!(
        "best: grid_index={} c={} p={} evenness={} clusters={}",
        res.best_index, b.c, b.p, b.evenness, b.clusters
    );
    println!("accuracy: {}", res.report.accuracy);
    if let Some(auc) = res.report.auc {
        println!("auc: {auc}");
    }
    Ok(Outcome::Success)
}
