use anyhow::{bail, Result};
use clmkl::pipeline::fit;
use clmkl::train::TrainReport;
use serde::Serialize;

use super::Outcome;
use crate::args::TrainArgs;
use crate::config::resolve;
use crate::files::{csv_bytes, load_bundle, read_labels, write_atomic};

/// One line of the training report. `model` indexes the binary problem
/// (always 0 unless one-vs-all); missing values are left empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub model: usize,
    pub iteration: usize,
    pub primal: Option<f64>,
    pub dual: Option<f64>,
    pub gap: Option<f64>,
    pub inner_iterations: Option<usize>,
}

pub fn report_rows(reports: &[TrainReport]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        let len = r
            .primal_history
            .len()
            .max(r.dual_history.len())
            .max(r.gap_history.len());
        for t in 0..len {
            rows.push(ReportRow {
                model: k,
                iteration: t + 1,
                primal: r.primal_history.get(t).copied(),
                dual: r.dual_history.get(t).copied(),
                gap: r.gap_history.get(t).copied(),
                inner_iterations: r.inner_iterations.get(t).copied(),
            });
        }
    }
    rows
}

pub fn train(a: &TrainArgs) -> Result<Outcome> {
    let r = resolve(&a.model)?;
    let Some(out) = a.out.clone().or(r.config.model.clone()) else {
        bail!("no model destination (use --out PATH or `model` in the config)");
    };
    let report_path = a.report.clone().or(r.config.report.clone());
    let bundle = load_bundle(&r.kernels)?;
    let labels = read_labels(r.labels()?)?;
    if labels.len() != bundle.n() {
        bail!("{} labels for {} training points", labels.len(), bundle.n());
    }
    let (model, reports) = fit(&bundle, &labels, &r.pipeline)?;
    write_atomic(&out, model.to_json()?.as_bytes())?;
    if let Some(p) = report_path {
        write_atomic(&p, &csv_bytes(report_rows(&reports))?)?;
    }

    for (k, rep) in reports.iter().enumerate() {
        let gap = rep
            .final_gap()
            .map_or("n/a".to_string(), |g| format!("{g:.3e}"));
        println!(
            "model {k}: {} outer iteration(s), final relative gap {gap}, converged {}",
            rep.outer_iterations, rep.converged
        );
        for (it, j) in &rep.beta_resets {
            log::warn!("model {k}: weights of cluster {j} reset to uniform at iteration {it}");
        }
    }
    println!("model written to {}", out.display());
    if model.converged() {
        Ok(Outcome::Success)
    } else {
        eprintln!("warning: training did not reach the gap tolerance; the model is flagged as not converged");
        Ok(Outcome::NotConverged)
    }
}
