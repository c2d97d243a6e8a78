use anyhow::{Context, Result};
use clmkl::pipeline::{self, TrainedModel};
use serde::{Deserialize, Serialize};

use super::Outcome;
use crate::args::PredictArgs;
use crate::files::{csv_bytes, load_crosses, write_atomic};

/// For one-vs-all models `decision` is the winning class's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub index: usize,
    pub decision: f64,
    pub label: f64,
}

pub fn load_model(path: &std::path::Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model {}", path.display()))?;
    TrainedModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

pub fn predict(a: &PredictArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let crosses = load_crosses(model.kernel_names(), &a.crosses, &a.diags)?;
    let pred = pipeline::predict(&model, &crosses)?;
    let rows = pred
        .labels
        .iter()
        .enumerate()
        .map(|(t, &label)| PredictionRow {
            index: t,
            decision: pred
                .decisions
                .iter()
                .map(|d| d[t])
                .fold(f64::NEG_INFINITY, f64::max),
            label,
        });
    write_atomic(&a.out, &csv_bytes(rows)?)?;
    println!(
        "{} prediction(s) written to {}",
        pred.labels.len(),
        a.out.display()
    );
    Ok(Outcome::Success)
}
