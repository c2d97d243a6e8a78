use anyhow::{bail, Context, Result};
use clmkl::eval::{accuracy, auc};

use super::predict::PredictionRow;
use super::Outcome;
use crate::args::EvaluateArgs;
use crate::files::read_labels;

pub fn evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let mut reader = csv::Reader::from_path(&a.predictions)
        .with_context(|| format!("reading predictions {}", a.predictions.display()))?;
    let rows = reader
        .deserialize::<PredictionRow>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("parsing predictions {}", a.predictions.display()))?;
    let labels = read_labels(&a.labels)?;
    if rows.len() != labels.len() {
        bail!("{} predictions for {} labels", rows.len(), labels.len());
    }
    let predicted: Vec<f64> = rows.iter().map(|r| r.label).collect();
    println!("accuracy: {}", accuracy(&predicted, &labels)?);
    if a.auc {
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            bail!("AUC needs labels in {{-1, +1}}");
        }
        let scores: Vec<f64> = rows.iter().map(|r| r.decision).collect();
        println!("auc: {}", auc(&scores, &labels)?);
    }
    Ok(Outcome::Success)
}
