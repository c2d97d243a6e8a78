use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auc};
use crate::error::{Error, Result};
use crate::kernel::{CrossKernelMatrix, KernelBundle, Normalization};
use crate::pipeline::{
    fit, is_multiclass, predict, prepare, Localization, PipelineConfig, UNIFORM_CLUSTER_KERNEL,
};
use crate::seed::{stream_rng, Purpose};

/// Column order of [`CvRow`] when written as CSV.
pub const CV_CSV_HEADER: [&str; 10] = [
    "grid_index",
    "c",
    "p",
    "evenness",
    "clusters",
    "fold",
    "n_train",
    "n_test",
    "accuracy",
    "auc",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cs: Vec<f64>,
    pub ps: Vec<f64>,
    pub evenness: Vec<f64>,
    pub clusters: Vec<usize>,
}

/// `count` equally spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `C ∈ 10^{−1, −0.5, …, 2}`
pub fn default_cs() -> Vec<f64> {
    (0..7).map(|k| 10f64.powf(-1.0 + 0.5 * k as f64)).collect()
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            cs: default_cs(),
            ps: vec![2.0],
            evenness: linspace(0.4, 0.7, 8),
            clusters: vec![3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub p: f64,
    pub evenness: f64,
    pub clusters: usize,
}

impl Grid {
    /// Cartesian product, `C` outermost and `l` innermost.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &c in &self.cs {
            for &p in &self.ps {
                for &evenness in &self.evenness {
                    for &clusters in &self.clusters {
                        out.push(GridPoint {
                            c,
                            p,
                            evenness,
                            clusters,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.cs.is_empty()
            || self.ps.is_empty()
            || self.evenness.is_empty()
            || self.clusters.is_empty()
        {
            return Err(Error::InvalidParameter(
                "every grid axis needs at least one value".into(),
            ));
        }
        for &l in &self.clusters {
            if l == 0 {
                return Err(Error::InvalidParameter("cluster count must be >= 1".into()));
            }
            for &e in &self.evenness {
                // with one cluster the target is never used
                let ok = if l == 1 {
                    e > 0.0 && e <= 1.0
                } else {
                    e > 1.0 / l as f64 && e <= 1.0
                };
                if !ok {
                    return Err(Error::InvalidParameter(format!(
                        "evenness {e} outside (1/{l}, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMetric {
    Accuracy,
    Auc,
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(SelectionMetric::Accuracy),
            "auc" => Ok(SelectionMetric::Auc),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric '{other}' (expected accuracy or auc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    /// Seeds fold assignment; clustering inside each split uses `base.seed`.
    pub seed: u64,
    pub metric: SelectionMetric,
    /// Fit normalization once on all points instead of per training split.
    pub global_normalization: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            metric: SelectionMetric::Accuracy,
            global_normalization: false,
        }
    }
}

/// One (grid point, fold) evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub grid_index: usize,
    pub c: f64,
    pub p: f64,
    pub evenness: f64,
    pub clusters: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    /// NaN for multiclass problems.
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub accuracy: f64,
    /// `None` for multiclass problems.
    pub auc: Option<f64>,
    pub per_fold_accuracy: Vec<f64>,
    pub per_fold_auc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_index: usize,
    pub best: GridPoint,
    pub report: MetricReport,
    /// Mean selection metric per grid point.
    pub scores: Vec<f64>,
    pub rows: Vec<CvRow>,
}

/// Stratified fold assignment: each class is shuffled on its own
/// `FoldAssignment` stream and dealt round-robin, continuing where the
/// previous class stopped. Returns the sorted test indices of every fold.
pub fn stratified_folds(labels: &[f64], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let mut classes: Vec<f64> = labels.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for (ci, &class) in classes.iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::InvalidLabels(format!(
                "class {class} has {} points, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut stream_rng(seed, Purpose::FoldAssignment, ci as u32));
        for i in members {
            out[next].push(i);
            next = (next + 1) % folds;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Complement of `test` in `0..n`.
pub fn train_indices(n: usize, test: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in test {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Metrics of one split: predicted labels and (binary only) decision values.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub labels: Vec<f64>,
    pub decisions: Vec<f64>,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

/// Fits on `train` only (clustering, τ, normalization all from the training
/// block) and scores on `test`.
pub fn fit_fold(
    raw: &KernelBundle,
    targets: &[f64],
    train: &[usize],
    test: &[usize],
    cfg: &PipelineConfig,
) -> Result<FoldOutcome> {
    let sub = raw.select(train);
    let y_train: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
    let (model, _) = fit(&sub, &y_train, cfg)?;
    let crosses: Vec<CrossKernelMatrix> = raw
        .kernels()
        .iter()
        .map(|k| k.cross_block(test, train))
        .collect();
    let pred = predict(&model, &crosses)?;
    let y_test: Vec<f64> = test.iter().map(|&i| targets[i]).collect();
    let acc = accuracy(&pred.labels, &y_test)?;
    let (decisions, area) = if pred.decisions.len() == 1 {
        let f = pred.decisions[0].clone();
        let a = auc(&f, &y_test).ok();
        (f, a)
    } else {
        (vec![], None)
    };
    Ok(FoldOutcome {
        labels: pred.labels,
        decisions,
        accuracy: acc,
        auc: area,
    })
}

fn config_for(base: &PipelineConfig, point: &GridPoint) -> PipelineConfig {
    let mut cfg = base.clone();
    cfg.train.c = point.c;
    cfg.train.p = point.p;
    cfg.clusters = point.clusters;
    cfg.localization = Localization::Evenness(point.evenness);
    cfg
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Index of the highest score; ties go to smaller `C`, then smaller `p`,
/// then the earlier point.
pub fn select_best(points: &[GridPoint], scores: &[f64]) -> usize {
    let mut best = 0;
    for g in 1..points.len() {
        let (a, b) = (&points[g], &points[best]);
        let better = scores[g] > scores[best]
            || scores[g] == scores[best] && (a.c < b.c || a.c == b.c && a.p < b.p);
        if better {
            best = g;
        }
    }
    best
}

/// k-fold grid search. Grid points and folds are evaluated in parallel; the
/// best mean metric wins, ties going to smaller `C`, then smaller `p`, then
/// the earlier grid point.
pub fn cross_validate(
    raw: &KernelBundle,
    labels: &[f64],
    grid: &Grid,
    base: &PipelineConfig,
    opts: &CvOptions,
) -> Result<CvResult> {
    if labels.len() != raw.n() {
        return Err(Error::Dimension(format!(
            "{} labels for n = {}",
            labels.len(),
            raw.n()
        )));
    }
    if !base.train.loss.is_classification() {
        return Err(Error::InvalidParameter(
            "cross-validation supports classification only".into(),
        ));
    }
    grid.validate()?;
    let multiclass = is_multiclass(labels);
    if multiclass && opts.metric == SelectionMetric::Auc {
        return Err(Error::InvalidParameter(
            "AUC selection needs binary labels".into(),
        ));
    }
    let folds = stratified_folds(labels, opts.folds, opts.seed)?;

    let (data, base) = if opts.global_normalization {
        let prep = prepare(raw, base.normalization, UNIFORM_CLUSTER_KERNEL)?;
        let mut cfg = base.clone();
        cfg.normalization = Normalization::None;
        (prep.bundle, cfg)
    } else {
        (raw.clone(), base.clone())
    };

    let points = grid.points();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|g| (0..folds.len()).map(move |f| (g, f)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(g, f)| {
            let test = &folds[f];
            let train = train_indices(labels.len(), test);
            let out = fit_fold(&data, labels, &train, test, &config_for(&base, &points[g]))?;
            let pt = points[g];
            Ok(CvRow {
                grid_index: g,
                c: pt.c,
                p: pt.p,
                evenness: pt.evenness,
                clusters: pt.clusters,
                fold: f,
                n_train: train.len(),
                n_test: test.len(),
                accuracy: out.accuracy,
                auc: out.auc.unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<CvRow>>>()?;

    let k = folds.len();
    let scores: Vec<f64> = (0..points.len())
        .map(|g| {
            let fold_rows = &rows[g * k..(g + 1) * k];
            let v: Vec<f64> = fold_rows
                .iter()
                .map(|r| match opts.metric {
                    SelectionMetric::Accuracy => r.accuracy,
                    SelectionMetric::Auc => r.auc,
                })
                .collect();
            mean(&v)
        })
        .collect();

    let best = select_best(&points, &scores);
    let best_rows = &rows[best * k..(best + 1) * k];
    let per_fold_accuracy: Vec<f64> = best_rows.iter().map(|r| r.accuracy).collect();
    let per_fold_auc: Vec<f64> = best_rows.iter().map(|r| r.auc).collect();
    let report = MetricReport {
        accuracy: mean(&per_fold_accuracy),
        auc: (!multiclass).then(|| mean(&per_fold_auc)),
        per_fold_accuracy,
        per_fold_auc,
    };
    Ok(CvResult {
        best_index: best,
        best: points[best],
        report,
        scores,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified_and_partition() {
        let labels: Vec<f64> = (0..23)
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let folds = stratified_folds(&labels, 4, 9).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in &folds {
            let pos = f.iter().filter(|&&i| labels[i] > 0.0).count();
            assert!((1..=2).contains(&pos));
            assert!((5..=6).contains(&f.len()));
        }
        assert_eq!(folds, stratified_folds(&labels, 4, 9).unwrap());
        assert_ne!(folds, stratified_folds(&labels, 4, 10).unwrap());
    }

    #[test]
    fn ties_prefer_small_c_then_small_p() {
        let pt = |c, p| GridPoint {
            c,
            p,
            evenness: 0.6,
            clusters: 2,
        };
        let pts = [
            pt(10.0, 2.0),
            pt(1.0, 4.0),
            pt(1.0, 2.0),
            pt(1.0, 2.0),
            pt(0.1, 1.0),
        ];
        assert_eq!(select_best(&pts, &[0.9, 0.9, 0.9, 0.9, 0.8]), 2);
        assert_eq!(select_best(&pts, &[0.9, 0.8, 0.8, 0.8, 0.8]), 0);
        assert_eq!(select_best(&pts, &[0.7; 5]), 4);
    }

    #[test]
    fn too_few_class_members() {
        let labels = [1.0, 1.0, -1.0, -1.0, -1.0];
        assert!(matches!(
            stratified_folds(&labels, 3, 0),
            Err(Error::InvalidLabels(_))
        ));
        assert!(stratified_folds(&labels, 1, 0).is_err());
    }

    #[test]
    fn grid_order_and_validation() {
        let g = Grid {
            cs: vec![1.0, 10.0],
            ps: vec![2.0],
            evenness: vec![0.6],
            clusters: vec![2, 3],
        };
        let pts = g.points();
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[1].c, pts[1].clusters), (1.0, 3));
        assert!(g.validate().is_ok());
        let bad = Grid {
            evenness: vec![0.3],
            ..g
        };
        assert!(bad.validate().is_err());
        assert_eq!(default_cs().len(), 7);
        assert!((default_cs()[6] - 100.0).abs() < 1e-12);
        assert_eq!(linspace(0.4, 0.7, 8).len(), 8);
    }
}
