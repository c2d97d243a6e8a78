//! TOML run configuration. Every key is optional and command-line flags win.
//!
//! ```toml
//! labels = "y.txt"
//! algorithm = "clmkl"
//! c = 1.0
//! p = 2.0
//! clusters = 3
//! evenness = 0.6
//! seed = 7
//! model = "model.json"
//!
//! [kernels]
//! rbf = "rbf.kmx"
//! lin = "lin.kmx"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clmkl::kernel::Normalization;
use clmkl::pipeline::{Localization, PipelineConfig};
use clmkl::train::{Algorithm, LossKind};
use serde::Deserialize;

use crate::args::{LossArg, ModelArgs};
use crate::files::Named;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Kernel name to Gram matrix path. Kept in name order.
    #[serde(default)]
    pub kernels: BTreeMap<String, PathBuf>,
    pub labels: Option<PathBuf>,
    pub algorithm: Option<String>,
    pub c: Option<f64>,
    pub p: Option<f64>,
    pub clusters: Option<usize>,
    pub evenness: Option<f64>,
    pub tau: Option<f64>,
    pub loss: Option<LossArg>,
    pub epsilon: Option<f64>,
    pub gap_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub inner_tol: Option<f64>,
    pub restarts: Option<usize>,
    pub kmeans_max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub normalization: Option<String>,
    pub cluster_kernel: Option<String>,
    pub lmkl_steps: Option<usize>,
    /// Model JSON destination for `train`.
    pub model: Option<PathBuf>,
    /// Report CSV destination for `train`.
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.kernels.values_mut().for_each(fix);
        cfg.labels.as_mut().map(fix);
        cfg.model.as_mut().map(fix);
        cfg.report.as_mut().map(fix);
        Ok(cfg)
    }
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kernels: Vec<Named<PathBuf>>,
    pub labels: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub config: RunConfig,
}

impl Resolved {
    pub fn labels(&self) -> Result<&Path> {
        match &self.labels {
            Some(p) => Ok(p),
            None => bail!("no labels given (use --labels PATH or `labels` in the config)"),
        }
    }
}

pub fn resolve(args: &ModelArgs) -> Result<Resolved> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let kernels = if args.kernels.is_empty() {
        cfg.kernels
            .iter()
            .map(|(name, path)| Named {
                name: name.clone(),
                value: path.clone(),
            })
            .collect()
    } else {
        args.kernels.clone()
    };

    let mut pc = PipelineConfig::default();
    if let Some(a) = args.algorithm {
        pc.algorithm = a;
    } else if let Some(a) = &cfg.algorithm {
        pc.algorithm = a.parse::<Algorithm>()?;
    }
    if let Some(n) = args.normalization {
        pc.normalization = n;
    } else if let Some(n) = &cfg.normalization {
        pc.normalization = n.parse::<Normalization>()?;
    }
    pc.train.c = args.c.or(cfg.c).unwrap_or(pc.train.c);
    pc.train.p = args.p.or(cfg.p).unwrap_or(pc.train.p);
    pc.clusters = args.clusters.or(cfg.clusters).unwrap_or(pc.clusters);
    pc.localization = match (args.evenness, args.tau, cfg.evenness, cfg.tau) {
        (Some(e), _, _, _) => Localization::Evenness(e),
        (None, Some(t), _, _) => Localization::Tau(t),
        (None, None, Some(_), Some(_)) => bail!("config sets both evenness and tau"),
        (None, None, Some(e), None) => Localization::Evenness(e),
        (None, None, None, Some(t)) => Localization::Tau(t),
        (None, None, None, None) => pc.localization,
    };
    let eps = args.epsilon.or(cfg.epsilon);
    pc.train.loss = match args.loss.or(cfg.loss) {
        None | Some(LossArg::Hinge) => {
            if eps.is_some() {
                bail!("--epsilon requires --loss eps-insensitive");
            }
            LossKind::Hinge
        }
        Some(LossArg::EpsInsensitive) => LossKind::EpsInsensitive {
            eps: eps.unwrap_or(0.1),
        },
    };
    pc.train.gap_tol = args.gap_tol.or(cfg.gap_tol).unwrap_or(pc.train.gap_tol);
    pc.train.max_outer = args
        .max_outer
        .or(cfg.max_outer)
        .unwrap_or(pc.train.max_outer);
    pc.train.inner_tol = args
        .inner_tol
        .or(cfg.inner_tol)
        .unwrap_or(pc.train.inner_tol);
    pc.restarts = args.restarts.or(cfg.restarts).unwrap_or(pc.restarts);
    pc.kmeans_max_iter = args
        .kmeans_max_iter
        .or(cfg.kmeans_max_iter)
        .unwrap_or(pc.kmeans_max_iter);
    pc.seed = args.seed.or(cfg.seed).unwrap_or(pc.seed);
    if let Some(k) = args.cluster_kernel.clone().or(cfg.cluster_kernel.clone()) {
        pc.cluster_kernel = k;
    }
    pc.lmkl_steps = args.lmkl_steps.or(cfg.lmkl_steps).unwrap_or(pc.lmkl_steps);
    pc.train.validate()?;

    Ok(Resolved {
        kernels,
        labels: args.labels.clone().or(cfg.labels.clone()),
        pipeline: pc,
        config: cfg,
    })
}
