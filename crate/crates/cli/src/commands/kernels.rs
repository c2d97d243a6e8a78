use std::path::Path;

use anyhow::{bail, Context, Result};
use clmkl::kernel::{compute_cross, compute_gram, encode_kmx, read_csv_matrix, KernelSpec};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Outcome;
use crate::args::ComputeKernelsArgs;
use crate::files::{check_unique, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    /// Spec with data-dependent parameters filled in.
    pub spec: KernelSpec,
    pub train: String,
    pub cross: Option<String>,
    pub diag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_train: usize,
    pub n_test: Option<usize>,
    pub kernels: Vec<ManifestEntry>,
}

fn check_name(name: &str) -> Result<()> {
    let ok = name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !name.starts_with('.');
    if !ok {
        bail!("kernel name '{name}' must use only letters, digits, '-', '_' and '.'");
    }
    Ok(())
}

pub fn compute_kernels(a: &ComputeKernelsArgs) -> Result<Outcome> {
    if a.specs.is_empty() {
        bail!("no kernel specs given (use --spec NAME=SPEC)");
    }
    check_unique(&a.specs, "kernel")?;
    for s in &a.specs {
        check_name(&s.name)?;
    }
    let x = read_csv_matrix(&a.features)?;
    let t = a
        .test_features
        .as_deref()
        .map(read_csv_matrix)
        .transpose()?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let out = |file: &str| a.out_dir.join(file);

    let mut entries = Vec::new();
    for s in &a.specs {
        let spec = s.value.resolve(&x)?;
        let gram = compute_gram(&x, &spec)?;
        let train = format!("{}.kmx", s.name);
        write_atomic(&out(&train), &encode_kmx(gram.values()))?;
        let (mut cross_file, mut diag_file) = (None, None);
        if let Some(t) = &t {
            let cross = compute_cross(&x, t, &spec)?;
            let name = format!("{}.cross.kmx", s.name);
            write_atomic(&out(&name), &encode_kmx(cross.values()))?;
            cross_file = Some(name);
            if let Some(d) = cross.diag_test() {
                let name = format!("{}.diag.kmx", s.name);
                let col = Array2::from_shape_vec((d.len(), 1), d.to_vec())?;
                write_atomic(&out(&name), &encode_kmx(&col))?;
                diag_file = Some(name);
            }
        }
        log::info!("kernel '{}' ({spec:?}) written", s.name);
        entries.push(ManifestEntry {
            name: s.name.clone(),
            spec,
            train,
            cross: cross_file,
            diag: diag_file,
        });
    }
    let manifest = Manifest {
        n_train: x.nrows(),
        n_test: t.as_ref().map(|t| t.nrows()),
        kernels: entries,
    };
    write_atomic(
        &out("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    println!(
        "wrote {} kernel(s) to {}",
        manifest.kernels.len(),
        display(&a.out_dir)
    );
    Ok(Outcome::Success)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
