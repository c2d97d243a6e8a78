//! File formats shared by the subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clmkl::kernel::{
    load_gram, read_csv_matrix, read_kmx, CrossKernelMatrix, GramMatrix, KernelBundle,
};
use ndarray::Array2;
use serde::Serialize;

/// A `NAME=VALUE` command-line pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Named<T> {
    pub name: String,
    pub value: T,
}

impl<T: FromStr> FromStr for Named<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (name, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=VALUE, got '{s}'"))?;
        if name.is_empty() {
            return Err(format!("empty name in '{s}'"));
        }
        let value = value.parse::<T>().map_err(|e| format!("{e}"))?;
        Ok(Named {
            name: name.to_string(),
            value,
        })
    }
}

/// Fails on a repeated name.
pub fn check_unique<T>(items: &[Named<T>], what: &str) -> Result<()> {
    for (i, a) in items.iter().enumerate() {
        if items[..i].iter().any(|b| b.name == a.name) {
            bail!("duplicate {what} name '{}'", a.name);
        }
    }
    Ok(())
}

/// KMX1 or headerless CSV (by `.csv` extension).
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let m = if is_csv {
        read_csv_matrix(path)?
    } else {
        read_kmx(path)?
    };
    Ok(m)
}

pub fn load_bundle(kernels: &[Named<PathBuf>]) -> Result<KernelBundle> {
    if kernels.is_empty() {
        bail!("no kernels given (use --kernel NAME=PATH)");
    }
    check_unique(kernels, "kernel")?;
    let grams = kernels
        .iter()
        .map(|k| load_gram(&k.value).with_context(|| format!("loading kernel '{}'", k.name)))
        .collect::<Result<Vec<GramMatrix>>>()?;
    Ok(KernelBundle::new(
        grams,
        kernels.iter().map(|k| k.name.clone()).collect(),
    )?)
}

/// Cross matrices in `names` order, each with its optional test diagonal.
pub fn load_crosses(
    names: &[String],
    crosses: &[Named<PathBuf>],
    diags: &[Named<PathBuf>],
) -> Result<Vec<CrossKernelMatrix>> {
    check_unique(crosses, "cross kernel")?;
    check_unique(diags, "diagonal")?;
    for c in crosses.iter().chain(diags) {
        if !names.contains(&c.name) {
            bail!(
                "kernel '{}' is not part of the model (model kernels: {})",
                c.name,
                names.join(", ")
            );
        }
    }
    names
        .iter()
        .map(|name| {
            let path = &crosses
                .iter()
                .find(|c| &c.name == name)
                .ok_or_else(|| {
                    anyhow!("missing cross matrix for kernel '{name}' (use --cross {name}=PATH)")
                })?
                .value;
            let values = read_matrix(path)
                .with_context(|| format!("loading cross matrix for kernel '{name}'"))?;
            let diag = diags
                .iter()
                .find(|d| &d.name == name)
                .map(|d| read_matrix(&d.value).map(|m| m.iter().copied().collect::<Vec<f64>>()))
                .transpose()
                .with_context(|| format!("loading test diagonal for kernel '{name}'"))?;
            CrossKernelMatrix::new(values, diag)
                .with_context(|| format!("cross matrix for kernel '{name}'"))
        })
        .collect()
}

/// One numeric target per line; blank lines and `#` comments are skipped.
pub fn read_labels(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| anyhow!("{}:{}: '{line}' is not a number", path.display(), i + 1))?;
        if !v.is_finite() {
            bail!("{}:{}: non-finite label", path.display(), i + 1);
        }
        out.push(v);
    }
    Ok(out)
}

/// Writes through a temporary file in the destination directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn csv_bytes<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

/// CSV with an explicit header (for rows whose width is only known at run time).
pub fn csv_bytes_with_header(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_named_pairs() {
        let n: Named<PathBuf> = "rbf=a/b=c.kmx".parse().unwrap();
        assert_eq!(n.name, "rbf");
        assert_eq!(n.value, PathBuf::from("a/b=c.kmx"));
        assert!("noequals".parse::<Named<PathBuf>>().is_err());
        assert!("=x".parse::<Named<PathBuf>>().is_err());
    }

    #[test]
    fn labels_skip_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.txt");
        std::fs::write(&p, "1\n# note\n\n-1  \n3 # class three\n").unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![1.0, -1.0, 3.0]);
        std::fs::write(&p, "1\nabc\n").unwrap();
        assert!(read_labels(&p).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
