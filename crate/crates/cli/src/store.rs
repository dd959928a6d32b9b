//! On-disk layout of a run and the artifact manifest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use metcal_core::data::CovariateId;
use metcal_core::regression::FittedModel;
use metcal_core::selection::{Family, ModelSpec, SelectionReport};
use metcal_core::{Error, Result, ResultExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

/// What `fit` produced, so later stages know what to expect on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub families: Vec<Family>,
    pub max_covariates: usize,
    pub responses: Vec<ResponseIndex>,
    pub skipped: Vec<SkippedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseIndex {
    pub response: String,
    pub pool: Vec<CovariateId>,
    pub horizons: Vec<u32>,
    /// Training rows per horizon.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEntry {
    pub spec: String,
    pub horizon: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: Vec<ManifestEntry>,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn selection_dir(&self) -> PathBuf {
        self.root.join("selection")
    }

    pub fn diagnostics_dir(&self, period: &str) -> PathBuf {
        self.root.join("diagnostics").join(period)
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.root.join("predictions")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn index_path(&self) -> PathBuf {
        self.models_dir().join("index.json")
    }

    /// `models/<family>_<response>_h<τ>_<covariates>.json`.
    pub fn model_path(&self, spec: &ModelSpec, horizon: u32) -> PathBuf {
        self.models_dir().join(format!(
            "{}_{}_h{:03}_{}.json",
            spec.family.code(),
            spec.response,
            horizon,
            spec.covariate_label()
        ))
    }

    pub fn selection_path(&self, family: Family, response: &str) -> PathBuf {
        self.selection_dir()
            .join(format!("{}_{}.json", family.code(), response))
    }

    pub fn read_index(&self) -> Result<ModelIndex> {
        read_json(&self.index_path()).with_context(|| "reading the model index (run `fit` first)")
    }

    pub fn read_model(&self, spec: &ModelSpec, horizon: u32) -> Result<FittedModel> {
        let path = self.model_path(spec, horizon);
        if !path.exists() {
            return Err(Error::Missing(format!(
                "model artifact for {spec} at horizon {horizon} h ({})",
                path.display()
            )));
        }
        read_json(&path)
    }

    pub fn read_selection(&self, family: Family, response: &str) -> Result<SelectionReport> {
        let path = self.selection_path(family, response);
        if !path.exists() {
            return Err(Error::Missing(format!(
                "selection for {family} {response} ({}); run `select` first",
                path.display()
            )));
        }
        read_json(&path)
    }

    /// Recompute `manifest.json` over every file under the root.
    pub fn write_manifest(&self) -> Result<Manifest> {
        let mut files = Vec::new();
        collect_files(&self.root, &mut files)?;
        files.sort();
        let mut artifacts = Vec::with_capacity(files.len());
        for f in files {
            let rel = f
                .strip_prefix(&self.root)
                .expect("collected under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST {
                continue;
            }
            let (bytes, sha256) = hash_file(&f)?;
            artifacts.push(ManifestEntry {
                path: rel,
                bytes,
                sha256,
            });
        }
        let m = Manifest { artifacts };
        write_json(&self.root.join(MANIFEST), &m)?;
        Ok(m)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub fn hash_file(path: &Path) -> Result<(u64, String)> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    let hex = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok((total, hex))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

/// Write through a closure into a buffered file.
pub fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
