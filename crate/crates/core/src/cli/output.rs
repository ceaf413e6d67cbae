//! CSV and manifest writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sym_matrix::SymMatrix;

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Dense `p x p` CSV with a header row of names.
pub fn write_matrix_csv<W: Write>(m: &SymMatrix, names: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for i in 0..m.dim() {
        w.write_record((0..m.dim()).map(|j| fmt_f64(m.get(i, j))))?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let names = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?);
    }
    Ok((names, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

impl InputRecord {
    pub fn from_file(role: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        Ok(Self {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// Everything needed to rerun a command. Thread count and timings are left
/// out so that outputs are identical across machines.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub kernel: String,
    pub truncation_eps: f64,
    /// `"auto"` or the fixed value.
    pub bandwidth_rule: String,
    pub bandwidths: Vec<f64>,
    pub draws: usize,
    pub studentized: bool,
    pub alpha: f64,
    pub lambda_scale: f64,
    pub lambdas: Vec<f64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub settings: serde_json::Value,
}

/// Output directory plus the list of files written to it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::Io(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through `f` on a buffer, then to disk.
    pub fn write(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.root.join(name);
        fs::write(&path, buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.outputs = std::mem::take(&mut self.written);
        self.write("manifest.json", |buf| {
            serde_json::to_writer_pretty(&mut *buf, &manifest)
                .map_err(|e| Error::Io(format!("manifest: {e}")))?;
            buf.push(b'\n');
            Ok(())
        })
    }
}
