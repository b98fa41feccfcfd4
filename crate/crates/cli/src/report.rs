use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use arofac2::pipeline::Diagnostics;
use arofac2::synthgen::Matching;
use arofac2::{AlsConfig, Arofac2Config, Decomposition, Factor, GroundTruth, SynthSpec};
use serde::{Deserialize, Serialize};

/// Everything needed to rerun a command and inspect its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub method: Method,
    pub input: String,
    pub dims: [usize; 3],
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arofac2_config: Option<Arofac2Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub als_config: Option<AlsConfig>,
    pub rank: usize,
    pub rel_error: f64,
    pub factors: Vec<Factor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Arofac2,
    ParafacAls,
}

impl RunReport {
    pub fn decomposition(&self) -> Decomposition {
        Decomposition {
            rank: self.rank,
            factors: self.factors.clone(),
            rel_error: self.rel_error,
            slice_weights: self.slice_weights.clone(),
        }
    }
}

/// Side-by-side summary written by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    pub arofac2_rank: usize,
    pub parafac_rank: usize,
    pub rank_discrepancy: bool,
    pub arofac2_rel_error: f64,
    pub parafac_rel_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arofac2_matching: Option<Matching>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parafac_matching: Option<Matching>,
    pub warnings: Vec<String>,
}

/// Ground truth written next to a synthetic tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: SynthSpec,
    pub truth: GroundTruth,
}

/// `path/stem.t3` → `path/stem.truth.json`.
pub fn sidecar_path(tensor: &Path) -> PathBuf {
    tensor.with_extension("truth.json")
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut out = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut out).with_context(|| format!("writing {}", path.display()))?;
        out.flush()?;
    }
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

/// One CSV per mode with header `factor_index,coord_index,value`.
pub fn write_factor_csvs(dir: &Path, prefix: &str, d: &Decomposition) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for mode in 1..=3 {
        let path = dir.join(format!("{prefix}factors_mode{mode}.csv"));
        write_atomic(&path, |out| {
            writeln!(out, "factor_index,coord_index,value")?;
            for (l, f) in d.factors.iter().enumerate() {
                for (c, x) in f.component(mode).iter().enumerate() {
                    writeln!(out, "{l},{c},{x}")?;
                }
            }
            Ok(())
        })?;
        written.push(path);
    }
    if let Some(sw) = &d.slice_weights {
        let path = dir.join(format!("{prefix}slice_weights.csv"));
        write_atomic(&path, |out| {
            writeln!(out, "slice_index,factor_index,value")?;
            for (k, row) in sw.iter().enumerate() {
                for (l, x) in row.iter().enumerate() {
                    writeln!(out, "{k},{l},{x}")?;
                }
            }
            Ok(())
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Mode-averaged correlation matrix as `est_index,true_index,corr`.
pub fn write_corr_csv(path: &Path, m: &Matching) -> Result<()> {
    write_atomic(path, |out| {
        writeln!(out, "est_index,true_index,corr")?;
        for (i, row) in m.corr.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                writeln!(out, "{i},{j},{c}")?;
            }
        }
        Ok(())
    })
}
