//! Run manifests written beside every output.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Versions {
    pub bwsq: &'static str,
    pub model_artifact_format: u32,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub created_at: DateTime<Utc>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

/// `<out>.manifest.json`, next to `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write<C: Serialize>(
    command: &str,
    config: &C,
    seed: Option<u64>,
    primary: &Path,
    outputs: Vec<PathBuf>,
    summary: Option<serde_json::Value>,
) -> anyhow::Result<PathBuf> {
    let m = Manifest {
        command,
        config,
        seed,
        versions: Versions {
            bwsq: env!("CARGO_PKG_VERSION"),
            model_artifact_format: bwsq_core::models::ARTIFACT_FORMAT_VERSION,
        },
        created_at: Utc::now(),
        outputs,
        summary,
    };
    let path = manifest_path(primary);
    std::fs::write(&path, serde_json::to_vec_pretty(&m)?)
        .with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(manifest_path(Path::new("out/s.csv")), Path::new("out/s.csv.manifest.json"));
        assert_eq!(manifest_path(Path::new("reports")), Path::new("reports.manifest.json"));
    }
}
