//! Fitted statistics on disk: a JSON manifest with the scalar moments, plus the mean
//! vector and covariance matrix as tensor files beside it, referenced by file name
//! and SHA-256.

use std::path::{Path, PathBuf};

use isonorm::format::{sha256_hex, TensorFile};
use isonorm::moments::{CovarianceEstimate, Statistics};
use isonorm::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::files::{read_bytes, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsManifest {
    pub library_version: String,
    pub channels: usize,
    pub n_samples: u64,
    pub global_mean: f64,
    pub global_sigma: f64,
    pub mean: FileRef,
    pub covariance: FileRef,
}

fn sidecar(manifest: &Path, suffix: &str) -> PathBuf {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("stats");
    manifest.with_file_name(format!("{stem}.{suffix}.bin"))
}

fn file_name(p: &Path) -> String {
    p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

/// Writes the sidecars first and the manifest last, each atomically.
pub fn write_stats(path: &Path, stats: &Statistics) -> Result<StatsManifest> {
    let mean_path = sidecar(path, "mean");
    let cov_path = sidecar(path, "cov");
    let mean_bytes = TensorFile::from_vector(&stats.covariance.mean).to_bytes();
    let cov_bytes = TensorFile::from_matrix(&stats.covariance.cov).to_bytes();
    write_atomic(&mean_path, &mean_bytes)?;
    write_atomic(&cov_path, &cov_bytes)?;
    let manifest = StatsManifest {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        channels: stats.channels(),
        n_samples: stats.covariance.n_samples,
        global_mean: stats.global_mean,
        global_sigma: stats.global_sigma,
        mean: FileRef { path: file_name(&mean_path), sha256: sha256_hex(&mean_bytes) },
        covariance: FileRef { path: file_name(&cov_path), sha256: sha256_hex(&cov_bytes) },
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(path, &json)?;
    Ok(manifest)
}

fn load_ref(base: &Path, r: &FileRef) -> Result<TensorFile> {
    let path = base.parent().unwrap_or(Path::new(".")).join(&r.path);
    let bytes = read_bytes(&path)?;
    if sha256_hex(&bytes) != r.sha256 {
        return Err(Error::ChecksumFailure);
    }
    TensorFile::from_bytes(&bytes)
}

pub fn read_stats(path: &Path) -> Result<Statistics> {
    let manifest: StatsManifest = serde_json::from_slice(&read_bytes(path)?)?;
    let mean = load_ref(path, &manifest.mean)?.to_vector()?;
    let cov = load_ref(path, &manifest.covariance)?.to_matrix()?;
    let c = manifest.channels;
    if mean.len() != c || cov.dim() != (c, c) {
        return Err(Error::Format(format!("statistics for {c} channels have mean {} and covariance {:?}", mean.len(), cov.dim())));
    }
    Ok(Statistics {
        per_channel_sigma: cov.diag().mapv(|v| v.max(0.0).sqrt()),
        covariance: CovarianceEstimate { mean, cov, n_samples: manifest.n_samples },
        global_mean: manifest.global_mean,
        global_sigma: manifest.global_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn stats() -> Statistics {
        Statistics::from_covariance(arr1(&[0.5, -1.0]), arr2(&[[2.0, 0.3], [0.3, 1.0]]), 500).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let m = write_stats(&path, &stats()).unwrap();
        assert_eq!(m.mean.path, "run.mean.bin");
        assert!(dir.path().join("run.cov.bin").exists());
        assert_eq!(read_stats(&path).unwrap(), stats());
    }

    #[test]
    fn tampered_sidecar_fails_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        write_stats(&path, &stats()).unwrap();
        let other = Statistics::from_covariance(arr1(&[0.0, 0.0]), arr2(&[[1.0, 0.0], [0.0, 1.0]]), 500).unwrap();
        std::fs::write(dir.path().join("s.cov.bin"), TensorFile::from_matrix(&other.covariance.cov).to_bytes()).unwrap();
        assert!(matches!(read_stats(&path), Err(Error::ChecksumFailure)));
    }
}
