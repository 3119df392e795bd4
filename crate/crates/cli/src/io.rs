use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use incivility::corpus::{load_labels, load_tweets, LabeledTweet, Tweet};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

/// The configured path for `what`, which must exist.
pub fn require<'a>(what: &'static str, path: &'a Option<PathBuf>) -> Result<&'a Path> {
    let p = path.as_deref().ok_or(CliError::Unconfigured(what))?;
    if !p.exists() {
        return Err(CliError::missing(what, p, "no such file"));
    }
    Ok(p)
}

/// The configured path for `what` if set; a set path must exist.
pub fn optional<'a>(what: &'static str, path: &'a Option<PathBuf>) -> Result<Option<&'a Path>> {
    match path {
        Some(_) => require(what, path).map(Some),
        None => Ok(None),
    }
}

pub fn read_tweets(what: &'static str, path: &Path) -> Result<Vec<Tweet>> {
    let report = load_tweets(path)?;
    for e in &report.errors {
        log::warn!("{what} {}: line {}: {}", path.display(), e.line, e.message);
    }
    Ok(report.records)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledTweet>> {
    Ok(load_labels(path)?)
}

pub fn ensure_out_dir(cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Write {
        path: cfg.out_dir.clone(),
        source: e,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

/// Provenance record written next to the outputs of every command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    pub outputs: Vec<OutputRecord>,
}

/// Hashes the outputs and writes `<command>.manifest.json`.
pub fn write_manifest(cfg: &PipelineConfig, command: &str, outputs: &[PathBuf]) -> Result<PathBuf> {
    let mut records = Vec::with_capacity(outputs.len());
    for p in outputs {
        let bytes = std::fs::read(p).map_err(|e| CliError::Write {
            path: p.clone(),
            source: e,
        })?;
        records.push(OutputRecord {
            file: p.file_name().map_or_else(
                || p.display().to_string(),
                |f| f.to_string_lossy().into_owned(),
            ),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        command: command.to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        outputs: records,
    };
    let path = cfg.out(&format!("{command}.manifest.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn by_id(tweets: &[Tweet]) -> BTreeMap<&str, &Tweet> {
    tweets.iter().map(|t| (t.id.as_str(), t)).collect()
}
