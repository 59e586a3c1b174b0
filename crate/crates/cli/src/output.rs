//! Append-only report files named `{command}-{unix_millis}-{hash8}` where
//! the hash covers the canonical run configuration.

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a Value,
    config_hash: &'a str,
    checks: &'a [Check],
    passed: bool,
    result: &'a R,
}

/// Lowercase hex SHA-256 of the canonical JSON of `config`.
pub fn config_hash(config: &Value) -> Result<String> {
    let canonical = cbne::report::to_json(config)?;
    Ok(Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub struct Written {
    pub json: PathBuf,
    pub csv: Vec<PathBuf>,
}

/// Writes the JSON report plus CSV side files `{stem}-{suffix}.csv`.
pub fn write_report<R: Serialize>(
    out_dir: &Path,
    command: &str,
    config: &Value,
    checks: &[Check],
    result: &R,
    csv: &[(String, String)],
) -> Result<Written> {
    let hash = config_hash(config)?;
    let envelope = Envelope {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        config_hash: &hash,
        checks,
        passed: checks.iter().all(|c| c.passed),
        result,
    };
    let text = cbne::report::to_json(&envelope)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut millis = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let (stem, json) = loop {
        let stem = format!("{command}-{millis}-{}", &hash[..8]);
        let path = out_dir.join(format!("{stem}.json"));
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                file.write_all(text.as_bytes())
                    .with_context(|| format!("cannot write {}", path.display()))?;
                break (stem, path);
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => millis += 1,
            Err(e) => return Err(e).with_context(|| format!("cannot create {}", path.display())),
        }
    };
    let mut written = Vec::new();
    for (suffix, content) in csv {
        let path = out_dir.join(format!("{stem}-{suffix}.csv"));
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| format!("cannot create {}", path.display()))?;
        file.write_all(content.as_bytes())
            .with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(Written { json, csv: written })
}
