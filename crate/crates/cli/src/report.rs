use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use canard_core::RunConfig;

pub const TOOL: &str = "canard";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// sha256 of the canonical config JSON.
pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_canonical_json().as_bytes()))
}

/// Common header of every JSON report. No timestamps, so reruns are
/// byte-identical.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: String,
    pub config: &'a RunConfig,
    pub result: T,
}

pub struct Writer<'a> {
    pub dir: PathBuf,
    pub cfg: &'a RunConfig,
    hash: String,
}

impl<'a> Writer<'a> {
    pub fn new(dir: &Path, cfg: &'a RunConfig) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            cfg,
            hash: config_hash(cfg),
        })
    }

    pub fn json<T: Serialize>(&self, name: &str, command: &str, result: T) -> std::io::Result<PathBuf> {
        let env = Envelope {
            tool: TOOL,
            version: VERSION,
            command,
            config_hash: self.hash.clone(),
            config: self.cfg,
            result,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(std::io::Error::other)?;
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Plain CSV with a header row. The matching JSON report carries the
    /// config hash.
    pub fn csv<R: Serialize>(&self, name: &str, rows: &[R]) -> std::io::Result<PathBuf> {
        let mut body = csv::Writer::from_writer(Vec::new());
        for r in rows {
            body.serialize(r).map_err(std::io::Error::other)?;
        }
        let out = body.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        let path = self.dir.join(name);
        fs::write(&path, out)?;
        Ok(path)
    }
}
