//! Output directory handling and content-addressed file names.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const DEFAULT_OUT: &str = "qjump-out";

/// Output directory: `--out`, else the config's `out_dir`, else `$QJUMP_OUT`,
/// else `qjump-out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out_dir {
        return p.clone();
    }
    match std::env::var_os("QJUMP_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

/// First 12 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    let d = Sha256::digest(text.as_bytes());
    d.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Writes outputs of one command under a common directory.
pub struct Writer {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: PathBuf, command: &'static str, cfg: &RunConfig) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        let hash = short_hash(&format!("{command}\n{}", cfg.canonical()));
        Ok(Self { dir, command, hash, written: Vec::new() })
    }

    /// `<command>-v<schema>-s<seed>-<hash>[-<label>].<ext>`
    pub fn name(&self, seed: u64, label: &str, ext: &str) -> String {
        let label = if label.is_empty() { String::new() } else { format!("-{label}") };
        format!("{}-v{}-s{seed}-{}{label}.{ext}", self.command, qjump::mcwf::SCHEMA_VERSION, self.hash)
    }

    pub fn write(&mut self, seed: u64, label: &str, ext: &str, contents: &str) -> std::io::Result<PathBuf> {
        let path = self.dir.join(self.name(seed, label, ext));
        fs::write(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn files(&self) -> Vec<String> {
        self.written.iter().map(|p| p.display().to_string()).collect()
    }
}
