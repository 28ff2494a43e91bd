use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FORMAT: &str = "pcn-run/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, with any generated seed appended,
    /// so that parsing them again reproduces the run.
    pub argv: Vec<String>,
    pub options: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub duration_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Tracks the files a command reads and writes.
#[derive(Debug, Default)]
pub struct Io {
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Io {
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        }
        fs::write(path, contents).map_err(|e| CliError::output(path, e))?;
        self.outputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Records text printed to standard output as a pseudo-file.
    pub fn stdout(&mut self, text: &str) {
        print!("{text}");
        self.outputs.push(FileDigest {
            path: "<stdout>".into(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
}

pub fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("{command}.manifest.json"))
}

pub fn load(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::precondition("JSON_ERROR", e.to_string()))?;
    if m.format != MANIFEST_FORMAT {
        return Err(CliError::precondition(
            "CONFIG_ERROR",
            format!("unsupported manifest format {:?}", m.format),
        ));
    }
    Ok(m)
}

/// Replaces the value of `--out` in recorded arguments, or appends one.
pub fn with_out(argv: &[String], out: &Path) -> Vec<String> {
    let out = out.display().to_string();
    let mut res = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut i = 0;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--out" && i + 1 < argv.len() {
            res.push(a.clone());
            res.push(out.clone());
            replaced = true;
            i += 2;
            continue;
        }
        if a.starts_with("--out=") {
            res.push(format!("--out={out}"));
            replaced = true;
        } else {
            res.push(a.clone());
        }
        i += 1;
    }
    if !replaced {
        res.push("--out".into());
        res.push(out);
    }
    res
}
