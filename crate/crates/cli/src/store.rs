//! Append-only run records under `<out>/runs/<run_id>.jsonl`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CODE_VERSION: &str = concat!("ridge-transfer ", env!("CARGO_PKG_VERSION"));

/// Hex SHA-256 of the canonical inputs and the code version.
pub fn run_id(command: &str, canonical_inputs: &Value) -> String {
    let mut h = Sha256::new();
    h.update(CODE_VERSION.as_bytes());
    h.update(b"\n");
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_string(canonical_inputs).expect("inputs serialize").as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub run_id: &'a str,
    pub timestamp_unix: u64,
    pub code_version: &'static str,
    pub command: &'a str,
    pub inputs: &'a Value,
    pub rows: Vec<Value>,
    pub diagnostics: &'a [String],
}

pub fn append(out_dir: &Path, record: &RunRecord<'_>) -> Result<PathBuf, CliError> {
    let dir = out_dir.join("runs");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.jsonl", record.run_id));
    let mut line = serde_json::to_string(record).map_err(|e| CliError::Runtime(e.to_string()))?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    f.write_all(line.as_bytes())?;
    Ok(path)
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn run_id_is_a_pure_function() {
        let a = run_id("simulate", &json!({"x": 1, "y": [1.5, 2.0]}));
        let b = run_id("simulate", &json!({"x": 1, "y": [1.5, 2.0]}));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_ne!(a, run_id("boundary", &json!({"x": 1, "y": [1.5, 2.0]})));
        assert_ne!(a, run_id("simulate", &json!({"x": 2, "y": [1.5, 2.0]})));
    }
}
