//! Append-only JSONL log of tool runs: seed, parameter snapshot, input
//! hashes, per-phase timings, and result metrics — one line per run.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub unix_time: f64,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    /// Input path → SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub params: serde_json::Value,
    pub timings_ms: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(command: impl Into<String>, seed: u64, threads: usize) -> Self {
        let unix_time = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            unix_time,
            command: command.into(),
            seed,
            threads,
            inputs: BTreeMap::new(),
            params: serde_json::Value::Null,
            timings_ms: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    /// Hash a file and record it under its own path.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_hex(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn set_params(&mut self, params: impl Serialize) -> Result<()> {
        self.params = serde_json::to_value(params)
            .map_err(|e| Error::Usage(format!("unserializable parameters: {e}")))?;
        Ok(())
    }

    pub fn add_timing(&mut self, phase: impl Into<String>, ms: f64) {
        self.timings_ms.insert(phase.into(), ms);
    }

    pub fn add_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }
}

/// Wall-clock timer for one named phase.
pub struct PhaseTimer {
    started: Instant,
}

impl PhaseTimer {
    pub fn start() -> Self {
        Self { started: Instant::now() }
    }

    pub fn elapsed_ms(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e3
    }

    /// Record the elapsed time and restart for the next phase.
    pub fn lap(&mut self, record: &mut RunRecord, phase: &str) {
        record.add_timing(phase, self.elapsed_ms());
        self.started = Instant::now();
    }
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Append one record as a single JSON line; the file is created on first
/// use and never truncated.
pub fn append_run(path: &Path, record: &RunRecord) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let line = serde_json::to_string(record)
        .map_err(|e| Error::format(path, format!("serialize: {e}")))?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(file, "{line}").map_err(|e| Error::io(path, e))
}

/// Read every record back (useful for tests and inspection).
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::format(path, format!("bad record: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest_matches() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("abc.txt");
        std::fs::write(&file, b"abc").unwrap();
        assert_eq!(
            sha256_hex(&file).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn appending_accumulates_records_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("runs.jsonl");
        let mut first = RunRecord::new("render", 7, 4);
        first.add_metric("psnr_db", 31.5);
        first.set_params(serde_json::json!({"views": 3})).unwrap();
        append_run(&log, &first).unwrap();
        let mut second = RunRecord::new("fit", 8, 4);
        second.add_timing("total", 12.0);
        append_run(&log, &second).unwrap();

        let runs = read_runs(&log).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].command, "render");
        assert_eq!(runs[0].metrics["psnr_db"], 31.5);
        assert_eq!(runs[0].params["views"], 3);
        assert_eq!(runs[1].command, "fit");
        assert_eq!(runs[1].timings_ms["total"], 12.0);
    }

    #[test]
    fn input_hashes_key_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("input.bin");
        std::fs::write(&file, [1u8, 2, 3]).unwrap();
        let mut rec = RunRecord::new("embed", 0, 1);
        rec.add_input(&file).unwrap();
        assert_eq!(rec.inputs.len(), 1);
        let digest = rec.inputs.values().next().unwrap();
        assert_eq!(digest.len(), 64);
        assert!(rec.add_input(&dir.path().join("missing")).is_err());
    }
}
