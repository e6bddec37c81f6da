//! Run manifest: everything needed to reproduce a job exactly, emitted at
//! start and finalized with output checksums and the wall clock at the end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::AssumptionCheck;
use crate::csvio::write_atomic;

pub fn sha256_hex(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    format!("{:x}", hasher.finalize())
}

pub struct Manifest {
    path: PathBuf,
    started: Instant,
    body: Value,
    outputs: BTreeMap<String, String>,
}

impl Manifest {
    /// Emit the starting manifest: config echo + hash, seed, assumption
    /// report, status "running".
    pub fn start(
        out_dir: &Path,
        command: &str,
        config_text: &str,
        master_seed: u64,
        checks: &[AssumptionCheck],
        warnings: &[String],
    ) -> std::io::Result<Self> {
        let body = json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "master_seed": master_seed,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "config": config_text,
            "assumption_checks": checks.iter().map(|c| json!({
                "id": c.id,
                "passed": c.passed,
                "detail": c.detail,
            })).collect::<Vec<_>>(),
            "warnings": warnings,
            "status": "running",
        });
        let m = Self {
            path: out_dir.join("manifest.json"),
            started: Instant::now(),
            body,
            outputs: BTreeMap::new(),
        };
        m.flush()?;
        Ok(m)
    }

    /// Register an output file written by the run (records its checksum).
    pub fn add_output(&mut self, path: &Path, contents: &[u8]) {
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, sha256_hex(contents));
    }

    /// Attach command-specific results (fitted slopes, verdicts, stats).
    pub fn set_results(&mut self, results: Value) {
        self.body["results"] = results;
    }

    /// Finalize: output checksums, wall clock, status "complete".
    pub fn finish(mut self) -> std::io::Result<()> {
        self.body["outputs"] = json!(self.outputs);
        self.body["wall_clock_seconds"] = json!(self.started.elapsed().as_secs_f64());
        self.body["status"] = json!("complete");
        self.flush()
    }

    fn flush(&self) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.body).expect("manifest is valid json");
        write_atomic(&self.path, text.as_bytes())
    }
}
