use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use mvc_core::{Error, Result};
use serde::Serialize;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub dataset_fingerprint: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            tool: "mvc",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::Value::Null,
            dataset_fingerprint: None,
            started_unix: now(),
            finished_unix: 0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self)?)
            .map_err(|e| Error::Io { path, source: e })
    }
}
