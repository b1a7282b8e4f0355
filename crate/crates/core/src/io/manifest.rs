//! JSON run manifest, written once at the end of a run.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::diagnostics::Verdict;
use crate::error::{Error, Result};
use crate::stepping::{SimConfig, StopReason};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Resolved configuration in the input format.
    pub config: String,
    pub scheme_tags: Vec<(String, String)>,
    pub dims: [usize; 3],
    pub extent: [f64; 3],
    /// Seconds since the Unix epoch.
    pub start_time: f64,
    pub end_time: f64,
    pub steps: u64,
    pub t_final: f64,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
    pub diagnostics_path: String,
    pub verdict_path: Option<String>,
    pub verdict_passed: Option<bool>,
    pub failed_checks: Vec<String>,
}

pub fn now_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(cfg: &SimConfig, diagnostics_path: &Path) -> Result<Self> {
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: crate::io::config::emit_config(cfg)?,
            scheme_tags: cfg
                .stencil
                .tags()
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            dims: cfg.grid.dims(),
            extent: cfg.grid.extent(),
            start_time: now_seconds(),
            end_time: 0.0,
            steps: 0,
            t_final: 0.0,
            stop: None,
            error: None,
            diagnostics_path: diagnostics_path.display().to_string(),
            verdict_path: None,
            verdict_passed: None,
            failed_checks: Vec::new(),
        })
    }

    pub fn record_verdict(&mut self, verdict: &Verdict, path: &Path) {
        self.verdict_path = Some(path.display().to_string());
        self.verdict_passed = Some(verdict.passed());
        self.failed_checks = verdict.failures().map(|c| c.name.clone()).collect();
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        write_json_atomic(self, path)
    }
}

pub fn write_json_atomic<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Diagnostics(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Diagnostics(e.to_string()))
}
