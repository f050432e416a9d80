use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use dar_etc::sdp::SolverSettings;

/// Everything needed to rerun a command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub model_path: Option<PathBuf>,
    pub model_hash: Option<String>,
    pub design_path: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub settings: ManifestSettings,
    pub solver: SolverSettings,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ManifestSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, solver: SolverSettings) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            model_path: None,
            model_hash: None,
            design_path: None,
            outputs: Vec::new(),
            settings: ManifestSettings::default(),
            solver,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
        }
    }

    /// Sidecar path `<output>.manifest.json`.
    pub fn sidecar(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Stamp the finish time and write one sidecar per output file.
    pub fn finish(mut self) -> std::io::Result<Vec<PathBuf>> {
        self.finished_at = Some(now());
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        let mut written = Vec::new();
        for out in &self.outputs {
            let path = Self::sidecar(out);
            std::fs::write(&path, &text)?;
            written.push(path);
        }
        Ok(written)
    }
}
