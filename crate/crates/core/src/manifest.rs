//! Run manifests and deterministic JSON output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to re-run a command. Written next to each output as
/// `<output>.manifest.json`; the output itself only references it, so the
/// analytical file stays byte-identical across re-runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub arguments: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: "resilsim".into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            config: None,
            master_seed: None,
            arguments: std::env::args().skip(1).collect(),
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = now();
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Sidecar manifest path for an output file.
pub fn manifest_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Pretty JSON with object keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Map is a BTreeMap unless `preserve_order` is on.
    let v: Value = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `value` as sorted JSON to `output` and the manifest beside it.
pub fn write_with_manifest<T: Serialize>(output: &Path, value: &T, manifest: &mut RunManifest) -> Result<()> {
    write_text(output, &to_sorted_json(value)?)?;
    manifest.outputs.push(output.display().to_string());
    manifest.finish();
    write_text(&manifest_path(output), &to_sorted_json(manifest)?)
}
