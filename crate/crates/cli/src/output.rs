use std::io::Write;
use std::path::Path;

use fockspec::config::RunConfig;
use fockspec::Result;
use serde::Serialize;
use serde_json::Value;

#[derive(Serialize)]
pub struct Timing {
    pub seconds: f64,
}

/// Everything needed to rerun a command: the echoed configuration, the tool
/// version and the results. `timing` is the only field that varies between
/// identical runs.
#[derive(Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub config_toml: String,
    pub results: Value,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str, cfg: &RunConfig, results: Value, seconds: f64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            config_toml: cfg.to_toml(),
            results,
            timing: Timing { seconds },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
