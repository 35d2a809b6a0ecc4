//! Flat `key = value` configuration files.

use std::path::Path;

use spdgyro::pipeline::TrainConfig;
use spdgyro::{Error, Result};

/// Applies every `key = value` line of `text` to `config`. `#` starts a
/// comment; blank lines are skipped.
pub fn apply_config_text(config: &mut TrainConfig, text: &str, path: &Path) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, found `{line}`")))?;
        config
            .set(key.trim(), value.trim())
            .map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(())
}

pub fn read_config_file(config: &mut TrainConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    apply_config_text(config, &text, path)
}
