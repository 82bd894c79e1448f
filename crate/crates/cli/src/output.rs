//! Output files: CSV with bit-stable float formatting (17 significant
//! digits) and a leading config-hash comment, plus run-metadata JSON.
//! The timestamp lives only in the metadata file, so repeated runs with
//! the same config and seed produce byte-identical CSVs.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(config_hash: &str, header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&format!("# config_hash={config_hash}\n"));
        buf.push_str(&header.join(","));
        buf.push('\n');
        CsvWriter { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.buf.as_bytes())
    }
}

#[derive(Serialize)]
pub struct RunMetadata<'a, D: Serialize> {
    pub command: &'a str,
    pub config_hash: &'a str,
    /// Verbatim configuration document.
    pub config: serde_json::Value,
    pub seed: u64,
    pub timestamp_unix: u64,
    pub diagnostics: D,
}

pub fn write_metadata<D: Serialize>(
    path: &Path,
    command: &str,
    config_raw: &str,
    config_hash: &str,
    seed: u64,
    diagnostics: D,
) -> std::io::Result<()> {
    let config: serde_json::Value =
        serde_json::from_str(config_raw).unwrap_or(serde_json::Value::Null);
    let meta = RunMetadata {
        command,
        config_hash,
        config,
        seed,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        diagnostics,
    };
    fs::write(path, serde_json::to_string_pretty(&meta).unwrap())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_significant_digits() {
        let s = fmt_f64(std::f64::consts::PI);
        assert_eq!(s, "3.1415926535897931e0");
        let parsed: f64 = s.parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
    }
}
