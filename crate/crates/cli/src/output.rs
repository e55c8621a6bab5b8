//! Atomic artifact writes and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use qsd_core::io::format_float;
use qsd_core::qprocess::BoundReport;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `contents` to a temporary sibling of `path` and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub struct Artifacts {
    dir: PathBuf,
    files: Map<String, Value>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), files: Map::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        write_atomic(&self.dir.join(name), contents.as_bytes())?;
        self.files.insert(name.to_string(), Value::String(sha256_hex(contents.as_bytes())));
        Ok(())
    }

    /// Writes `manifest.json`. `timestamp_unix` is the only field that
    /// differs between identical runs.
    pub fn finish(self, command: &str, seed: u64, config_sha256: &str, kernel_sha256: &str, results: Map<String, Value>) -> std::io::Result<()> {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config_sha256": config_sha256,
            "kernel_sha256": kernel_sha256,
            "files": self.files,
            "results": results,
            "timestamp_unix": timestamp,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.dir.join("manifest.json"), text.as_bytes())
    }
}

/// `key=value` pairs on one `#` line.
pub fn comment(pairs: &[(&str, String)]) -> String {
    let parts: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("# {}\n", parts.join(" "))
}

pub fn csv_row(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

pub fn ff(x: f64) -> String {
    format_float(x)
}

/// Summary line, checks and notes as comments, then `t,T,observed,bound,ratio`.
pub fn bound_report_csv(report: &BoundReport) -> String {
    let mut pairs = vec![
        ("name", report.name.to_string()),
        ("constant", ff(report.constant)),
        ("rate", ff(report.rate)),
        ("max_violation", ff(report.max_violation)),
        ("holds", report.holds().to_string()),
        ("fit_points", report.fit.len().to_string()),
    ];
    if let Some(fit) = &report.observed_rate {
        pairs.push(("observed_rate", ff(fit.rate)));
    }
    let mut out = comment(&pairs);
    for check in &report.checks {
        out.push_str(&format!("# check {}: {} ({})\n", check.name, if check.passed { "pass" } else { "fail" }, check.detail));
    }
    for note in &report.notes {
        out.push_str(&format!("# note {note}\n"));
    }
    out.push_str("t,T,observed,bound,ratio\n");
    for p in report.points() {
        out.push_str(&csv_row(&[p.t.to_string(), p.horizon.to_string(), ff(p.observed), ff(p.bound), ff(p.ratio)]));
    }
    out
}
