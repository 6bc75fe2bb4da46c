//! Report payloads, CSV rendering, and the run manifest.
//!
//! Payload bytes are a pure function of the resolved config: keys are
//! serialized sorted and floats printed with the shortest round-trip form.
//! Wall-clock data lives only in the manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use rangecap::experiments::SampleRow;

use crate::args::CommonArgs;

/// One report ready to persist: the JSON document plus the flat rows behind
/// report.csv.
pub struct Payload {
    pub json: Value,
    pub grid_label: String,
    pub rows: Vec<SampleRow>,
}

impl Payload {
    /// Wraps a serializable report, stamping a top-level schema field when
    /// the report does not carry its own.
    pub fn new<T: serde::Serialize>(report: &T, grid_label: &str, rows: Vec<SampleRow>) -> Payload {
        let mut json = serde_json::to_value(report).expect("report serializes");
        if let Value::Object(map) = &mut json {
            map.entry("schema").or_insert(json!(1));
        }
        Payload { json, grid_label: grid_label.to_string(), rows }
    }

    pub fn render_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.json).expect("json value prints");
        text.push('\n');
        text
    }

    pub fn render_csv(&self) -> String {
        let mut text = format!("{},seed,statistic,value\n", self.grid_label);
        for row in &self.rows {
            text.push_str(&format!("{},{},{},{}\n", row.x, row.seed, row.statistic, row.value));
        }
        text
    }
}

/// Reproducibility metadata stored next to the reports.
pub struct RunInfo<'a> {
    pub subcommand: &'a str,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub started: SystemTime,
    pub finished: SystemTime,
}

/// Writes the requested report files plus manifest.json, returning the
/// written paths. Nothing is written before the computation has succeeded.
pub fn write_outputs(
    common: &CommonArgs,
    payload: &Payload,
    info: &RunInfo,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(&common.out)?;
    let mut digests = Map::new();
    let mut written = Vec::new();
    if common.format.wants_json() {
        written.push(write_report(&common.out, "report.json", &payload.render_json(), &mut digests)?);
    }
    if common.format.wants_csv() {
        written.push(write_report(&common.out, "report.csv", &payload.render_csv(), &mut digests)?);
    }

    let manifest = json!({
        "schema": 1,
        "tool": { "name": "rangecap", "version": env!("CARGO_PKG_VERSION") },
        "subcommand": info.subcommand,
        "config": info.config,
        "seeds": info.seeds,
        "threads": info.threads,
        "started": humantime::format_rfc3339_millis(info.started).to_string(),
        "finished": humantime::format_rfc3339_millis(info.finished).to_string(),
        "outputs": Value::Object(digests),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest prints");
    text.push('\n');
    let path = common.out.join("manifest.json");
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}

fn write_report(
    dir: &Path,
    name: &str,
    text: &str,
    digests: &mut Map<String, Value>,
) -> io::Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    digests.insert(
        name.to_string(),
        json!({ "sha256": sha256_hex(text.as_bytes()), "bytes": text.len() }),
    );
    Ok(path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_injected_only_when_missing() {
        let p = Payload::new(&json!({"a": 1}), "n", vec![]);
        assert_eq!(p.json["schema"], json!(1));
        let q = Payload::new(&json!({"schema": 7}), "n", vec![]);
        assert_eq!(q.json["schema"], json!(7));
    }

    #[test]
    fn json_keys_come_out_sorted() {
        let p = Payload::new(&json!({"zebra": 1, "alpha": 2}), "n", vec![]);
        let text = p.render_json();
        assert!(text.find("alpha").unwrap() < text.find("zebra").unwrap());
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn csv_has_a_labeled_header_and_plain_decimals() {
        let rows = vec![
            SampleRow { x: 8, seed: 3, statistic: "cap".into(), value: 0.5 },
            SampleRow { x: 16, seed: 3, statistic: "cap".into(), value: 2.0 },
        ];
        let p = Payload::new(&json!({}), "n", rows);
        let csv = p.render_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("n,seed,statistic,value"));
        assert_eq!(lines.next(), Some("8,3,cap,0.5"));
        assert_eq!(lines.next(), Some("16,3,cap,2"));
    }

    #[test]
    fn sha256_matches_a_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
