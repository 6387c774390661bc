use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::ledger::Digest;
use crate::rules::Violation;

/// A CSV table whose header names each column's unit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[(&str, &str)]) -> Table {
        Table { columns: columns.iter().map(|(n, u)| (n.to_string(), u.to_string())).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header `name[unit]` per column, preceded by a comment carrying the digest.
    pub fn to_csv(&self, digest: &Digest) -> String {
        let mut w = csv::Writer::from_writer(format!("# scenario_digest={digest}\n").into_bytes());
        w.write_record(self.columns.iter().map(|(n, u)| format!("{n}[{u}]"))).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Formats a float with fixed precision so reruns print identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    pub scenario_digest: String,
    pub git_describe: String,
    pub runtime_secs: f64,
    pub csv: String,
    pub violations: usize,
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Digest of an experiment name, its parameters and seeds.
pub fn scenario_digest(name: &str, params: &serde_json::Value, seeds: &[u64]) -> Digest {
    let body = serde_json::to_vec(&(name, params, seeds)).expect("parameters serialize");
    Digest::tagged(b"SCENARIO", &body)
}

/// Writes `<stem>.csv`, `<stem>.manifest.json` and, when non-empty,
/// `<stem>.violations.jsonl` into `dir`. Returns the CSV path.
pub fn write_outputs(dir: &Path, stem: &str, table: &Table, manifest: &Manifest, violations: &[Violation]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let digest = Digest::from_hex(&manifest.scenario_digest).unwrap_or_default();
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, table.to_csv(&digest))?;
    fs::write(dir.join(format!("{stem}.manifest.json")), serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n")?;
    if !violations.is_empty() {
        let lines: String = violations.iter().map(|v| v.to_json_line() + "\n").collect();
        fs::write(dir.join(format!("{stem}.violations.jsonl")), lines)?;
    }
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_names_units_and_digest() {
        let mut t = Table::new(&[("beta_w", "fraction"), ("honest", "fraction")]);
        t.push(vec![num(0.25), num(0.75)]);
        let d = scenario_digest("x", &serde_json::json!({"a": 1}), &[0, 1]);
        let csv = t.to_csv(&d);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), format!("# scenario_digest={d}"));
        assert_eq!(lines.next().unwrap(), "beta_w[fraction],honest[fraction]");
        assert_eq!(lines.next().unwrap(), "0.250000,0.750000");
        assert_ne!(d, scenario_digest("x", &serde_json::json!({"a": 1}), &[0]));
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = Table::new(&[("slot", "slot")]);
        let m = Manifest {
            experiment: "t".into(),
            params: serde_json::Value::Null,
            seeds: vec![],
            scenario_digest: Digest::ZERO.to_hex(),
            git_describe: "x".into(),
            runtime_secs: 0.0,
            csv: "t.csv".into(),
            violations: 0,
        };
        let path = write_outputs(dir.path(), "t", &t, &m, &[]).unwrap();
        assert!(path.exists());
        assert!(dir.path().join("t.manifest.json").exists());
        assert!(!dir.path().join("t.violations.jsonl").exists());
    }
}
