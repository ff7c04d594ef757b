//! JSON run reports. Every number printed to stdout is taken from the
//! report's `summary` map, so stdout never shows anything the JSON lacks.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

pub const SCHEMA_VERSION: u32 = 1;

pub struct Report {
    command: String,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    summary: BTreeMap<String, f64>,
    sections: BTreeMap<String, Value>,
    wall_time_s: f64,
    peak_rss_kb: Option<u64>,
}

/// Peak resident set size from `/proc/self/status`, where available.
fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

impl Report {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_owned(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            summary: BTreeMap::new(),
            sections: BTreeMap::new(),
            wall_time_s: 0.0,
            peak_rss_kb: None,
        }
    }

    /// SHA-256 of an input file or frame directory.
    pub fn input(&mut self, key: impl Into<String>, checksum: String) {
        self.inputs.insert(key.into(), checksum);
    }

    pub fn output(&mut self, key: impl Into<String>, checksum: String) {
        self.outputs.insert(key.into(), checksum);
    }

    pub fn number(&mut self, key: &str, value: f64) {
        self.summary.insert(key.to_owned(), value);
    }

    pub fn set(&mut self, key: &str, value: &impl Serialize) {
        self.sections.insert(key.to_owned(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn finish(&mut self, wall_time_s: f64) {
        self.wall_time_s = wall_time_s;
        self.peak_rss_kb = peak_rss_kb();
        self.summary.insert("wall_time_s".into(), wall_time_s);
        if let Some(kb) = self.peak_rss_kb {
            self.summary.insert("peak_rss_kb".into(), kb as f64);
        }
    }

    /// `key = value` lines for stdout.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.inputs {
            out.push_str(&format!("input.{k} = {v}\n"));
        }
        for (k, v) in &self.outputs {
            out.push_str(&format!("output.{k} = {v}\n"));
        }
        for (k, v) in &self.summary {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "summary": self.summary,
            "wall_time_s": self.wall_time_s,
            "peak_rss_kb": self.peak_rss_kb,
        });
        for (k, v) in &self.sections {
            doc[k] = v.clone();
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("report serialises");
        text.push('\n');
        text
    }
}
