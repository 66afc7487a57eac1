//! Report assembly and file output.
//!
//! JSON goes through `serde_json::Value`, whose maps are ordered by key, so
//! every document is written with sorted keys. Floats use the shortest
//! representation that round-trips, which never drops below 12 significant
//! digits of the stored value.

use std::path::{Path, PathBuf};

use mwlab::ledger::{Check, Ledger};
use serde_json::{json, Value};

use crate::CliError;

/// CSV/JSON text for a float; non-finite values become `inf`, `-inf`, `nan`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::String(fmt_num(x))
    }
}

/// One ledger entry tagged with the suite and cell it came from.
#[derive(Clone, Debug)]
pub struct Entry {
    pub suite: String,
    pub cell: String,
    pub check: Check,
    /// Error text when the check stands for a failed computation.
    pub message: Option<String>,
}

impl Entry {
    pub fn from_ledger(suite: &str, cell: &str, ledger: Ledger) -> Vec<Entry> {
        ledger
            .checks
            .into_iter()
            .map(|check| Entry { suite: suite.into(), cell: cell.into(), check, message: None })
            .collect()
    }

    /// A computation that raised instead of producing its checks.
    pub fn error(suite: &str, cell: &str, what: &str, e: &mwlab::Error) -> Entry {
        let mut check = Check::holds(format!("{what}.error"), "computation", false);
        check.lhs = f64::NAN;
        Entry { suite: suite.into(), cell: cell.into(), check, message: Some(format!("{}: {e}", crate::error_name(e))) }
    }

    pub fn to_json(&self) -> Value {
        let c = &self.check;
        json!({
            "suite": self.suite,
            "cell": self.cell,
            "check_id": c.check_id,
            "paper_anchor": c.paper_anchor,
            "lhs": num(c.lhs),
            "rhs": num(c.rhs),
            "slack": num(c.slack),
            "pass": c.pass,
            "message": self.message,
        })
    }
}

/// Failures first, otherwise in canonical order.
pub fn failures_first(entries: &mut [Entry]) {
    entries.sort_by_key(|e| e.check.pass);
}

pub fn ledger_csv(entries: &[Entry]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["suite", "cell", "check_id", "paper_anchor", "lhs", "rhs", "slack", "pass", "message"])?;
    for e in entries {
        let c = &e.check;
        w.write_record([
            e.suite.as_str(),
            e.cell.as_str(),
            c.check_id.as_str(),
            c.paper_anchor.as_str(),
            &fmt_num(c.lhs),
            &fmt_num(c.rhs),
            &fmt_num(c.slack),
            if c.pass { "true" } else { "false" },
            e.message.as_deref().unwrap_or(""),
        ])?;
    }
    finish(w)
}

/// Aligned plain-text table of the ledger.
pub fn ledger_table(entries: &[Entry]) -> String {
    let rows: Vec<[String; 6]> = entries
        .iter()
        .map(|e| {
            let c = &e.check;
            [
                if c.pass { "ok".into() } else { "FAIL".into() },
                e.suite.clone(),
                e.cell.clone(),
                c.check_id.clone(),
                format!("{:.6e}", c.slack),
                e.message.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let head = ["status", "suite", "cell", "check", "slack", "message"];
    let mut width: Vec<usize> = head.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[&str]| -> String {
        let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&head);
    out.push('\n');
    for r in &rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
        out.push('\n');
    }
    out
}

pub fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::io(e.to_string()))
}

/// Output directory with the files written so far.
pub struct OutDir {
    pub root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(format!("{}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }
}
