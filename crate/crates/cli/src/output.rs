// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Artifact emission: CSV tables with a fixed header and shortest
//! round-trip float formatting, plus a JSON metadata sidecar carrying the
//! resolved configuration. Identical runs produce byte-identical CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use crate::config::OutputSettings;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // Float's Display is the shortest string that parses back to
            // the same value, without exponent notation.
            Cell::Float(x) => format!("{x}"),
            Cell::Int(n) => format!("{n}"),
            Cell::Text(s) => quote_csv(s),
        }
    }
}

fn quote_csv(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A rectangular result table; the column list is the CSV header.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV text: header line always present, LF endings, trailing newline.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// One artifact set: `<stem>.csv`, optional `<stem>.svg`, and the
/// `<stem>.meta.json` sidecar.
pub struct Artifacts {
    pub csv_path: PathBuf,
    pub svg_path: Option<PathBuf>,
    pub meta_path: PathBuf,
}

pub fn write_artifacts<C: Serialize>(
    settings: &OutputSettings,
    subcommand: &str,
    resolved: &C,
    table: &Table,
    notes: &[(String, String)],
    svg: Option<&str>,
) -> std::io::Result<Artifacts> {
    let dir = Path::new(&settings.dir);
    fs::create_dir_all(dir)?;

    let csv_path = dir.join(format!("{}.csv", settings.stem));
    fs::write(&csv_path, table.to_csv())?;

    let svg_path = match svg {
        Some(body) => {
            let path = dir.join(format!("{}.svg", settings.stem));
            fs::write(&path, body)?;
            Some(path)
        }
        None => None,
    };

    let meta_path = dir.join(format!("{}.meta.json", settings.stem));
    fs::write(&meta_path, metadata_json(settings, subcommand, resolved, table, notes))?;

    Ok(Artifacts {
        csv_path,
        svg_path,
        meta_path,
    })
}

/// Sidecar body. serde_json keeps object keys sorted, so the layout is
/// deterministic; the timestamp is the only run-dependent field and it
/// lives here rather than in the CSV.
fn metadata_json<C: Serialize>(
    settings: &OutputSettings,
    subcommand: &str,
    resolved: &C,
    table: &Table,
    notes: &[(String, String)],
) -> String {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let notes: serde_json::Map<String, serde_json::Value> = notes
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    let body = json!({
        "artifact": {
            "name": "jjchain",
            "version": env!("CARGO_PKG_VERSION"),
        },
        "created_unix_seconds": created,
        "subcommand": subcommand,
        "output": settings,
        "resolved_config": serde_json::to_value(resolved).unwrap_or(serde_json::Value::Null),
        "columns": table.columns,
        "row_count": table.rows.len(),
        "notes": notes,
        "units": {
            "energy": "E_J",
            "time": "hbar/E_J",
            "u0": "(2e)^2 / (E_J C0)",
        },
    });
    let mut text = serde_json::to_string_pretty(&body).unwrap_or_else(|_| "{}".into());
    text.push('\n');
    text
}
