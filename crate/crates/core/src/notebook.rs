//! Notebook documents: ingestion of the standard `.ipynb` format, cell
//! labelling (`C<i>` for code cells, `T<i>` for text cells) and the execution
//! log stored in the notebook metadata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Top-level metadata key under which the execution log is stored.
pub const LOG_METADATA_KEY: &str = "moon";

/// Oldest supported major notebook format version.
pub const MIN_NBFORMAT: u64 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NotebookError {
    #[error("malformed notebook at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported notebook format version {found} (need >= {MIN_NBFORMAT})")]
    Version { found: u64 },
    #[error("cell {position} has unsupported kind `{kind}`")]
    UnsupportedCellKind { position: usize, kind: String },
    #[error("cell position {position} out of range (notebook has {count} cells)")]
    OutOfRange { position: usize, count: usize },
    #[error("malformed `{LOG_METADATA_KEY}` metadata: {0}")]
    LogFormat(String),
}

/// Kind of a notebook cell. Markdown cells are text cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Text,
}

impl CellKind {
    fn letter(self) -> char {
        match self {
            CellKind::Code => 'C',
            CellKind::Text => 'T',
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Code => "code",
            CellKind::Text => "text",
        })
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "code" => Ok(CellKind::Code),
            "text" | "markdown" => Ok(CellKind::Text),
            other => Err(format!("unknown cell kind `{other}`")),
        }
    }
}

/// A cell identity by kind and notebook position, rendered `C<i>` or `T<i>`.
///
/// Ordering is by kind first (code before text), then by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef {
    pub kind: CellKind,
    pub index: usize,
}

impl CellRef {
    pub const fn code(index: usize) -> Self {
        CellRef {
            kind: CellKind::Code,
            index,
        }
    }

    pub const fn text(index: usize) -> Self {
        CellRef {
            kind: CellKind::Text,
            index,
        }
    }

    pub fn is_code(&self) -> bool {
        self.kind == CellKind::Code
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.letter(), self.index)
    }
}

impl FromStr for CellRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let kind = match chars.next() {
            Some('C') => CellKind::Code,
            Some('T') => CellKind::Text,
            _ => return Err(format!("`{s}` is not a cell label")),
        };
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("`{s}` is not a cell label"));
        }
        let index = digits
            .parse()
            .map_err(|_| format!("cell index in `{s}` is too large"))?;
        Ok(CellRef { kind, index })
    }
}

impl Serialize for CellRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Opaque identifier that survives insertions and deletions.
    pub stable_id: String,
    pub position: usize,
    pub kind: CellKind,
    pub source: String,
    /// The original cell object, kept so unknown fields survive a rewrite.
    raw: Map<String, Value>,
}

impl Cell {
    /// A fresh empty cell, as created by a student inside a session.
    pub fn new(stable_id: impl Into<String>, position: usize, kind: CellKind) -> Self {
        let stable_id = stable_id.into();
        let mut raw = Map::new();
        match kind {
            CellKind::Code => {
                raw.insert("cell_type".into(), "code".into());
                raw.insert("execution_count".into(), Value::Null);
                raw.insert("id".into(), stable_id.clone().into());
                raw.insert("metadata".into(), Value::Object(Map::new()));
                raw.insert("outputs".into(), Value::Array(Vec::new()));
            }
            CellKind::Text => {
                raw.insert("cell_type".into(), "markdown".into());
                raw.insert("id".into(), stable_id.clone().into());
                raw.insert("metadata".into(), Value::Object(Map::new()));
            }
        }
        raw.insert("source".into(), Value::String(String::new()));
        Cell {
            stable_id,
            position,
            kind,
            source: String::new(),
            raw,
        }
    }

    pub fn label(&self) -> CellRef {
        CellRef {
            kind: self.kind,
            index: self.position,
        }
    }

    fn to_json(&self) -> Value {
        let mut raw = self.raw.clone();
        let source_unchanged = raw
            .get("source")
            .map(|v| source_text(v).as_deref() == Some(self.source.as_str()))
            .unwrap_or(false);
        if !source_unchanged {
            raw.insert("source".into(), Value::String(self.source.clone()));
        }
        Value::Object(raw)
    }
}

/// A parsed notebook: ordered cells plus the top-level metadata object.
#[derive(Debug, Clone, PartialEq)]
pub struct NotebookDoc {
    pub cells: Vec<Cell>,
    pub metadata: Map<String, Value>,
    /// Top-level object as read, for lossless re-serialization.
    top: Map<String, Value>,
}

impl Default for NotebookDoc {
    fn default() -> Self {
        let mut top = Map::new();
        top.insert("cells".into(), Value::Array(Vec::new()));
        top.insert("metadata".into(), Value::Object(Map::new()));
        top.insert("nbformat".into(), 4.into());
        top.insert("nbformat_minor".into(), 5.into());
        NotebookDoc {
            cells: Vec::new(),
            metadata: Map::new(),
            top,
        }
    }
}

fn source_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => parts
            .iter()
            .map(|p| p.as_str())
            .collect::<Option<Vec<_>>>()
            .map(|v| v.concat()),
        _ => None,
    }
}

fn malformed(message: impl Into<String>) -> NotebookError {
    NotebookError::Parse {
        line: 0,
        column: 0,
        message: message.into(),
    }
}

/// Parses notebook JSON text.
///
/// Code cells become [`CellKind::Code`], markdown cells [`CellKind::Text`];
/// raw cells (and any other kind) are rejected. Cells without an `id` get a
/// deterministic one derived from their position.
pub fn parse_notebook(text: &str) -> Result<NotebookDoc, NotebookError> {
    let value: Value = serde_json::from_str(text).map_err(|e| NotebookError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    notebook_from_value(value)
}

/// Builds a notebook from an already-decoded JSON value.
pub fn notebook_from_value(value: Value) -> Result<NotebookDoc, NotebookError> {
    let Value::Object(top) = value else {
        return Err(malformed("top level is not an object"));
    };
    let nbformat = top
        .get("nbformat")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed("missing integer `nbformat`"))?;
    if nbformat < MIN_NBFORMAT {
        return Err(NotebookError::Version { found: nbformat });
    }
    let metadata = match top.get("metadata") {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(malformed("`metadata` is not an object")),
    };
    let raw_cells = match top.get("cells") {
        Some(Value::Array(cells)) => cells,
        _ => return Err(malformed("missing `cells` array")),
    };

    let mut cells = Vec::with_capacity(raw_cells.len());
    for (position, raw) in raw_cells.iter().enumerate() {
        let Value::Object(raw) = raw else {
            return Err(malformed(format!("cell {position} is not an object")));
        };
        let kind = match raw.get("cell_type").and_then(Value::as_str) {
            Some("code") => CellKind::Code,
            Some("markdown") => CellKind::Text,
            Some(other) => {
                return Err(NotebookError::UnsupportedCellKind {
                    position,
                    kind: other.to_string(),
                })
            }
            None => return Err(malformed(format!("cell {position} has no `cell_type`"))),
        };
        let source = match raw.get("source") {
            None => String::new(),
            Some(v) => source_text(v)
                .ok_or_else(|| malformed(format!("cell {position} has a malformed `source`")))?,
        };
        let stable_id = raw
            .get("id")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("cell-{position}"));
        cells.push(Cell {
            stable_id,
            position,
            kind,
            source,
            raw: raw.clone(),
        });
    }

    Ok(NotebookDoc {
        cells,
        metadata,
        top,
    })
}

impl NotebookDoc {
    /// Assembles a notebook from `(kind, source)` pairs; ids are `cell-<position>`.
    pub fn from_cells<I, S>(cells: I) -> Self
    where
        I: IntoIterator<Item = (CellKind, S)>,
        S: Into<String>,
    {
        let mut doc = NotebookDoc::default();
        for (position, (kind, source)) in cells.into_iter().enumerate() {
            let mut cell = Cell::new(format!("cell-{position}"), position, kind);
            cell.source = source.into();
            cell.raw
                .insert("source".into(), Value::String(cell.source.clone()));
            doc.cells.push(cell);
        }
        doc
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, position: usize) -> Option<&Cell> {
        self.cells.get(position)
    }

    pub fn position_of(&self, stable_id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.stable_id == stable_id)
    }

    /// Inserts `cell` at `position` and renumbers the cells after it.
    pub fn insert_cell(&mut self, position: usize, cell: Cell) -> Result<(), NotebookError> {
        if position > self.cells.len() {
            return Err(NotebookError::OutOfRange {
                position,
                count: self.cells.len(),
            });
        }
        self.cells.insert(position, cell);
        self.renumber();
        Ok(())
    }

    pub fn remove_cell(&mut self, position: usize) -> Result<Cell, NotebookError> {
        if position >= self.cells.len() {
            return Err(NotebookError::OutOfRange {
                position,
                count: self.cells.len(),
            });
        }
        let cell = self.cells.remove(position);
        self.renumber();
        Ok(cell)
    }

    fn renumber(&mut self) {
        for (i, c) in self.cells.iter_mut().enumerate() {
            c.position = i;
        }
    }

    pub fn to_value(&self) -> Value {
        let mut top = self.top.clone();
        top.insert(
            "cells".into(),
            Value::Array(self.cells.iter().map(Cell::to_json).collect()),
        );
        top.insert("metadata".into(), Value::Object(self.metadata.clone()));
        Value::Object(top)
    }

    /// Serializes back to notebook JSON (one-space indentation, as Jupyter writes it).
    pub fn to_json_string(&self) -> String {
        let mut out = Vec::new();
        let formatter = serde_json::ser::PrettyFormatter::with_indent(b" ");
        let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
        self.to_value()
            .serialize(&mut ser)
            .expect("serializing a JSON value cannot fail");
        out.push(b'\n');
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }
}

/// Label of the cell at `position`.
pub fn cell_label(doc: &NotebookDoc, position: usize) -> Result<CellRef, NotebookError> {
    doc.cell(position)
        .map(Cell::label)
        .ok_or(NotebookError::OutOfRange {
            position,
            count: doc.len(),
        })
}

/// One recorded code-cell execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub cell: CellRef,
    pub ts: u64,
    /// Set for executions of cells outside the scenario.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub white: bool,
}

impl LogEntry {
    pub fn new(cell: CellRef, ts: u64) -> Self {
        LogEntry {
            cell,
            ts,
            white: false,
        }
    }

    pub fn white(cell: CellRef, ts: u64) -> Self {
        LogEntry {
            cell,
            ts,
            white: true,
        }
    }
}

/// Every code-cell execution, compliant or not, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogTrace {
    pub entries: Vec<LogEntry>,
}

impl LogTrace {
    /// A trace of scenario executions stamped `0, 1, 2, ...`.
    pub fn from_cells<I: IntoIterator<Item = CellRef>>(cells: I) -> Self {
        LogTrace {
            entries: cells
                .into_iter()
                .enumerate()
                .map(|(i, c)| LogEntry::new(c, i as u64))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        self.entries.iter().map(|e| e.cell)
    }

    /// Next timestamp after the last recorded one.
    pub fn next_ts(&self) -> u64 {
        self.entries.iter().map(|e| e.ts + 1).max().unwrap_or(0)
    }
}

/// Reads the execution log from the notebook metadata; absent means empty.
pub fn read_log_trace(doc: &NotebookDoc) -> Result<LogTrace, NotebookError> {
    let Some(value) = doc.metadata.get(LOG_METADATA_KEY) else {
        return Ok(LogTrace::default());
    };
    if !value.is_array() {
        return Err(NotebookError::LogFormat(
            "expected a list of entries".into(),
        ));
    }
    let trace: LogTrace = serde_json::from_value(value.clone())
        .map_err(|e| NotebookError::LogFormat(e.to_string()))?;
    if let Some(bad) = trace.entries.iter().find(|e| !e.cell.is_code()) {
        return Err(NotebookError::LogFormat(format!(
            "entry {} is not a code cell",
            bad.cell
        )));
    }
    Ok(trace)
}

/// Returns a copy of `doc` with `trace` stored in its metadata. Other
/// metadata keys are left as they are.
pub fn write_log_trace(doc: &NotebookDoc, trace: &LogTrace) -> NotebookDoc {
    let mut out = doc.clone();
    out.metadata.insert(
        LOG_METADATA_KEY.into(),
        serde_json::to_value(trace).expect("log entries always serialize"),
    );
    out
}
