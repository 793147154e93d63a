//! Offline conformance of recorded execution logs: simplification, replay
//! classification, fitness and completeness, and cohort tables.

use std::collections::BTreeSet;
use std::fmt;
use std::io;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::automaton::{compile, CompileLimits, Dfa};
use crate::notebook::{read_log_trace, CellRef, LogTrace, NotebookDoc};
use crate::script::{validate_script, ScriptAst};
use crate::session::{Classification, Guide};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("fitness is undefined for a trace with no scenario executions")]
    EmptyTrace,
}

/// Replay class of one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceClass {
    Green,
    Orange,
    Red,
}

impl TraceClass {
    /// `None` for executions of cells outside the scenario.
    pub fn of(classification: Classification) -> Option<TraceClass> {
        match classification {
            Classification::Advance => Some(TraceClass::Green),
            Classification::ReexecStay | Classification::Backtrack => Some(TraceClass::Orange),
            Classification::Deviation => Some(TraceClass::Red),
            Classification::White => None,
        }
    }
}

impl fmt::Display for TraceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceClass::Green => "green",
            TraceClass::Orange => "orange",
            TraceClass::Red => "red",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AnnotatedTrace {
    pub entries: Vec<(CellRef, TraceClass)>,
    pub green: usize,
    pub orange: usize,
    pub red: usize,
}

impl AnnotatedTrace {
    pub fn push(&mut self, cell: CellRef, class: TraceClass) {
        match class {
            TraceClass::Green => self.green += 1,
            TraceClass::Orange => self.orange += 1,
            TraceClass::Red => self.red += 1,
        }
        self.entries.push((cell, class));
    }

    pub fn total(&self) -> usize {
        self.green + self.orange + self.red
    }
}

/// Collapses each run of consecutive executions of the same cell into its
/// first execution.
pub fn simplify_trace(log: &LogTrace) -> LogTrace {
    let mut entries = log.entries.clone();
    entries.dedup_by(|b, a| a.cell == b.cell && a.white == b.white);
    LogTrace { entries }
}

/// Replays `log` from a fresh state with the live session rules.
///
/// Expects a simplified log: adjacent repeats would be counted as orange
/// re-executions. Executions marked white are skipped.
pub fn classify_replay(log: &LogTrace, dfa: &Arc<Dfa>) -> AnnotatedTrace {
    let mut guide = Guide::new(Arc::clone(dfa));
    let mut out = AnnotatedTrace::default();
    for entry in log.entries.iter().filter(|e| !e.white) {
        if let Some(class) = TraceClass::of(guide.execute(entry.cell)) {
            out.push(entry.cell, class);
        }
    }
    out
}

/// Share of executions that were green or orange: `(g + o) / (g + o + r)`.
pub fn fitness(annotated: &AnnotatedTrace) -> Result<f64, MetricError> {
    match annotated.total() {
        0 => Err(MetricError::EmptyTrace),
        n => Ok((annotated.green + annotated.orange) as f64 / n as f64),
    }
}

/// Number of distinct scenario code cells executed at least once.
pub fn completeness(log: &LogTrace, scenario_cells: &BTreeSet<CellRef>) -> usize {
    log.entries
        .iter()
        .filter(|e| !e.white && scenario_cells.contains(&e.cell))
        .map(|e| e.cell)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Metrics of one notebook in a cohort.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortRow {
    pub id: String,
    pub outcome: Result<RowMetrics, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowMetrics {
    pub green: usize,
    pub orange: usize,
    pub red: usize,
    /// `None` when the trace has no scenario executions.
    pub fitness: Option<f64>,
    pub completeness: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    fn of(mut values: Vec<f64>) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        Some(Summary {
            min: values[0],
            median,
            max: values[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortReport {
    pub rows: Vec<CohortRow>,
}

pub const REPORT_HEADER: [&str; 6] = ["id", "g", "o", "r", "fitness", "completeness"];

impl CohortReport {
    fn metrics(&self) -> impl Iterator<Item = &RowMetrics> {
        self.rows.iter().filter_map(|r| r.outcome.as_ref().ok())
    }

    /// Min/median/max per column, over rows where the value is defined,
    /// in the order g, o, r, fitness, completeness.
    pub fn summary(&self) -> Vec<Option<Summary>> {
        let col = |f: &dyn Fn(&RowMetrics) -> Option<f64>| {
            Summary::of(self.metrics().filter_map(f).collect())
        };
        vec![
            col(&|m| Some(m.green as f64)),
            col(&|m| Some(m.orange as f64)),
            col(&|m| Some(m.red as f64)),
            col(&|m| m.fitness),
            col(&|m| Some(m.completeness as f64)),
        ]
    }

    /// Writes the table as CSV: header, one row per notebook, then `min`,
    /// `median` and `max` rows when at least one notebook was scored.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        for row in &self.rows {
            match &row.outcome {
                Ok(m) => w.write_record([
                    row.id.clone(),
                    m.green.to_string(),
                    m.orange.to_string(),
                    m.red.to_string(),
                    m.fitness
                        .map_or_else(|| "undefined".to_string(), |f| f.to_string()),
                    m.completeness.to_string(),
                ])?,
                Err(e) => w.write_record([
                    row.id.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("error: {e}"),
                    String::new(),
                ])?,
            }
        }
        if self.metrics().next().is_some() {
            let summary = self.summary();
            for (name, pick) in [
                ("min", (|s: &Summary| s.min) as fn(&Summary) -> f64),
                ("median", |s| s.median),
                ("max", |s| s.max),
            ] {
                let mut record = vec![name.to_string()];
                record.extend(
                    summary
                        .iter()
                        .map(|s| s.as_ref().map_or_else(String::new, |s| pick(s).to_string())),
                );
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV of UTF-8 fields")
    }
}

/// Scores one notebook: simplify its stored log, replay, measure.
pub fn score_notebook(
    doc: &NotebookDoc,
    script: &ScriptAst,
    dfa: &Arc<Dfa>,
) -> Result<RowMetrics, String> {
    let report = validate_script(script, doc);
    if !report.ok() {
        let msgs: Vec<&str> = report.errors().map(|i| i.message.as_str()).collect();
        return Err(msgs.join("; "));
    }
    let log = read_log_trace(doc).map_err(|e| e.to_string())?;
    let simplified = simplify_trace(&log);
    let annotated = classify_replay(&simplified, dfa);
    Ok(RowMetrics {
        green: annotated.green,
        orange: annotated.orange,
        red: annotated.red,
        fitness: fitness(&annotated).ok(),
        completeness: completeness(&simplified, &script.code_cells()),
    })
}

/// Scores every `(id, notebook)` against `script`. Rows are sorted by id;
/// a notebook that does not fit the script yields an error row.
pub fn cohort_report(
    notebooks: &[(String, NotebookDoc)],
    script: &ScriptAst,
    limits: &CompileLimits,
) -> Result<CohortReport, crate::automaton::CompileError> {
    let dfa = Arc::new(compile(script, limits)?);
    let mut rows: Vec<CohortRow> = notebooks
        .iter()
        .map(|(id, doc)| CohortRow {
            id: id.clone(),
            outcome: score_notebook(doc, script, &dfa),
        })
        .collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(CohortReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::{write_log_trace, CellKind, LogEntry};
    use crate::script::parse_script;

    fn c(i: usize) -> CellRef {
        CellRef::code(i)
    }

    fn branch() -> Arc<Dfa> {
        let ast = parse_script("(C7 ?C10 [(C12 C14)(C16 C18)])").unwrap();
        Arc::new(compile(&ast, &CompileLimits::default()).unwrap())
    }

    fn log(cells: &[usize]) -> LogTrace {
        LogTrace::from_cells(cells.iter().map(|&i| c(i)))
    }

    #[test]
    fn simplification() {
        assert_eq!(
            simplify_trace(&log(&[1, 1, 1, 2]))
                .cells()
                .collect::<Vec<_>>(),
            [c(1), c(2)]
        );
        assert!(simplify_trace(&LogTrace::default()).is_empty());
        assert_eq!(simplify_trace(&log(&[1, 2, 1])).len(), 3);
        // first timestamp of a run survives
        assert_eq!(simplify_trace(&log(&[1, 1, 2])).entries[1].ts, 2);
    }

    #[test]
    fn replay_classes() {
        let dfa = branch();
        let a = classify_replay(&log(&[7, 12, 14, 16, 18]), &dfa);
        assert_eq!((a.green, a.orange, a.red), (5, 0, 0));

        let a = classify_replay(&log(&[7, 18, 12]), &dfa);
        let classes: Vec<TraceClass> = a.entries.iter().map(|e| e.1).collect();
        assert_eq!(
            classes,
            [TraceClass::Green, TraceClass::Red, TraceClass::Green]
        );
        assert_eq!((a.green, a.red), (2, 1));

        let a = classify_replay(&log(&[7, 12, 14, 12]), &dfa);
        assert_eq!((a.green, a.orange, a.red), (3, 1, 0));

        // unknown symbols are red, white entries are skipped
        let mut l = log(&[99]);
        l.entries.push(LogEntry::white(c(3), 1));
        let a = classify_replay(&l, &dfa);
        assert_eq!((a.green, a.orange, a.red, a.entries.len()), (0, 0, 1, 1));
    }

    #[test]
    fn fitness_values() {
        let mk = |g, o, r| AnnotatedTrace {
            entries: Vec::new(),
            green: g,
            orange: o,
            red: r,
        };
        assert_eq!(fitness(&mk(5, 0, 0)), Ok(1.0));
        assert_eq!(fitness(&mk(0, 0, 4)), Ok(0.0));
        assert_eq!(fitness(&mk(3, 1, 4)), Ok(0.5));
        assert_eq!(fitness(&mk(0, 0, 0)), Err(MetricError::EmptyTrace));
    }

    #[test]
    fn completeness_counts_distinct_scenario_cells() {
        let scenario = BTreeSet::from([c(1), c(3), c(5)]);
        assert_eq!(completeness(&LogTrace::default(), &scenario), 0);
        assert_eq!(completeness(&log(&[1, 1, 3]), &scenario), 2);
        assert_eq!(completeness(&log(&[1, 2, 4]), &scenario), 1);
        let all: BTreeSet<CellRef> = (0..20).map(c).collect();
        assert_eq!(completeness(&log(&(0..20).collect::<Vec<_>>()), &all), 20);
    }

    #[test]
    fn cohort_table() {
        let script = parse_script("(C0 C1 C2)").unwrap();
        let base = NotebookDoc::from_cells((0..3).map(|_| (CellKind::Code, "")));
        let limits = CompileLimits::default();

        let empty = cohort_report(&[], &script, &limits).unwrap();
        assert_eq!(empty.to_csv_string(), "id,g,o,r,fitness,completeness\n");

        let notebooks = vec![
            (
                "b".to_string(),
                write_log_trace(&base, &log(&[0, 2, 1, 1, 2])),
            ),
            ("a".to_string(), write_log_trace(&base, &log(&[0, 1, 2]))),
            ("c".to_string(), base.clone()),
            (
                "d".to_string(),
                NotebookDoc::from_cells([(CellKind::Code, "")]),
            ),
        ];
        let report = cohort_report(&notebooks, &script, &limits).unwrap();
        let ids: Vec<&str> = report.rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
        // b simplifies to 0 2 1 2: green, red, green, green
        assert_eq!(
            report.rows[1].outcome,
            Ok(RowMetrics {
                green: 3,
                orange: 0,
                red: 1,
                fitness: Some(0.75),
                completeness: 3
            })
        );
        let csv = report.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "a,3,0,0,1,3");
        assert_eq!(lines[2], "b,3,0,1,0.75,3");
        assert_eq!(lines[3], "c,0,0,0,undefined,0");
        assert!(lines[4].starts_with("d,,,,error: C1 out of range"));
        assert_eq!(lines[5], "min,0,0,0,0.75,0");
        assert_eq!(lines[6], "median,3,0,0,0.875,3");
        assert_eq!(lines[7], "max,3,0,1,1,3");
        assert_eq!(lines.len(), 8);
    }
}
