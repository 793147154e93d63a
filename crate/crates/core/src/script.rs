//! The scenario scripting language.
//!
//! ```text
//! Script   := Expr+                      (several top-level exprs form an implicit sequence)
//! Expr     := '(' Expr+ ')'              linear: children in order
//!           | '[' Expr+ ']'              any order: whole child blocks, permuted
//!           | '?' Expr                   optional
//!           | CellTerm
//! CellTerm := C<i> ('~' T<j>)*           code cell with its instruction cells
//! ```
//!
//! Siblings are separated by whitespace; `~` binds tighter than juxtaposition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::notebook::{CellKind, CellRef, NotebookDoc};

/// Half-open byte range into the script source.
pub type Span = Range<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {}..{}: {message}", span.start, span.end)]
pub struct SyntaxError {
    pub span: Span,
    pub message: String,
}

impl SyntaxError {
    fn new(span: Span, message: impl Into<String>) -> Self {
        SyntaxError {
            span,
            message: message.into(),
        }
    }
}

/// A code cell occurrence together with the text cells attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellNode {
    pub code: CellRef,
    pub texts: Vec<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Seq(Vec<Node>),
    Any(Vec<Node>),
    Opt(Box<Node>),
    Cell(CellNode),
}

impl Node {
    pub fn cell(code: CellRef) -> Node {
        Node::Cell(CellNode {
            code,
            texts: Vec::new(),
        })
    }

    pub fn opt(child: Node) -> Node {
        Node::Opt(Box::new(child))
    }

    /// Visits every cell occurrence in source order.
    pub fn for_each_cell<'a>(&'a self, f: &mut impl FnMut(&'a CellNode)) {
        match self {
            Node::Seq(children) | Node::Any(children) => {
                children.iter().for_each(|c| c.for_each_cell(f))
            }
            Node::Opt(child) => child.for_each_cell(f),
            Node::Cell(cell) => f(cell),
        }
    }

    /// Number of cell occurrences.
    pub fn occurrences(&self) -> usize {
        let mut n = 0;
        self.for_each_cell(&mut |_| n += 1);
        n
    }

    /// Returns a copy with every cell reference passed through `f`.
    pub fn map_refs(&self, f: &impl Fn(CellRef) -> CellRef) -> Node {
        match self {
            Node::Seq(c) => Node::Seq(c.iter().map(|n| n.map_refs(f)).collect()),
            Node::Any(c) => Node::Any(c.iter().map(|n| n.map_refs(f)).collect()),
            Node::Opt(c) => Node::opt(c.map_refs(f)),
            Node::Cell(cell) => Node::Cell(CellNode {
                code: f(cell.code),
                texts: cell.texts.iter().copied().map(f).collect(),
            }),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, open: char, close: char, c: &[Node]) -> fmt::Result {
            write!(f, "{open}")?;
            for (i, n) in c.iter().enumerate() {
                if i > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{n}")?;
            }
            write!(f, "{close}")
        }
        match self {
            Node::Seq(c) => list(f, '(', ')', c),
            Node::Any(c) => list(f, '[', ']', c),
            Node::Opt(c) => write!(f, "?{c}"),
            Node::Cell(cell) => {
                write!(f, "{}", cell.code)?;
                for t in &cell.texts {
                    write!(f, "~{t}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parse tree of a scenario script. `Display` renders canonical source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScriptAst {
    pub root: Node,
}

impl ScriptAst {
    /// Distinct code cells referenced anywhere in the script.
    pub fn code_cells(&self) -> BTreeSet<CellRef> {
        let mut out = BTreeSet::new();
        self.root.for_each_cell(&mut |c| {
            out.insert(c.code);
        });
        out
    }

    /// Union over all occurrences of the text cells attached to each code cell.
    pub fn text_associations(&self) -> BTreeMap<CellRef, BTreeSet<CellRef>> {
        let mut out: BTreeMap<CellRef, BTreeSet<CellRef>> = BTreeMap::new();
        self.root.for_each_cell(&mut |c| {
            out.entry(c.code)
                .or_default()
                .extend(c.texts.iter().copied());
        });
        out
    }

    /// Every cell the scenario involves, code and text.
    pub fn scenario_cells(&self) -> BTreeSet<CellRef> {
        let mut out = BTreeSet::new();
        self.root.for_each_cell(&mut |c| {
            out.insert(c.code);
            out.extend(c.texts.iter().copied());
        });
        out
    }
}

impl fmt::Display for ScriptAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

impl std::str::FromStr for ScriptAst {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_script(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok {
    Open(char),
    Close(char),
    Question,
    Tilde,
    Ref(CellRef),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Open(c) | Tok::Close(c) => write!(f, "`{c}`"),
            Tok::Question => f.write_str("`?`"),
            Tok::Tilde => f.write_str("`~`"),
            Tok::Ref(r) => write!(f, "`{r}`"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        let tok = match b {
            b if b.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            b'(' | b'[' => Tok::Open(b as char),
            b')' | b']' => Tok::Close(b as char),
            b'?' => Tok::Question,
            b'~' => Tok::Tilde,
            b'C' | b'T' => {
                let mut end = i + 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
                if end == i + 1 {
                    return Err(SyntaxError::new(
                        start..end,
                        format!("expected an index after `{}`", b as char),
                    ));
                }
                let cell: CellRef = src[start..end]
                    .parse()
                    .map_err(|m: String| SyntaxError::new(start..end, m))?;
                i = end;
                toks.push((Tok::Ref(cell), start..end));
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('\u{fffd}');
                return Err(SyntaxError::new(
                    start..start + ch.len_utf8(),
                    format!("unknown token `{ch}`"),
                ));
            }
        };
        i += 1;
        toks.push((tok, start..i));
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [(Tok, Span)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&(Tok, Span)> {
        self.toks.get(self.pos)
    }

    fn eof_span(&self) -> Span {
        self.len..self.len
    }

    fn expr(&mut self) -> Result<Node, SyntaxError> {
        let Some((tok, span)) = self.peek().cloned() else {
            return Err(SyntaxError::new(self.eof_span(), "expected an expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Open(open) => {
                let close = if open == '(' { ')' } else { ']' };
                let mut children = Vec::new();
                loop {
                    match self.peek() {
                        None => {
                            return Err(SyntaxError::new(
                                span.start..self.len,
                                format!("unclosed `{open}`"),
                            ))
                        }
                        Some((Tok::Close(c), cspan)) => {
                            if *c != close {
                                return Err(SyntaxError::new(
                                    cspan.clone(),
                                    format!("expected `{close}` to close `{open}`, found `{c}`"),
                                ));
                            }
                            let end = cspan.end;
                            self.pos += 1;
                            if children.is_empty() {
                                return Err(SyntaxError::new(
                                    span.start..end,
                                    format!("empty group `{open}{close}`"),
                                ));
                            }
                            break;
                        }
                        Some(_) => children.push(self.expr()?),
                    }
                }
                Ok(if open == '(' {
                    Node::Seq(children)
                } else {
                    Node::Any(children)
                })
            }
            Tok::Question => Ok(Node::opt(self.expr()?)),
            Tok::Ref(code) if code.is_code() => {
                let mut texts = Vec::new();
                while let Some((Tok::Tilde, tspan)) = self.peek().cloned() {
                    self.pos += 1;
                    match self.peek().cloned() {
                        Some((Tok::Ref(t), _)) if t.kind == CellKind::Text => {
                            self.pos += 1;
                            texts.push(t);
                        }
                        Some((Tok::Ref(c), cspan)) => {
                            return Err(SyntaxError::new(
                                cspan,
                                format!(
                                    "`~` must be followed by a text cell, found code cell `{c}`"
                                ),
                            ))
                        }
                        Some((other, ospan)) => {
                            return Err(SyntaxError::new(
                                ospan,
                                format!("expected a text cell after `~`, found {other}"),
                            ))
                        }
                        None => {
                            return Err(SyntaxError::new(tspan, "dangling `~` at end of script"))
                        }
                    }
                }
                Ok(Node::Cell(CellNode { code, texts }))
            }
            Tok::Ref(text) => Err(SyntaxError::new(
                span,
                format!("text cell `{text}` must be attached to a code cell with `~`"),
            )),
            Tok::Close(c) => Err(SyntaxError::new(span, format!("unbalanced `{c}`"))),
            Tok::Tilde => Err(SyntaxError::new(span, "`~` must follow a code cell")),
        }
    }
}

/// Parses script source into an AST, or reports the first error with its span.
pub fn parse_script(src: &str) -> Result<ScriptAst, SyntaxError> {
    let toks = lex(src)?;
    let mut parser = Parser {
        toks: &toks,
        pos: 0,
        len: src.len(),
    };
    let mut top = Vec::new();
    while parser.peek().is_some() {
        top.push(parser.expr()?);
    }
    let root = match top.len() {
        0 => return Err(SyntaxError::new(0..src.len(), "empty script")),
        1 => top.pop().expect("one element"),
        _ => Node::Seq(top),
    };
    Ok(ScriptAst { root })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
    pub cell: Option<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.iter().all(|i| i.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    fn push(&mut self, severity: Severity, cell: CellRef, message: String) {
        self.issues.push(Issue {
            severity,
            message,
            cell: Some(cell),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{}: {}", issue.severity, issue.message)?;
        }
        write!(f, "{}", if self.ok() { "ok" } else { "invalid" })
    }
}

/// Checks the script's cell references against a notebook.
pub fn validate_script(ast: &ScriptAst, doc: &NotebookDoc) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    let mut check = |r: CellRef, report: &mut ValidationReport| {
        if !seen.insert(r) {
            return;
        }
        match doc.cell(r.index) {
            None => report.push(
                Severity::Error,
                r,
                format!("{r} out of range (notebook has {} cells)", doc.len()),
            ),
            Some(cell) if cell.kind != r.kind => {
                report.push(Severity::Error, r, format!("{r} is not a {} cell", r.kind))
            }
            Some(_) => {}
        }
    };
    ast.root.for_each_cell(&mut |c| {
        check(c.code, &mut report);
        for t in &c.texts {
            check(*t, &mut report);
        }
    });

    let scripted = ast.code_cells();
    for cell in doc.cells.iter().filter(|c| c.kind == CellKind::Code) {
        let label = cell.label();
        if !scripted.contains(&label) {
            report.push(
                Severity::Warning,
                label,
                format!("{label} never appears in the script"),
            );
        }
    }

    let mut owners: BTreeMap<CellRef, BTreeSet<CellRef>> = BTreeMap::new();
    for (code, texts) in ast.text_associations() {
        for t in texts {
            owners.entry(t).or_default().insert(code);
        }
    }
    for (text, codes) in owners.into_iter().filter(|(_, c)| c.len() > 1) {
        let list: Vec<String> = codes.iter().map(ToString::to_string).collect();
        report.push(
            Severity::Warning,
            text,
            format!(
                "{text} is attached to several code cells ({})",
                list.join(", ")
            ),
        );
    }
    report
}
