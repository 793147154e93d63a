//! The `moon` command. Everything goes through [`run`] so tests can drive the
//! command in-process and inspect both output streams.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use moon_core::analytics::{
    classify_replay, cohort_report, score_notebook, simplify_trace, CohortRow,
};
use moon_core::automaton::{compile, decorate_reexec_loops, export_dot, CompileLimits, Dfa};
use moon_core::notebook::{parse_notebook, read_log_trace, NotebookDoc};
use moon_core::script::{parse_script, validate_script, ScriptAst, SyntaxError};
use moon_service::AppState;

/// Exit status for validation, compile and input errors.
pub const EXIT_INVALID: i32 = 1;
/// Exit status for malformed command lines and unreadable files.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "moon",
    version,
    about = "Scenario scripts for guided notebooks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScriptSource {
    /// Read the script from a file instead of the first positional argument.
    #[arg(long, value_name = "FILE")]
    script_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LimitArgs {
    /// Largest any-order group to expand.
    #[arg(long, env = "MOON_MAX_ANY", value_name = "N")]
    max_any: Option<usize>,
    /// Largest automaton to build.
    #[arg(long, value_name = "N")]
    max_states: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a script and print the size of its automaton.
    Compile {
        #[arg(value_name = "SCRIPT")]
        inputs: Vec<String>,
        #[command(flatten)]
        source: ScriptSource,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Check a script against a notebook.
    Validate {
        #[arg(value_name = "SCRIPT NOTEBOOK")]
        inputs: Vec<String>,
        #[command(flatten)]
        source: ScriptSource,
    },
    /// Print the automaton in Graphviz format.
    ExportDot {
        #[arg(value_name = "SCRIPT")]
        inputs: Vec<String>,
        #[command(flatten)]
        source: ScriptSource,
        /// Add the self-loops that absorb re-executions.
        #[arg(long)]
        with_reexec_loops: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Replay the logs stored in notebooks and print their metrics.
    Replay {
        #[arg(value_name = "SCRIPT NOTEBOOK...")]
        inputs: Vec<String>,
        #[command(flatten)]
        source: ScriptSource,
        /// Also list every replayed execution with its class.
        #[arg(long, short)]
        verbose: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Score every notebook under a directory and write a CSV table.
    Report {
        #[arg(value_name = "SCRIPT DIR")]
        inputs: Vec<String>,
        #[command(flatten)]
        source: ScriptSource,
        /// Write the table here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Start the table with a comment line holding the generation time.
        #[arg(long)]
        stamp: bool,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Start the session server with one session already open.
    Serve {
        #[arg(value_name = "SCRIPT NOTEBOOK")]
        inputs: Vec<String>,
        #[command(flatten)]
        source: ScriptSource,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
}

impl Failure {
    fn status(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Invalid(_) => EXIT_INVALID,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) => m,
        }
    }
}

type Outcome = Result<i32, Failure>;

/// Runs the command line `args` (program name first) and returns the exit
/// status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(status) => status,
        Err(failure) => {
            let _ = writeln!(err, "error: {}", failure.message());
            failure.status()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match command {
        Command::Compile {
            inputs,
            source,
            limits,
        } => {
            let (script, _) = script_and_rest(inputs, &source, 0..=0, "")?;
            let dfa = build(&script, &limits)?;
            let accepting: Vec<String> = dfa.accepting().iter().map(|q| q.to_string()).collect();
            emit(out, |w| {
                writeln!(w, "states: {}", dfa.num_states())?;
                writeln!(w, "transitions: {}", dfa.num_transitions())?;
                writeln!(w, "accepting: {}", accepting.join(" "))
            })?;
            Ok(0)
        }
        Command::Validate { inputs, source } => {
            let (script, rest) = script_and_rest(inputs, &source, 1..=1, "a notebook")?;
            let doc = load_notebook(Path::new(&rest[0]))?;
            let report = validate_script(&script.ast, &doc);
            emit(out, |w| writeln!(w, "{report}"))?;
            Ok(if report.ok() { 0 } else { EXIT_INVALID })
        }
        Command::ExportDot {
            inputs,
            source,
            with_reexec_loops,
            limits,
        } => {
            let (script, _) = script_and_rest(inputs, &source, 0..=0, "")?;
            let mut dfa = build(&script, &limits)?;
            if with_reexec_loops {
                dfa = decorate_reexec_loops(&dfa);
            }
            emit(out, |w| write!(w, "{}", export_dot(&dfa)))?;
            Ok(0)
        }
        Command::Replay {
            inputs,
            source,
            verbose,
            limits,
        } => {
            let (script, rest) =
                script_and_rest(inputs, &source, 1..=usize::MAX, "at least one notebook")?;
            let dfa = Arc::new(build(&script, &limits)?);
            replay(&script.ast, &dfa, &rest, verbose, out, err)
        }
        Command::Report {
            inputs,
            source,
            out: path,
            stamp,
            limits,
        } => {
            let (script, rest) = script_and_rest(inputs, &source, 1..=1, "a directory")?;
            report(
                &script,
                Path::new(&rest[0]),
                path.as_deref(),
                stamp,
                &limits,
                out,
            )
        }
        Command::Serve {
            inputs,
            source,
            port,
            host,
            limits,
        } => {
            let (script, rest) = script_and_rest(inputs, &source, 1..=1, "a notebook")?;
            let doc = load_notebook(Path::new(&rest[0]))?;
            serve(script, doc, &host, port, &limits, out)
        }
    }
}

fn emit(
    out: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), Failure> {
    f(out).map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
}

/// A parsed script together with its source, for error messages.
struct Script {
    source: String,
    ast: ScriptAst,
}

/// Splits the positional arguments into the script and the remaining
/// operands. Without `--script-file` the first positional is the script.
fn script_and_rest(
    mut inputs: Vec<String>,
    source: &ScriptSource,
    rest: std::ops::RangeInclusive<usize>,
    rest_name: &str,
) -> Result<(Script, Vec<String>), Failure> {
    let text = match &source.script_file {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?,
        None if inputs.is_empty() => {
            return Err(Failure::Usage(
                "missing script (give it inline or with --script-file)".into(),
            ))
        }
        None => inputs.remove(0),
    };
    if !rest.contains(&inputs.len()) {
        return Err(Failure::Usage(if inputs.len() < *rest.start() {
            format!("expected {rest_name} after the script")
        } else {
            format!("unexpected argument `{}`", inputs[*rest.end()])
        }));
    }
    let ast = parse_script(&text).map_err(|e| Failure::Invalid(render_syntax_error(&text, &e)))?;
    Ok((Script { source: text, ast }, inputs))
}

/// The error message followed by the offending line with the span underlined.
fn render_syntax_error(src: &str, e: &SyntaxError) -> String {
    let start = e.span.start.min(src.len());
    let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = src[start..].find('\n').map_or(src.len(), |i| start + i);
    let line = &src[line_start..line_end];
    let pad = src[line_start..start].chars().count();
    let end = e.span.end.clamp(start, line_end);
    let width = src[start..end].chars().count().max(1);
    format!(
        "{e}\n  | {line}\n  | {}{}",
        " ".repeat(pad),
        "^".repeat(width)
    )
}

fn limits_of(args: &LimitArgs) -> Result<CompileLimits, Failure> {
    let defaults = CompileLimits::default();
    CompileLimits::new(
        args.max_any.unwrap_or(defaults.max_any_elements),
        args.max_states.unwrap_or(defaults.max_states),
    )
    .map_err(|e| Failure::Usage(e.to_string()))
}

fn build(script: &Script, limits: &LimitArgs) -> Result<Dfa, Failure> {
    compile(&script.ast, &limits_of(limits)?).map_err(|e| Failure::Invalid(e.to_string()))
}

fn read_notebook(path: &Path) -> Result<Result<NotebookDoc, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_notebook(&text).map_err(|e| e.to_string()))
}

fn load_notebook(path: &Path) -> Result<NotebookDoc, Failure> {
    read_notebook(path)?.map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn format_fitness(f: Option<f64>) -> String {
    f.map_or_else(|| "undefined".into(), |f| f.to_string())
}

fn replay(
    ast: &ScriptAst,
    dfa: &Arc<Dfa>,
    paths: &[String],
    verbose: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let mut status = 0;
    emit(out, |w| {
        writeln!(w, "notebook\tg\to\tr\tfitness\tcompleteness")
    })?;
    for path in paths {
        let scored = load_notebook(Path::new(path)).and_then(|doc| {
            let metrics = score_notebook(&doc, ast, dfa).map_err(Failure::Invalid)?;
            Ok((doc, metrics))
        });
        let (doc, m) = match scored {
            Ok(v) => v,
            Err(Failure::Invalid(msg)) => {
                let _ = writeln!(err, "error: {path}: {msg}");
                status = EXIT_INVALID;
                continue;
            }
            Err(usage) => return Err(usage),
        };
        emit(out, |w| {
            writeln!(
                w,
                "{path}\t{}\t{}\t{}\t{}\t{}",
                m.green,
                m.orange,
                m.red,
                format_fitness(m.fitness),
                m.completeness
            )
        })?;
        if verbose {
            // score_notebook already read the log successfully.
            let log = simplify_trace(&read_log_trace(&doc).expect("log was readable"));
            let annotated = classify_replay(&log, dfa);
            for (cell, class) in &annotated.entries {
                emit(out, |w| writeln!(w, "  {cell}\t{class:?}"))?;
            }
        }
    }
    Ok(status)
}

fn report(
    script: &Script,
    dir: &Path,
    path: Option<&Path>,
    stamp: bool,
    limits: &LimitArgs,
    out: &mut dyn Write,
) -> Outcome {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut notebooks = Vec::new();
    let mut broken = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Failure::Usage(e.to_string()))?;
        let file = entry.path();
        if !entry.file_type().is_file() || file.extension().is_none_or(|e| e != "ipynb") {
            continue;
        }
        let id = file
            .strip_prefix(dir)
            .expect("walkdir yields paths under its root")
            .with_extension("")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        match read_notebook(file)? {
            Ok(doc) => notebooks.push((id, doc)),
            Err(e) => broken.push(CohortRow {
                id,
                outcome: Err(e),
            }),
        }
    }
    let limits = limits_of(limits)?;
    let mut table = cohort_report(&notebooks, &script.ast, &limits)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    table.rows.extend(broken);
    table.rows.sort_by(|a, b| a.id.cmp(&b.id));

    let mut text = String::new();
    if stamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        text.push_str(&format!(
            "# generated at unix time {secs} for {}\n",
            script.source.trim()
        ));
    }
    text.push_str(&table.to_csv_string());
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))?,
        None => emit(out, |w| w.write_all(text.as_bytes()))?,
    }
    Ok(0)
}

fn serve(
    script: Script,
    doc: NotebookDoc,
    host: &str,
    port: u16,
    limits: &LimitArgs,
    out: &mut dyn Write,
) -> Outcome {
    let state = AppState::new(limits_of(limits)?);
    let (id, _) = state.create_parsed(doc, script.ast).map_err(|e| {
        let mut msg = e.to_string();
        if let moon_service::ApiError::Invalid(report) = &e {
            msg = format!("{msg}\n{report}");
        }
        Failure::Invalid(msg)
    })?;
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Failure::Invalid(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::Invalid(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::Invalid(e.to_string()))?;
        emit(out, |w| {
            writeln!(w, "session {id}")?;
            writeln!(w, "listening on http://{addr}")?;
            w.flush()
        })?;
        moon_service::serve(listener, state)
            .await
            .map_err(|e| Failure::Invalid(format!("server stopped: {e}")))
    })?;
    Ok(0)
}
