//! The `coverdx` command line.
//!
//! [`run_command`] takes its streams as arguments so the whole CLI can be
//! driven in-process by tests. Exit status is 0 on success, 1 when the
//! engine reports a domain error and 2 for usage errors.

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::Parser;
use coverdx::kb::check_kb_value;
use coverdx::rulegen::generate_rules_with;
use coverdx::uncertainty::{estimate_weights, read_cases_csv, NoisyOr};
use coverdx::{
    load_kb, FaultMode, KeyPolicy, KnowledgeBase, ObservationState, ScoringStrategy, SessionConfig, SessionState,
    Severity,
};
use serde_json::json;

pub mod args;
mod consult;

use args::{
    Cli, ClusterArgs, ClusterFormat, Command, DiagnoseArgs, EstimateArgs, Format, Items, KbcheckArgs, Mode,
    RulegenArgs, ServeArgs, SessionArgs, Strategy,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<coverdx::Error> for CliError {
    fn from(e: coverdx::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(argv: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    2
                }
            };
        }
    };
    let result = match cli.command {
        Command::Kbcheck(a) => kbcheck(&a, stdout),
        Command::Diagnose(a) => diagnose(&a, stdout),
        Command::Consult(a) => consult::run(&a, stdin, stdout),
        Command::Rulegen(a) => rulegen(&a, stdout, stderr),
        Command::Cluster(a) => cluster(&a, stdout),
        Command::Estimate(a) => estimate(&a, stdout, stderr),
        Command::Serve(a) => serve(a, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

pub(crate) fn read_kb(path: &Path) -> CliResult<KnowledgeBase> {
    let loaded = load_kb(open(path)?, KeyPolicy::Strict).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    Ok(loaded.kb)
}

fn write_json(out: &mut dyn Write, value: &(impl serde::Serialize + ?Sized)) -> CliResult {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| CliError::Domain(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn kbcheck(a: &KbcheckArgs, stdout: &mut dyn Write) -> CliResult {
    let policy = if a.lenient { KeyPolicy::Lenient } else { KeyPolicy::Strict };
    let value: serde_json::Value = serde_json::from_reader(open(&a.path)?)
        .map_err(|e| CliError::Domain(format!("{}: parse error: {e}", a.path.display())))?;
    let (_, violations) =
        check_kb_value(value, policy).map_err(|e| CliError::Domain(format!("{}: {e}", a.path.display())))?;
    let errors = violations.iter().filter(|v| v.severity == Severity::Error).count();
    let warnings = violations.len() - errors;
    match a.format {
        Format::Text => {
            for v in &violations {
                writeln!(stdout, "{v}")?;
            }
            writeln!(stdout, "{errors} errors, {warnings} warnings")?;
        }
        Format::Json => write_json(
            stdout,
            &json!({"errors": errors, "warnings": warnings, "violations": violations}),
        )?,
    }
    if errors > 0 {
        return Err(CliError::Domain(format!(
            "{} failed validation with {errors} error(s)",
            a.path.display()
        )));
    }
    Ok(())
}

fn strategy(kind: Strategy, leak: Option<f64>) -> CliResult<ScoringStrategy> {
    match (kind, leak) {
        (Strategy::Bayes, leak) => {
            let mut s = ScoringStrategy::bayes();
            if let Some(l) = leak {
                s.parameters.insert("leak".into(), l);
            }
            Ok(s)
        }
        (Strategy::Heuristic, None) => Ok(ScoringStrategy::heuristic()),
        (Strategy::Heuristic, Some(_)) => Err(CliError::Usage("--leak applies only to the bayes strategy".into())),
    }
}

pub(crate) fn session_config(a: &SessionArgs, default_mode: FaultMode) -> CliResult<SessionConfig> {
    let mut config = SessionConfig {
        mode: match a.mode {
            Some(Mode::Single) => FaultMode::SingleFault,
            Some(Mode::Multiple) => FaultMode::MultipleFault,
            None => default_mode,
        },
        costs_enabled: a.costs,
        strategy: strategy(a.strategy, a.leak)?,
        ..SessionConfig::default()
    };
    if let Some(t) = a.threshold {
        config.conclusion_threshold = t;
    }
    if let Some(k) = a.max_cover {
        config.max_cover_size = k;
    }
    if let Some(b) = a.budget {
        config.question_budget = b;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub(crate) fn state_json(state: &SessionState) -> serde_json::Value {
    let summary = state.summary();
    let next = state.next_question().map(|s| {
        let node = state.kb().symptom_by_id(s).expect("next question is a KB symptom");
        json!({"symptom": node.id, "question": node.prompt()})
    });
    json!({
        "status": summary.status,
        "stopping_reason": summary.stopping_reason,
        "candidates": summary.explanations,
        "next_question": next,
        "present": summary.present,
        "absent": summary.absent,
        "uncovered_symptoms": summary.uncovered_symptoms,
        "note": summary.note,
    })
}

/// Batch diagnosis. Without `--mode` this ranks irredundant covers, so
/// several faults can explain the findings together.
fn diagnose(a: &DiagnoseArgs, stdout: &mut dyn Write) -> CliResult {
    let kb = Arc::new(read_kb(&a.session.kb)?);
    let config = session_config(&a.session, FaultMode::MultipleFault)?;
    if let Some(s) = a.present.iter().find(|s| a.absent.contains(s)) {
        return Err(CliError::Usage(format!("symptom {s} is listed as both present and absent")));
    }
    let obs = ObservationState::from_sets(a.present.iter().map(String::as_str), a.absent.iter().map(String::as_str));
    let state = coverdx::assess(kb, config, obs)?;
    match a.format {
        Format::Json => write_json(stdout, &state_json(&state)),
        Format::Text => {
            write!(stdout, "{}", state.summary().render_text())?;
            if let Some(s) = state.next_question() {
                let node = state.kb().symptom_by_id(s)?;
                writeln!(stdout, "next question: {} ({})", node.prompt(), node.id)?;
            }
            Ok(())
        }
    }
}

fn rulegen(a: &RulegenArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let kb = read_kb(&a.kb)?;
    if a.max_antecedent == 0 {
        return Err(CliError::Usage("--max-antecedent must be at least 1".into()));
    }
    let model = NoisyOr::new(a.leak.unwrap_or(0.0))?;
    let generated = generate_rules_with(&kb, a.max_antecedent, model, Default::default())?;
    match a.format {
        Format::Json => write_json(stdout, &generated.rules)?,
        Format::Text => {
            for r in &generated.rules {
                let ante = r.antecedent.iter().cloned().collect::<Vec<_>>().join(", ");
                writeln!(stdout, "{{{ante}}} => {} (confidence {:.6})", r.consequent, r.confidence)?;
            }
        }
    }
    for f in &generated.faults_without_rules {
        writeln!(
            stderr,
            "note: fault {f} has no discriminating antecedent of at most {} symptoms",
            a.max_antecedent
        )?;
    }
    Ok(())
}

fn cluster(a: &ClusterArgs, stdout: &mut dyn Write) -> CliResult {
    let kb = read_kb(&a.kb)?;
    let exec = Default::default();
    let tree = match a.items {
        Items::Faults => coverdx::clustering::cluster_faults(&kb, exec)?,
        Items::Symptoms => coverdx::clustering::cluster_symptoms(&kb, exec)?,
    };
    let clusters = a.cut.map(|h| tree.cut(h));
    match a.format {
        ClusterFormat::Newick => {
            writeln!(stdout, "{}", tree.to_newick())?;
            for c in clusters.iter().flatten() {
                writeln!(stdout, "{}", c.join(","))?;
            }
        }
        ClusterFormat::Json => {
            let mut v = serde_json::to_value(&tree).map_err(|e| CliError::Domain(e.to_string()))?;
            v["newick"] = json!(tree.to_newick());
            if let Some(c) = clusters {
                v["clusters"] = json!(c);
            }
            write_json(stdout, &v)?;
        }
    }
    Ok(())
}

fn estimate(a: &EstimateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let kb = read_kb(&a.kb)?;
    let cases = read_cases_csv(open(&a.cases)?, &kb).map_err(|e| CliError::Domain(format!("{}: {e}", a.cases.display())))?;
    let (updated, report) = estimate_weights(&cases, &kb, Default::default())?;
    match &a.out {
        Some(path) => fs::write(path, updated.to_json() + "\n")
            .map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?,
        None => writeln!(stdout, "{}", updated.to_json())?,
    }
    if let Some(path) = &a.report {
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Domain(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    }
    writeln!(
        stderr,
        "estimated from {} cases ({} single-fault, {} multi-fault skipped, {} fault-free); {} link(s) without isolated support",
        report.cases,
        report.single_fault_cases,
        report.skipped_multi_fault,
        report.fault_free_cases,
        report.unsupported.len()
    )?;
    Ok(())
}

fn serve(a: ServeArgs, stderr: &mut dyn Write) -> CliResult {
    let config = coverdx_service::ServiceConfig {
        bind: a.bind,
        port: a.port,
        kb_dir: a.kb_dir,
        store: a.store,
        max_sessions: a.max_sessions,
    }
    .with_env_overrides();
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    let result = runtime.block_on(coverdx_service::serve(config, async {
        let _ = tokio::signal::ctrl_c().await;
    }));
    result.map_err(|e| {
        for v in e.violations() {
            let _ = writeln!(stderr, "  {v}");
        }
        CliError::Domain(e.to_string())
    })
}
