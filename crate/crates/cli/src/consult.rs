use std::io::{BufRead, Write};
use std::sync::Arc;

use coverdx::session::format_fault_set;
use coverdx::{FaultMode, Finding, SessionState, SessionStatus};

use crate::args::{ConsultArgs, Format};
use crate::{read_kb, session_config, state_json, CliError, CliResult};

const HELP: &str = "answers: y(es)/p(resent), n(o)/a(bsent), u(nknown)/skip; \
                    '?' lists candidates; 'w <answer>' previews an answer; 'q' stops";

enum Input {
    Answer(Finding),
    WhatIf(Finding),
    Candidates,
    Quit,
    Help,
}

fn parse_finding(word: &str) -> Option<Finding> {
    match word.to_ascii_lowercase().as_str() {
        "y" | "yes" | "p" | "present" => Some(Finding::Present),
        "n" | "no" | "a" | "absent" => Some(Finding::Absent),
        "u" | "unknown" | "skip" | "s" => Some(Finding::Unknown),
        _ => None,
    }
}

fn parse_input(line: &str) -> Option<Input> {
    let mut words = line.split_whitespace();
    let first = words.next()?;
    let rest = words.next();
    match (first, rest) {
        ("?", None) => Some(Input::Candidates),
        ("q" | "quit" | "exit", None) => Some(Input::Quit),
        ("h" | "help", None) => Some(Input::Help),
        ("w" | "whatif", Some(a)) => parse_finding(a).map(Input::WhatIf),
        (a, None) => parse_finding(a).map(Input::Answer),
        _ => None,
    }
}

fn print_candidates(state: &SessionState, out: &mut dyn Write, limit: usize) -> CliResult {
    for h in state.candidates().iter().take(limit) {
        writeln!(
            out,
            "  {:<20} {:.4}{}",
            format_fault_set(&h.faults),
            h.posterior,
            if h.covers_all { "" } else { "  (partial)" }
        )?;
    }
    Ok(())
}

/// Terminal loop. Text mode prints prompts for a person; JSON mode prints
/// one state object per line for a script driving the session.
pub fn run(a: &ConsultArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult {
    let kb = Arc::new(read_kb(&a.session.kb)?);
    let config = session_config(&a.session, FaultMode::SingleFault)?;
    let mut state = coverdx::start_session(kb, config)?;
    let text = a.format == Format::Text;
    if text {
        writeln!(out, "{HELP}")?;
    }
    let mut line = String::new();
    while state.status() == SessionStatus::InProgress {
        let symptom = state.next_question().expect("in-progress sessions have a question").to_owned();
        if text {
            let node = state.kb().symptom_by_id(&symptom)?;
            write!(out, "Q{} [{}] {} ", state.transcript().len() + 1, node.id, node.prompt())?;
        } else {
            writeln!(out, "{}", state_json(&state))?;
        }
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            if text {
                writeln!(out)?;
            }
            break;
        }
        match parse_input(&line) {
            Some(Input::Answer(f)) => state = coverdx::submit_answer(&state, &symptom, f)?,
            Some(Input::WhatIf(f)) => {
                let preview = coverdx::what_if(&state, &symptom, f)?;
                if text {
                    writeln!(out, "if {symptom} were {f}: {}", preview.status())?;
                    print_candidates(&preview, out, 5)?;
                } else {
                    writeln!(out, "{}", serde_json::json!({"preview": state_json(&preview)}))?;
                }
            }
            Some(Input::Candidates) => print_candidates(&state, out, usize::MAX)?,
            Some(Input::Help) => writeln!(out, "{HELP}")?,
            Some(Input::Quit) => break,
            None => {
                if text {
                    writeln!(out, "unrecognized input; {HELP}")?;
                } else {
                    return Err(CliError::Usage(format!("unrecognized answer {:?}", line.trim())));
                }
            }
        }
    }
    if text {
        write!(out, "{}", state.summary().render_text())?;
    } else {
        writeln!(out, "{}", serde_json::json!({"summary": state.summary()}))?;
    }
    Ok(())
}
