//! Prompt assembly for PoC extraction.

use std::collections::BTreeMap;

use super::client::Message;
use super::envelope::{render_envelope, Envelope};
use super::library::{Exemplar, Polarity};
use crate::fragmenter::{CaptureStage, Fragment};
use crate::repository::BugReport;

/// Marker that starts the task section; scripted clients key on it.
pub const TARGET_MARKER: &str = "Target report: ";
pub const CONTEXT_HEADER: &str = "Nearby report lines:";
const NO_REFERENCES: &str = "No reference cases are available for this report.";

const SYSTEM: &str = "You are a DBMS bug-report analysis tool. You read bug reports about database systems and \
extract the SQL proof-of-concept the reporter used to trigger the bug, as faithfully as the report allows.";

const EXTRACTION: &str = "Work in three steps.
1. Extraction: using the report summary and the PoC-related fragments, write out the ordered SQL statements \
that reproduce the bug. Keep the reporter's statements, identifiers and literals. Drop client prompts, result \
tables and server output.
2. Expansion on demand: if the fragments are not enough to decide whether the report contains an executable PoC, \
or to check your answer, reply INSUFFICIENT_CONTEXT and nearby report lines will be added.
3. Self-examination: before answering, check that every table, column and routine you use appears in the \
report or is created by an earlier statement, that every statement is SQL, and that nothing unrelated was added.

Answer with exactly one fenced block:
```envelope
STATEMENTS:
<one or more SQL statements, each ending with ;>
EXPECTED: <optional symptom quoted from the report>
```
or
```envelope
INSUFFICIENT_CONTEXT
```
or
```envelope
NON_EXTRACTABLE: <reason>
```
If you rename an object, add a line `RENAME: old -> new`.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system: String,
    pub extraction: String,
    pub references: String,
    pub task: String,
    /// Indices of fragments left out to fit the budget.
    pub dropped_fragments: Vec<usize>,
    pub dropped_references: usize,
}

impl PromptBundle {
    pub fn messages(&self) -> Vec<Message> {
        vec![
            Message::system(format!("{}\n\n{}", self.system, self.extraction)),
            Message::user(format!("{}\n\n{}", self.references, self.task)),
        ]
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.system) + estimate_tokens(&self.extraction) + estimate_tokens(&self.references) + estimate_tokens(&self.task)
    }
}

/// Rough token count: one token per four characters.
pub fn estimate_tokens(s: &str) -> usize {
    s.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("no fragments to build a prompt from")]
    NoFragments,
    #[error("prompt needs {needed} tokens after truncation, budget is {budget}")]
    TokenBudgetExceeded { needed: usize, budget: usize },
}

pub fn render_reference(n: usize, ex: &Exemplar) -> String {
    let polarity = match ex.polarity {
        Polarity::Positive => "positive",
        Polarity::Negative => "negative",
    };
    let mut s = format!("Reference R{n} ({polarity}, {})\nSummary: {}\nFragments:\n{}\nReasoning:\n", ex.id, ex.report_summary, ex.fragments_digest);
    for (i, step) in ex.reasoning_trace.iter().enumerate() {
        s.push_str(&format!("{}. {step}\n", i + 1));
    }
    s.push_str("Answer:\n");
    let env = match (&ex.polarity, &ex.raw_poc) {
        (Polarity::Positive, Some(p)) => {
            Envelope::Statements { statements: p.statements.clone(), renames: vec![], expected: p.expected_behavior.clone() }
        }
        _ => {
            let reason = ex
                .reasoning_trace
                .iter()
                .rev()
                .find_map(|t| t.split_once(':').filter(|(h, _)| h.to_ascii_lowercase().contains("non-extractable")).map(|(_, r)| r.trim().to_string()))
                .unwrap_or_else(|| "no executable SQL in report".into());
            Envelope::NonExtractable { reason }
        }
    };
    s.push_str(&render_envelope(&env));
    s
}

fn render_references(refs: &[Exemplar]) -> String {
    if refs.is_empty() {
        return format!("Reference cases:\n{NO_REFERENCES}");
    }
    let mut s = String::from("Reference cases:\n");
    for (i, e) in refs.iter().enumerate() {
        s.push('\n');
        s.push_str(&render_reference(i + 1, e));
    }
    s
}

pub fn render_fragment(idx: usize, f: &Fragment) -> String {
    let last = f.end_index().saturating_sub(1).max(f.start_index);
    format!("[F{idx}] {}, lines {}-{}\n{}\n", f.capture_stage, f.start_index, last, f.lines.join("\n"))
}

fn render_task(report: &BugReport, fragments: &[Fragment], keep: &[bool], context: &BTreeMap<usize, String>) -> String {
    let mut s = format!("{TARGET_MARKER}{}\nSummary: {}\n\nPoC-related fragments:\n", report.id, report.summary());
    for (i, f) in fragments.iter().enumerate() {
        if keep[i] {
            s.push_str(&render_fragment(i, f));
        }
    }
    if !context.is_empty() {
        s.push('\n');
        s.push_str(CONTEXT_HEADER);
        s.push('\n');
        for (i, l) in context {
            s.push_str(&format!("L{i}: {l}\n"));
        }
    }
    s
}

/// Builds the four-part prompt. If it exceeds `budget` tokens, drops
/// scored lines (earliest first), then backtracked statements, then
/// references (lowest ranked first). Formatted blocks are never dropped.
pub fn build_prompt(
    report: &BugReport,
    fragments: &[Fragment],
    exemplars: &[Exemplar],
    context: &BTreeMap<usize, String>,
    budget: usize,
) -> Result<PromptBundle, PromptError> {
    if fragments.is_empty() {
        return Err(PromptError::NoFragments);
    }
    let mut keep = vec![true; fragments.len()];
    let mut refs: Vec<Exemplar> = exemplars.to_vec();
    let mut drop_order: Vec<usize> = Vec::new();
    for stage in [CaptureStage::ScoredLine, CaptureStage::BacktrackedStatement] {
        let mut idx: Vec<usize> = (0..fragments.len()).filter(|&i| fragments[i].capture_stage == stage).collect();
        idx.sort_by_key(|&i| fragments[i].start_index);
        drop_order.extend(idx);
    }
    let mut dropped_fragments = Vec::new();
    let mut dropped_references = 0;
    let mut next = drop_order.into_iter();
    loop {
        let bundle = PromptBundle {
            system: SYSTEM.to_string(),
            extraction: EXTRACTION.to_string(),
            references: render_references(&refs),
            task: render_task(report, fragments, &keep, context),
            dropped_fragments: dropped_fragments.clone(),
            dropped_references,
        };
        let needed = bundle.estimated_tokens();
        if needed <= budget {
            return Ok(bundle);
        }
        if let Some(i) = next.next() {
            keep[i] = false;
            dropped_fragments.push(i);
        } else if refs.pop().is_some() {
            dropped_references += 1;
        } else {
            return Err(PromptError::TokenBudgetExceeded { needed, budget });
        }
    }
}
