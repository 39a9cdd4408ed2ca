//! The execute, classify, diagnose, repair loop.

use serde::{Deserialize, Serialize};

use super::anchors::{capture_anchors, check_constraints, AnchorProfile, ConstraintReport};
use super::classify::{classify_execution, ExecutionClassValue};
use super::kb::{Diagnosis, KnowledgeBase};
use crate::extractor::client::{ClientError, Message, TextClient};
use crate::extractor::envelope::Envelope;
use crate::extractor::extract::query;
use crate::extractor::RawPoc;
use crate::harness::{Execution, ExecutionOutcome, Executor, HarnessError, RiskClass};
use crate::sql::{self, Dialect};

/// Marker that starts a repair request; scripted clients key on it.
pub const REPAIR_MARKER: &str = "Repair target: ";

const REPAIR_SYSTEM: &str = "You repair SQL proof-of-concept scripts taken from DBMS bug reports so that they run on a \
test server. Make the smallest change that fixes the reported failure. Keep every table, column, routine and clause \
of the original; do not simplify the query. If you must rename an object, add a line `RENAME: old -> new`.
Answer with exactly one fenced block:
```envelope
STATEMENTS:
<the complete repaired script, each statement ending with ;>
```";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "symptom", rename_all = "snake_case")]
pub enum Expectation {
    ExpectBug(String),
    ExpectClean,
}

/// One diagnose-and-repair step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationStep {
    pub iteration: usize,
    pub diagnosis: Diagnosis,
    /// The candidate the model proposed; empty if it gave none.
    pub repair: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub renames: Vec<(String, String)>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub statements: Vec<String>,
    pub origin_report_id: String,
    pub expectation: Expectation,
    pub constraint_report: ConstraintReport,
    pub risk_tier: RiskClass,
    pub adaptation_log: Vec<AdaptationStep>,
    /// Loop iterations, counting the final accepting execution.
    pub iterations: usize,
    pub backend_id: String,
}

impl TestCase {
    pub fn script(&self) -> String {
        sql::render_script(&self.statements)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub beta: f64,
    pub max_iters: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig { beta: 0.4, max_iters: 5 }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(format!("adapter beta must be in (0, 1], got {}", self.beta));
        }
        if self.max_iters == 0 {
            return Err("adapter max_iters must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdaptOutcome {
    Adapted { test_case: TestCase },
    Failed { reason: String, log: Vec<AdaptationStep>, last_outcome: Option<ExecutionOutcome> },
}

#[derive(Debug, thiserror::Error)]
pub enum AdaptError {
    #[error("executor unavailable: {0}")]
    Executor(#[from] HarnessError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("unparseable repair: {0}")]
    Unparseable(String),
    #[error("model gave no repair: {0}")]
    Declined(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairCandidate {
    pub statements: Vec<String>,
    pub renames: Vec<(String, String)>,
}

/// What a repair prompt is built from.
pub struct RepairRequest<'a> {
    pub report_id: &'a str,
    pub dialect: Dialect,
    pub statements: &'a [String],
    /// `None` asks for a blind repair with no runtime feedback.
    pub diagnosis: Option<&'a Diagnosis>,
    /// Constraints the previous candidate violated.
    pub violations: &'a [String],
}

pub fn repair_messages(req: &RepairRequest<'_>) -> Vec<Message> {
    let mut task = format!("{REPAIR_MARKER}{}\nDialect: {}\nCurrent script:\n```sql\n{}```\n", req.report_id, req.dialect, sql::render_script(req.statements));
    match req.diagnosis {
        Some(d) => {
            task.push_str(&format!("Diagnosis: {}", d.category));
            if let Some(rule) = &d.matched_rule {
                task.push_str(&format!(" (rule {rule})"));
            }
            task.push('\n');
            if let Some(g) = &d.guidance {
                task.push_str(&format!("Guidance: {g}\n"));
            }
            task.push_str(&format!("Runtime feedback:\n{}\n", d.raw_feedback));
        }
        None => task.push_str("Make the script executable.\n"),
    }
    if !req.violations.is_empty() {
        task.push_str("Your previous repair was rejected because it broke these constraints:\n");
        for v in req.violations {
            task.push_str(&format!("- {v}\n"));
        }
        task.push_str("Keep the original data dependencies and key operations and change less.\n");
    }
    vec![Message::system(REPAIR_SYSTEM), Message::user(task)]
}

pub fn repair_step(req: &RepairRequest<'_>, client: &dyn TextClient) -> Result<RepairCandidate, RepairError> {
    let mut retries = 0;
    match query(client, &repair_messages(req), &mut retries)? {
        Ok(Envelope::Statements { statements, renames, .. }) => Ok(RepairCandidate { statements, renames }),
        Ok(Envelope::InsufficientContext { reason }) => Err(RepairError::Declined(format!("insufficient context {reason}").trim().to_string())),
        Ok(Envelope::NonExtractable { reason }) => Err(RepairError::Declined(reason)),
        Err(e) => Err(RepairError::Unparseable(e)),
    }
}

/// Whether repairs must pass the constraint gate before being adopted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Gate {
    Constraints,
    None,
}

/// Result of the loop before it is turned into a test case.
pub(crate) struct LoopResult {
    pub statements: Vec<String>,
    pub renames: Vec<(String, String)>,
    pub log: Vec<AdaptationStep>,
    pub last: Option<Execution>,
    pub class: Option<ExecutionClassValue>,
    pub iterations: usize,
    /// Accepted within the budget rather than by the final verification run.
    pub settled: bool,
}

pub(crate) fn feedback_loop(
    raw: &RawPoc,
    profile: &AnchorProfile,
    executor: &mut Executor,
    client: &dyn TextClient,
    kb: &KnowledgeBase,
    cfg: &AdaptConfig,
    gate: Gate,
) -> Result<LoopResult, AdaptError> {
    let dialect = executor.dialect();
    let expected = raw.expected_behavior.as_deref();
    let mut current = raw.statements.clone();
    let mut renames: Vec<(String, String)> = Vec::new();
    let mut log = Vec::new();
    let mut violations: Vec<String> = Vec::new();
    let mut last: Option<Execution> = None;
    for iter in 1..=cfg.max_iters {
        // Re-run only when the script changed since the last execution.
        if last.is_none() || log.last().is_some_and(|s: &AdaptationStep| s.accepted) {
            executor.ensure_healthy()?;
            last = Some(executor.execute(&current)?);
        }
        let exec = last.as_ref().expect("executed above");
        let class = classify_execution(&exec.outcome, expected).value;
        if class != ExecutionClassValue::Problematic {
            return Ok(LoopResult { statements: current, renames, log, last, class: Some(class), iterations: iter, settled: true });
        }
        let diagnosis = kb.diagnose(&exec.outcome.feedback());
        let req = RepairRequest { report_id: &raw.report_id, dialect, statements: &current, diagnosis: Some(&diagnosis), violations: &violations };
        let mut step = AdaptationStep { iteration: iter, diagnosis: diagnosis.clone(), repair: vec![], renames: vec![], accepted: false, violations: vec![] };
        match repair_step(&req, client) {
            Ok(cand) => {
                let mut all = renames.clone();
                all.extend(cand.renames.iter().cloned());
                let report = check_constraints(&raw.statements, &cand.statements, profile, cfg.beta, &all, dialect);
                step.repair = cand.statements.clone();
                step.renames = cand.renames.clone();
                step.violations = report.violations();
                step.accepted = gate == Gate::None || report.overall;
                if step.accepted {
                    current = cand.statements;
                    renames = all;
                    violations.clear();
                } else {
                    violations = step.violations.clone();
                }
            }
            Err(RepairError::Client(e)) => return Err(e.into()),
            Err(e) => step.violations = vec![e.to_string()],
        }
        log.push(step);
    }
    // Budget spent: report the state of the last adopted script.
    let mut class = None;
    if log.last().is_some_and(|s| s.accepted) {
        executor.ensure_healthy()?;
        let exec = executor.execute(&current)?;
        class = Some(classify_execution(&exec.outcome, expected).value);
        last = Some(exec);
    } else if let Some(e) = &last {
        class = Some(classify_execution(&e.outcome, expected).value);
    }
    Ok(LoopResult { statements: current, renames, log, last, class, iterations: cfg.max_iters, settled: false })
}

/// Adapts a raw PoC into a test case on `executor`.
pub fn adapt(raw: &RawPoc, executor: &mut Executor, client: &dyn TextClient, kb: &KnowledgeBase, cfg: &AdaptConfig) -> Result<AdaptOutcome, AdaptError> {
    let dialect = executor.dialect();
    let profile = capture_anchors(&raw.statements, dialect);
    let r = feedback_loop(raw, &profile, executor, client, kb, cfg, Gate::Constraints)?;
    match (r.settled, r.class, r.last) {
        (true, Some(class), Some(exec)) => {
            let expectation = match class {
                ExecutionClassValue::BugTriggering => Expectation::ExpectBug(exec.outcome.symptom()),
                _ => Expectation::ExpectClean,
            };
            let constraint_report = check_constraints(&raw.statements, &r.statements, &profile, cfg.beta, &r.renames, dialect);
            Ok(AdaptOutcome::Adapted {
                test_case: TestCase {
                    statements: r.statements,
                    origin_report_id: raw.report_id.clone(),
                    expectation,
                    constraint_report,
                    risk_tier: exec.risk,
                    adaptation_log: r.log,
                    iterations: r.iterations,
                    backend_id: exec.outcome.backend_id,
                },
            })
        }
        (_, _, last) => Ok(AdaptOutcome::Failed {
            reason: "budget_exhausted".into(),
            last_outcome: last.map(|e| e.outcome),
            log: r.log,
        }),
    }
}
