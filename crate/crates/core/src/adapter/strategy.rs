//! Comparison of adaptation strategies on a sample of raw PoCs.
//!
//! Only the two automatable rates are reported: the share of cases that end
//! executable (bug-triggering or clean) and the share whose final script
//! still satisfies the semantic constraints. Manual semantic-consistency
//! review is out of scope.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adapt::{adapt, feedback_loop, repair_step, AdaptConfig, AdaptError, AdaptOutcome, Gate, RepairError, RepairRequest};
use super::anchors::{capture_anchors, check_constraints};
use super::classify::{classify_execution, ExecutionClassValue};
use super::kb::KnowledgeBase;
use crate::extractor::client::TextClient;
use crate::extractor::RawPoc;
use crate::harness::Executor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyMode {
    /// Feedback-driven repair, no constraint gate.
    #[serde(rename = "F")]
    Feedback,
    /// One constraint-gated repair without runtime feedback.
    #[serde(rename = "S")]
    Semantic,
    /// The full adaptation loop.
    #[serde(rename = "F+S")]
    Combined,
}

impl fmt::Display for StrategyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyMode::Feedback => "F",
            StrategyMode::Semantic => "S",
            StrategyMode::Combined => "F+S",
        })
    }
}

impl FromStr for StrategyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" => Ok(StrategyMode::Feedback),
            "S" => Ok(StrategyMode::Semantic),
            "F+S" | "FS" => Ok(StrategyMode::Combined),
            other => Err(format!("unknown strategy mode `{other}` (expected F, S or F+S)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub report_id: String,
    pub executable: bool,
    pub rich: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub mode: StrategyMode,
    pub cases: usize,
    pub executable: usize,
    pub rich: usize,
    pub executable_rate: f64,
    pub richness_rate: f64,
    pub per_case: Vec<CaseResult>,
}

fn executable(class: Option<ExecutionClassValue>) -> bool {
    matches!(class, Some(ExecutionClassValue::BugTriggering | ExecutionClassValue::Pending))
}

fn run_case(raw: &RawPoc, mode: StrategyMode, executor: &mut Executor, client: &dyn TextClient, kb: &KnowledgeBase, cfg: &AdaptConfig) -> Result<CaseResult, AdaptError> {
    let dialect = executor.dialect();
    let profile = capture_anchors(&raw.statements, dialect);
    let rich = |stmts: &[String], renames: &[(String, String)]| check_constraints(&raw.statements, stmts, &profile, cfg.beta, renames, dialect).overall;
    let (ok, rich) = match mode {
        StrategyMode::Combined => match adapt(raw, executor, client, kb, cfg)? {
            AdaptOutcome::Adapted { test_case } => (true, test_case.constraint_report.overall),
            AdaptOutcome::Failed { log, .. } => {
                let adopted = log.iter().rev().find(|s| s.accepted);
                let r = match adopted {
                    Some(s) => rich(&s.repair, &s.renames),
                    None => true,
                };
                (false, r)
            }
        },
        StrategyMode::Feedback => {
            let r = feedback_loop(raw, &profile, executor, client, kb, cfg, Gate::None)?;
            (executable(r.class), rich(&r.statements, &r.renames))
        }
        StrategyMode::Semantic => {
            executor.ensure_healthy()?;
            let first = executor.execute(&raw.statements)?;
            let class = classify_execution(&first.outcome, raw.expected_behavior.as_deref()).value;
            if class != ExecutionClassValue::Problematic {
                (true, true)
            } else {
                let req = RepairRequest { report_id: &raw.report_id, dialect, statements: &raw.statements, diagnosis: None, violations: &[] };
                match repair_step(&req, client) {
                    Ok(cand) if rich(&cand.statements, &cand.renames) => {
                        executor.ensure_healthy()?;
                        let second = executor.execute(&cand.statements)?;
                        (executable(Some(classify_execution(&second.outcome, raw.expected_behavior.as_deref()).value)), true)
                    }
                    Ok(_) | Err(RepairError::Unparseable(_)) | Err(RepairError::Declined(_)) => (false, true),
                    Err(RepairError::Client(e)) => return Err(e.into()),
                }
            }
        }
    };
    Ok(CaseResult { report_id: raw.report_id.clone(), executable: ok, rich })
}

pub fn strategy_report(
    cases: &[RawPoc],
    mode: StrategyMode,
    executor: &mut Executor,
    client: &dyn TextClient,
    kb: &KnowledgeBase,
    cfg: &AdaptConfig,
) -> Result<StrategyReport, AdaptError> {
    let mut per_case = Vec::new();
    for raw in cases {
        per_case.push(run_case(raw, mode, executor, client, kb, cfg)?);
    }
    let n = per_case.len();
    let executable = per_case.iter().filter(|c| c.executable).count();
    let rich = per_case.iter().filter(|c| c.rich).count();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(StrategyReport { mode, cases: n, executable, rich, executable_rate: rate(executable), richness_rate: rate(rich), per_case })
}

/// Plain-text table with one row per mode.
pub fn render_strategy_table(reports: &[StrategyReport]) -> String {
    let mut s = format!("{:<6} {:>6} {:>12} {:>10}\n", "Mode", "Cases", "Executable", "Richness");
    for r in reports {
        s.push_str(&format!("{:<6} {:>6} {:>11.1}% {:>9.1}%\n", r.mode.to_string(), r.cases, r.executable_rate * 100.0, r.richness_rate * 100.0));
    }
    s
}
