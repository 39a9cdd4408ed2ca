use serde::{Deserialize, Serialize};

use crate::harness::{ExecutionOutcome, OutcomeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionClassValue {
    BugTriggering,
    Pending,
    Problematic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionClass {
    pub value: ExecutionClassValue,
    pub evidence: ExecutionOutcome,
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric() && c != '_').filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

/// Lower-cased word sequence joined by single spaces.
pub fn normalize_text(s: &str) -> String {
    words(s).join(" ")
}

/// Whether an error matches the expected behavior text, by error code as
/// a whole word or by the normalized message as a substring.
pub fn error_matches(code: &str, message: &str, expected: &str) -> bool {
    let exp_words = words(expected);
    if !code.is_empty() && exp_words.iter().any(|w| w.eq_ignore_ascii_case(code)) {
        return true;
    }
    let msg = normalize_text(message);
    let exp = exp_words.join(" ");
    !msg.is_empty() && msg.len() >= 8 && (exp.contains(&msg) || (exp.len() >= 8 && msg.contains(&exp)))
}

pub fn classify_execution(outcome: &ExecutionOutcome, expected_behavior: Option<&str>) -> ExecutionClass {
    let value = match &outcome.kind {
        OutcomeKind::Crash { .. } | OutcomeKind::Timeout { .. } | OutcomeKind::ConnectionLost { .. } => ExecutionClassValue::BugTriggering,
        OutcomeKind::Error { error, .. } => {
            if expected_behavior.is_some_and(|e| error_matches(&error.code, &error.message, e)) {
                ExecutionClassValue::BugTriggering
            } else {
                ExecutionClassValue::Problematic
            }
        }
        OutcomeKind::Clean => ExecutionClassValue::Pending,
    };
    ExecutionClass { value, evidence: outcome.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{CrashInfo, ErrorInfo, StatementResult, StatementStatus};

    fn outcome(status: StatementStatus) -> ExecutionOutcome {
        ExecutionOutcome::from_results(vec![StatementResult { index: 0, status }], 30_000, 0, "b", "1")
    }

    #[test]
    fn classes() {
        let crash = outcome(StatementStatus::Crash(CrashInfo { signal: None, frames: vec![] }));
        assert_eq!(classify_execution(&crash, None).value, ExecutionClassValue::BugTriggering);
        let e2027 = outcome(StatementStatus::Error(ErrorInfo { code: "2027".into(), message: "Malformed packet".into() }));
        assert_eq!(classify_execution(&e2027, Some("ERROR 2027 (HY000): Malformed packet")).value, ExecutionClassValue::BugTriggering);
        assert_eq!(classify_execution(&e2027, Some("ERROR 20271")).value, ExecutionClassValue::Problematic);
        assert_eq!(classify_execution(&e2027, None).value, ExecutionClassValue::Problematic);
        let clean = ExecutionOutcome::from_results(vec![], 30_000, 0, "b", "1");
        assert_eq!(classify_execution(&clean, Some("crash")).value, ExecutionClassValue::Pending);
    }

    #[test]
    fn message_match_without_code() {
        assert!(error_matches("42P01", "relation \"t\" does not exist", "ERROR:  relation \"t\" does not exist"));
        assert!(!error_matches("1", "x", "something else"));
    }
}
