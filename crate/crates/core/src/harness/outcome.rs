use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

impl fmt::Display for ErrorInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ERROR {} ({})", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<String>,
}

/// Result of one statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatementStatus {
    Ok,
    Error(ErrorInfo),
    Crash(CrashInfo),
    Timeout,
    ConnectionLost { message: String },
}

impl StatementStatus {
    /// Statuses after which nothing else in the script runs.
    pub fn is_terminal(&self) -> bool {
        matches!(self, StatementStatus::Crash(_) | StatementStatus::Timeout | StatementStatus::ConnectionLost { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementResult {
    pub index: usize,
    pub status: StatementStatus,
}

/// Overall script result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeKind {
    Clean,
    /// The first error, with the index of the statement that raised it.
    Error { index: usize, error: ErrorInfo },
    Crash { index: usize, crash: CrashInfo },
    Timeout { index: usize, limit_ms: u64 },
    ConnectionLost { index: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub kind: OutcomeKind,
    pub statements: Vec<StatementResult>,
    pub duration_ms: u64,
    pub backend_id: String,
    pub backend_version: String,
}

impl ExecutionOutcome {
    /// Derives the overall kind from per-statement results.
    pub fn from_results(statements: Vec<StatementResult>, limit_ms: u64, duration_ms: u64, backend_id: &str, backend_version: &str) -> Self {
        let mut kind = OutcomeKind::Clean;
        for r in &statements {
            match &r.status {
                StatementStatus::Ok => {}
                StatementStatus::Error(e) => {
                    if kind == OutcomeKind::Clean {
                        kind = OutcomeKind::Error { index: r.index, error: e.clone() };
                    }
                }
                StatementStatus::Crash(c) => kind = OutcomeKind::Crash { index: r.index, crash: c.clone() },
                StatementStatus::Timeout => kind = OutcomeKind::Timeout { index: r.index, limit_ms },
                StatementStatus::ConnectionLost { message } => kind = OutcomeKind::ConnectionLost { index: r.index, message: message.clone() },
            }
        }
        ExecutionOutcome { kind, statements, duration_ms, backend_id: backend_id.to_string(), backend_version: backend_version.to_string() }
    }

    pub fn is_clean(&self) -> bool {
        self.kind == OutcomeKind::Clean
    }

    /// Crash, timeout or lost connection.
    pub fn is_abnormal(&self) -> bool {
        matches!(self.kind, OutcomeKind::Crash { .. } | OutcomeKind::Timeout { .. } | OutcomeKind::ConnectionLost { .. })
    }

    pub fn error(&self) -> Option<&ErrorInfo> {
        match &self.kind {
            OutcomeKind::Error { error, .. } => Some(error),
            _ => None,
        }
    }

    /// Short human-readable symptom: `ERROR 2027`, `crash (SIGSEGV)`,
    /// `timeout`, `connection lost`, or `clean`.
    pub fn symptom(&self) -> String {
        match &self.kind {
            OutcomeKind::Clean => "clean".into(),
            OutcomeKind::Error { error, .. } => format!("ERROR {}", error.code),
            OutcomeKind::Crash { crash, .. } => match &crash.signal {
                Some(s) => format!("crash ({s})"),
                None => "crash".into(),
            },
            OutcomeKind::Timeout { .. } => "timeout".into(),
            OutcomeKind::ConnectionLost { .. } => "connection lost".into(),
        }
    }

    /// Text handed to diagnosis: code and message of the first error, or
    /// the symptom otherwise.
    pub fn feedback(&self) -> String {
        match &self.kind {
            OutcomeKind::Error { index, error } => format!("statement {}: ERROR {}: {}", index + 1, error.code, error.message),
            OutcomeKind::ConnectionLost { message, .. } => format!("connection lost: {message}"),
            _ => self.symptom(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_error_wins_terminal_overrides() {
        let err = |i: usize, c: &str| StatementResult { index: i, status: StatementStatus::Error(ErrorInfo { code: c.into(), message: "m".into() }) };
        let o = ExecutionOutcome::from_results(vec![err(0, "1"), err(1, "2")], 30_000, 0, "b", "v");
        assert_eq!(o.symptom(), "ERROR 1");
        let crash = StatementResult { index: 2, status: StatementStatus::Crash(CrashInfo { signal: Some("SIGSEGV".into()), frames: vec![] }) };
        let o = ExecutionOutcome::from_results(vec![err(0, "1"), crash], 30_000, 0, "b", "v");
        assert!(o.is_abnormal());
        assert_eq!(o.symptom(), "crash (SIGSEGV)");
        assert!(ExecutionOutcome::from_results(vec![], 1, 0, "b", "v").is_clean());
    }
}
