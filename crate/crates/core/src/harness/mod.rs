//! Script execution against pluggable backends, risk assessment and
//! cleanup scheduling.

mod backend;
mod fake;
mod live;
mod outcome;
mod risk;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use backend::{execute, Backend, BackendKind, Execution, Executor, HarnessError, LifecycleAction, LifecycleState, Limits};
pub use fake::{syntax_error, FakeProgram, FakeRule, FakeState, ScriptedFake};
pub use live::{run_shell, CommandOutput, CommandTemplates, LiveBackend, LiveDescriptor};
pub use outcome::{CrashInfo, ErrorInfo, ExecutionOutcome, OutcomeKind, StatementResult, StatementStatus};
pub use risk::{assess_risk, schedule_cleanup, CleanupAction, RiskClass, RiskLevel, RiskRules, RiskRulesError};

/// One configured backend instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    /// DBMS family the backend serves (`mysql`, `mariadb`, ...).
    pub dbms: String,
    /// Fake program file, relative to the config file.
    #[serde(default)]
    pub program: Option<PathBuf>,
    #[serde(default)]
    pub live: Option<LiveDescriptor>,
    /// Newest release of its DBMS; regression replay requires a hit here.
    #[serde(default)]
    pub latest: bool,
    /// A release in which the original bugs are marked fixed.
    #[serde(default)]
    pub fixed: bool,
}

impl BackendSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn Backend>, HarnessError> {
        match self.kind {
            BackendKind::ScriptedFake => {
                let rel = self.program.as_ref().ok_or_else(|| HarnessError::Config(format!("backend {} has no program", self.name)))?;
                let program = FakeProgram::load(&base_dir.join(rel))?;
                Ok(Box::new(ScriptedFake::new(program)?))
            }
            BackendKind::ContainerizedLive => {
                let desc = self.live.clone().ok_or_else(|| HarnessError::Config(format!("backend {} has no live descriptor", self.name)))?;
                Ok(Box::new(LiveBackend::new(desc)?))
            }
        }
    }

    /// Builds, provisions and wraps the backend in an executor.
    pub fn executor(&self, base_dir: &Path, limits: Limits, rules: RiskRules) -> Result<Executor, HarnessError> {
        let mut ex = Executor::new(self.build(base_dir)?).with_limits(limits).with_rules(rules);
        ex.ensure_healthy()?;
        Ok(ex)
    }
}
