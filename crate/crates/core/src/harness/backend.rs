use std::fmt;

use serde::{Deserialize, Serialize};

use super::outcome::{ErrorInfo, ExecutionOutcome};
use super::risk::{schedule_cleanup, CleanupAction, RiskClass, RiskRules};
use crate::sql::Dialect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ScriptedFake,
    ContainerizedLive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleState {
    Absent,
    Provisioned,
    Healthy,
    Degraded,
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LifecycleState::Absent => "absent",
            LifecycleState::Provisioned => "provisioned",
            LifecycleState::Healthy => "healthy",
            LifecycleState::Degraded => "degraded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleAction {
    Provision,
    HealthCheck,
    Reset,
    Teardown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub timeout_ms: u64,
    pub max_output_bytes: usize,
    pub stop_on_error: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { timeout_ms: 30_000, max_output_bytes: 1 << 20, stop_on_error: true }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("backend {id} is {state}, not healthy")]
    BackendUnhealthy { id: String, state: LifecycleState },
    #[error("provisioning failed: {0}")]
    ProvisioningFailure(String),
    #[error("health check failed: {0}")]
    HealthCheckFailed(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A DBMS the harness can run scripts against.
pub trait Backend: Send {
    fn id(&self) -> &str;
    fn kind(&self) -> BackendKind;
    fn dialect(&self) -> Dialect;
    fn version(&self) -> &str;
    fn state(&self) -> LifecycleState;
    fn lifecycle(&mut self, action: LifecycleAction) -> Result<LifecycleState, HarnessError>;
    /// Runs statements in order without any cleanup. Only valid when healthy.
    fn run_script(&mut self, statements: &[String], limits: &Limits) -> Result<ExecutionOutcome, HarnessError>;
    fn cleanup(&mut self, action: CleanupAction) -> Result<LifecycleState, HarnessError>;
    /// Objects left in the user schema, as `kind:name`.
    fn user_objects(&mut self) -> Result<Vec<String>, HarnessError>;
    /// Syntax-only validation; `None` for statements that parse.
    fn dry_run(&mut self, statements: &[String]) -> Result<Vec<Option<ErrorInfo>>, HarnessError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub outcome: ExecutionOutcome,
    pub risk: RiskClass,
    pub cleanup: CleanupAction,
}

/// Runs `statements` on a healthy backend, then applies the cleanup the
/// script's risk calls for. Abnormal termination escalates cleanup to at
/// least a restart, since the server process itself went away.
pub fn execute(backend: &mut dyn Backend, statements: &[String], limits: &Limits, rules: &RiskRules) -> Result<Execution, HarnessError> {
    if backend.state() != LifecycleState::Healthy {
        return Err(HarnessError::BackendUnhealthy { id: backend.id().to_string(), state: backend.state() });
    }
    let risk = rules.assess(statements);
    let mut cleanup = schedule_cleanup(&risk);
    let outcome = match backend.run_script(statements, limits) {
        Ok(o) => o,
        Err(e) => {
            let _ = backend.cleanup(cleanup.max(CleanupAction::RestartAndVerify));
            return Err(e);
        }
    };
    if outcome.is_abnormal() {
        cleanup = cleanup.max(CleanupAction::RestartAndVerify);
    }
    log::debug!("{}: {} -> cleanup {cleanup}", backend.id(), outcome.symptom());
    backend.cleanup(cleanup)?;
    Ok(Execution { outcome, risk, cleanup })
}

/// A backend bundled with the limits and risk rules every execution uses.
pub struct Executor {
    pub backend: Box<dyn Backend>,
    pub limits: Limits,
    pub rules: RiskRules,
}

impl Executor {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Executor { backend, limits: Limits::default(), rules: RiskRules::default() }
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_rules(mut self, rules: RiskRules) -> Self {
        self.rules = rules;
        self
    }

    /// Provisions the backend if needed and waits for it to be healthy.
    pub fn ensure_healthy(&mut self) -> Result<(), HarnessError> {
        if self.backend.state() == LifecycleState::Absent {
            self.backend.lifecycle(LifecycleAction::Provision)?;
        }
        match self.backend.state() {
            LifecycleState::Healthy => Ok(()),
            LifecycleState::Provisioned => self.backend.lifecycle(LifecycleAction::HealthCheck).map(|_| ()),
            _ => self.backend.lifecycle(LifecycleAction::Reset).map(|_| ()),
        }
    }

    pub fn execute(&mut self, statements: &[String]) -> Result<Execution, HarnessError> {
        execute(self.backend.as_mut(), statements, &self.limits, &self.rules)
    }

    pub fn dialect(&self) -> Dialect {
        self.backend.dialect()
    }
}
