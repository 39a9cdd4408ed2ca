//! Container-backed DBMS driven through shell command templates.
//!
//! Templates may use `{container}`, `{image}` and `{database}`. The `exec`
//! template receives the script on stdin and must stop at the first error,
//! printing it to stderr in a form `error_pattern` recognises.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendKind, HarnessError, LifecycleAction, LifecycleState, Limits};
use super::fake::syntax_error;
use super::outcome::{CrashInfo, ErrorInfo, ExecutionOutcome, StatementResult, StatementStatus};
use super::risk::CleanupAction;
use crate::sql::Dialect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandTemplates {
    pub provision: String,
    pub health: String,
    pub exec: String,
    pub restart: String,
    pub teardown: String,
    pub clean: String,
    /// Prints one `kind:name` per line for objects in the user schema.
    pub list_objects: String,
    /// Optional per-statement syntax check reading the statement on stdin.
    #[serde(default)]
    pub syntax_check: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveDescriptor {
    pub id: String,
    pub dialect: Dialect,
    pub version: String,
    pub image: String,
    #[serde(default)]
    pub container: Option<String>,
    #[serde(default = "default_database")]
    pub database: String,
    pub commands: CommandTemplates,
    /// Regex with named groups `code`, `message` and optionally `line`.
    pub error_pattern: String,
    #[serde(default = "default_lost")]
    pub lost_connection_pattern: String,
    #[serde(default = "default_ready_retries")]
    pub ready_retries: u32,
    #[serde(default = "default_ready_interval")]
    pub ready_interval_ms: u64,
}

fn default_database() -> String {
    "test".into()
}
fn default_lost() -> String {
    r"(?i)lost connection|server has gone away|server closed the connection|connection to server .* lost|terminated abnormally".into()
}
fn default_ready_retries() -> u32 {
    30
}
fn default_ready_interval() -> u64 {
    2000
}

#[derive(Debug)]
pub struct CommandOutput {
    pub code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

impl CommandOutput {
    pub fn success(&self) -> bool {
        self.code == Some(0) && !self.timed_out
    }
}

/// Runs `sh -c cmd`, feeding `stdin`, killing the child after `timeout`.
pub fn run_shell(cmd: &str, stdin: Option<&str>, timeout: Duration, max_output: usize) -> std::io::Result<CommandOutput> {
    let mut child = Command::new("sh").arg("-c").arg(cmd).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn()?;
    let input = stdin.unwrap_or_default().to_string();
    let mut pipe_in = child.stdin.take();
    let writer = thread::spawn(move || {
        if let Some(p) = pipe_in.as_mut() {
            let _ = p.write_all(input.as_bytes());
        }
    });
    let reader = |r: Option<Box<dyn Read + Send>>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            if let Some(mut r) = r {
                let _ = r.by_ref().take(max_output as u64).read_to_end(&mut buf);
                let _ = std::io::copy(&mut r, &mut std::io::sink());
            }
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = reader(child.stdout.take().map(|s| Box::new(s) as Box<dyn Read + Send>));
    let err = reader(child.stderr.take().map(|s| Box::new(s) as Box<dyn Read + Send>));
    let start = Instant::now();
    let mut timed_out = false;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            timed_out = true;
            break child.wait().ok();
        }
        thread::sleep(Duration::from_millis(20));
    };
    let _ = writer.join();
    Ok(CommandOutput {
        code: status.and_then(|s| s.code()),
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        timed_out,
    })
}

pub struct LiveBackend {
    desc: LiveDescriptor,
    container: String,
    error_re: Regex,
    lost_re: Regex,
    lifecycle: LifecycleState,
}

impl LiveBackend {
    pub fn new(desc: LiveDescriptor) -> Result<Self, HarnessError> {
        let error_re = Regex::new(&desc.error_pattern).map_err(|e| HarnessError::Config(format!("error_pattern: {e}")))?;
        let lost_re = Regex::new(&desc.lost_connection_pattern).map_err(|e| HarnessError::Config(format!("lost_connection_pattern: {e}")))?;
        let container = desc.container.clone().unwrap_or_else(|| format!("bugrepo-{}", desc.id.replace(|c: char| !c.is_ascii_alphanumeric(), "-")));
        Ok(LiveBackend { desc, container, error_re, lost_re, lifecycle: LifecycleState::Absent })
    }

    pub fn descriptor(&self) -> &LiveDescriptor {
        &self.desc
    }

    fn render(&self, template: &str) -> String {
        template.replace("{container}", &self.container).replace("{image}", &self.desc.image).replace("{database}", &self.desc.database)
    }

    fn shell(&self, template: &str, stdin: Option<&str>, timeout: Duration) -> Result<CommandOutput, HarnessError> {
        let cmd = self.render(template);
        log::debug!("{}: {cmd}", self.desc.id);
        Ok(run_shell(&cmd, stdin, timeout, 1 << 20)?)
    }

    fn healthy_now(&self) -> bool {
        self.shell(&self.desc.commands.health, None, Duration::from_secs(10)).map(|o| o.success()).unwrap_or(false)
    }

    fn wait_healthy(&mut self) -> Result<(), HarnessError> {
        for _ in 0..self.desc.ready_retries.max(1) {
            if self.healthy_now() {
                self.lifecycle = LifecycleState::Healthy;
                return Ok(());
            }
            thread::sleep(Duration::from_millis(self.desc.ready_interval_ms));
        }
        Err(HarnessError::HealthCheckFailed(format!("{} did not become healthy", self.desc.id)))
    }

    fn must(&self, template: &str, what: &str) -> Result<CommandOutput, HarnessError> {
        let out = self.shell(template, None, Duration::from_secs(300))?;
        if !out.success() {
            return Err(HarnessError::ProvisioningFailure(format!("{what} failed for {}: {}", self.desc.id, out.stderr.trim())));
        }
        Ok(out)
    }

    /// Renders the script and records the first line of every statement.
    fn script(statements: &[String]) -> (String, Vec<usize>) {
        let mut text = String::new();
        let mut starts = Vec::new();
        let mut line = 1;
        for s in statements {
            let custom = s.contains(';');
            if custom {
                text.push_str("DELIMITER $$\n");
                line += 1;
            }
            starts.push(line);
            text.push_str(s);
            text.push_str(if custom { "\n$$\nDELIMITER ;\n" } else { ";\n" });
            line += s.matches('\n').count() + if custom { 3 } else { 1 };
        }
        (text, starts)
    }

    fn run_batch(&mut self, statements: &[String], limits: &Limits) -> Result<Vec<StatementResult>, HarnessError> {
        let (text, starts) = Self::script(statements);
        let out = self.shell(&self.desc.commands.exec, Some(&text), Duration::from_millis(limits.timeout_ms))?;
        let last = statements.len().saturating_sub(1);
        let failing = |line: Option<usize>| line.map(|l| starts.iter().rposition(|&s| s <= l).unwrap_or(0)).unwrap_or(last);
        let ok_until = |n: usize| (0..n).map(|index| StatementResult { index, status: StatementStatus::Ok }).collect::<Vec<_>>();
        if out.timed_out {
            let mut r = ok_until(last);
            r.push(StatementResult { index: last, status: StatementStatus::Timeout });
            self.lifecycle = LifecycleState::Degraded;
            return Ok(r);
        }
        if out.success() {
            return Ok(ok_until(statements.len()));
        }
        let caps = self.error_re.captures(&out.stderr);
        let line = caps.as_ref().and_then(|c| c.name("line")).and_then(|m| m.as_str().parse().ok());
        let idx = failing(line);
        let mut r = ok_until(idx);
        if self.lost_re.is_match(&out.stderr) || caps.is_none() {
            let message = out.stderr.trim().lines().last().unwrap_or("client exited abnormally").to_string();
            let status = if self.healthy_now() {
                StatementStatus::ConnectionLost { message }
            } else {
                StatementStatus::Crash(CrashInfo { signal: out.code.map(|c| format!("exit {c}")), frames: vec![] })
            };
            self.lifecycle = LifecycleState::Degraded;
            r.push(StatementResult { index: idx, status });
            return Ok(r);
        }
        let c = caps.expect("checked above");
        let error = ErrorInfo {
            code: c.name("code").map(|m| m.as_str().to_string()).unwrap_or_default(),
            message: c.name("message").map(|m| m.as_str().trim().to_string()).unwrap_or_default(),
        };
        r.push(StatementResult { index: idx, status: StatementStatus::Error(error) });
        Ok(r)
    }
}

impl Backend for LiveBackend {
    fn id(&self) -> &str {
        &self.desc.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::ContainerizedLive
    }

    fn dialect(&self) -> Dialect {
        self.desc.dialect
    }

    fn version(&self) -> &str {
        &self.desc.version
    }

    fn state(&self) -> LifecycleState {
        self.lifecycle
    }

    fn lifecycle(&mut self, action: LifecycleAction) -> Result<LifecycleState, HarnessError> {
        match action {
            LifecycleAction::Provision => {
                if self.lifecycle == LifecycleState::Absent {
                    self.must(&self.desc.commands.provision.clone(), "provision")?;
                    self.lifecycle = LifecycleState::Provisioned;
                    self.wait_healthy().map_err(|e| HarnessError::ProvisioningFailure(e.to_string()))?;
                }
            }
            LifecycleAction::HealthCheck => {
                if self.lifecycle == LifecycleState::Absent {
                    return Err(HarnessError::HealthCheckFailed(format!("{} is not provisioned", self.desc.id)));
                }
                if !self.healthy_now() {
                    self.lifecycle = LifecycleState::Degraded;
                    return Err(HarnessError::HealthCheckFailed(format!("{} did not answer the health query", self.desc.id)));
                }
                self.lifecycle = LifecycleState::Healthy;
            }
            LifecycleAction::Reset => {
                if self.lifecycle == LifecycleState::Absent {
                    return Err(HarnessError::BackendUnhealthy { id: self.desc.id.clone(), state: LifecycleState::Absent });
                }
                self.cleanup(CleanupAction::RestartAndVerify)?;
            }
            LifecycleAction::Teardown => {
                let _ = self.shell(&self.desc.commands.teardown, None, Duration::from_secs(120));
                self.lifecycle = LifecycleState::Absent;
            }
        }
        Ok(self.lifecycle)
    }

    fn run_script(&mut self, statements: &[String], limits: &Limits) -> Result<ExecutionOutcome, HarnessError> {
        if self.lifecycle != LifecycleState::Healthy {
            return Err(HarnessError::BackendUnhealthy { id: self.desc.id.clone(), state: self.lifecycle });
        }
        let start = Instant::now();
        let mut results = Vec::new();
        if !statements.is_empty() {
            if limits.stop_on_error {
                results = self.run_batch(statements, limits)?;
            } else {
                for (i, s) in statements.iter().enumerate() {
                    let mut r = self.run_batch(std::slice::from_ref(s), limits)?;
                    let Some(mut one) = r.pop() else { continue };
                    one.index = i;
                    let terminal = one.status.is_terminal();
                    results.push(one);
                    if terminal {
                        break;
                    }
                }
            }
        }
        let ms = start.elapsed().as_millis() as u64;
        Ok(ExecutionOutcome::from_results(results, limits.timeout_ms, ms, &self.desc.id, &self.desc.version))
    }

    fn cleanup(&mut self, action: CleanupAction) -> Result<LifecycleState, HarnessError> {
        if self.lifecycle == LifecycleState::Absent {
            return Err(HarnessError::BackendUnhealthy { id: self.desc.id.clone(), state: LifecycleState::Absent });
        }
        match action {
            CleanupAction::ReinstallContainer => {
                let _ = self.shell(&self.desc.commands.teardown, None, Duration::from_secs(120));
                self.lifecycle = LifecycleState::Absent;
                self.lifecycle(LifecycleAction::Provision)?;
            }
            CleanupAction::RestartAndVerify => {
                self.must(&self.desc.commands.restart.clone(), "restart")?;
                self.wait_healthy()?;
            }
            CleanupAction::CleanDatabase => {}
        }
        if self.lifecycle == LifecycleState::Healthy {
            self.must(&self.desc.commands.clean.clone(), "clean")?;
        }
        Ok(self.lifecycle)
    }

    fn user_objects(&mut self) -> Result<Vec<String>, HarnessError> {
        let out = self.shell(&self.desc.commands.list_objects, None, Duration::from_secs(60))?;
        if !out.success() {
            return Err(HarnessError::HealthCheckFailed(format!("listing objects: {}", out.stderr.trim())));
        }
        Ok(out.stdout.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
    }

    fn dry_run(&mut self, statements: &[String]) -> Result<Vec<Option<ErrorInfo>>, HarnessError> {
        let Some(tpl) = self.desc.commands.syntax_check.clone() else {
            return Ok(statements.iter().map(|s| syntax_error(self.desc.dialect, s)).collect());
        };
        let mut out = Vec::new();
        for s in statements {
            let o = self.shell(&tpl, Some(&format!("{s};\n")), Duration::from_secs(30))?;
            out.push(if o.success() {
                None
            } else {
                let c = self.error_re.captures(&o.stderr);
                Some(ErrorInfo {
                    code: c.as_ref().and_then(|c| c.name("code")).map(|m| m.as_str().to_string()).unwrap_or_default(),
                    message: c.as_ref().and_then(|c| c.name("message")).map(|m| m.as_str().trim().to_string()).unwrap_or_else(|| o.stderr.trim().to_string()),
                })
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_line_map() {
        let (text, starts) = LiveBackend::script(&["SELECT 1".into(), "CREATE PROCEDURE p() BEGIN SELECT 1; END".into(), "SELECT\n2".into()]);
        assert_eq!(starts, vec![1, 3, 6]);
        assert_eq!(text.lines().nth(2).unwrap(), "CREATE PROCEDURE p() BEGIN SELECT 1; END");
        assert_eq!(text.lines().nth(5).unwrap(), "SELECT");
    }

    #[test]
    fn shell_timeout_and_output() {
        let o = run_shell("cat", Some("hello"), Duration::from_secs(5), 1024).unwrap();
        assert!(o.success());
        assert_eq!(o.stdout, "hello");
        let o = run_shell("sleep 5", None, Duration::from_millis(100), 1024).unwrap();
        assert!(o.timed_out);
    }
}
