//! A deterministic in-process stand-in for a DBMS.
//!
//! A program (TOML) gives the fake an identity and an ordered list of
//! rules that force outcomes for matching statements. Statements no rule
//! forces are checked for syntax and simulated against a small catalog:
//! relations, routines, triggers, globals, plugins, roles, users and
//! extensions. Cleanup levels reset progressively more of that state.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::backend::{Backend, BackendKind, HarnessError, LifecycleAction, LifecycleState, Limits};
use super::outcome::{ErrorInfo, ExecutionOutcome, StatementResult, StatementStatus};
use super::risk::CleanupAction;
use crate::sql::{self, Dialect, ObjectKind, TokenKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FakeRule {
    #[serde(default)]
    pub name: Option<String>,
    /// Case-insensitive regex over the whitespace-collapsed statement.
    #[serde(default)]
    pub pattern: Option<String>,
    /// Zero-based statement position within the script.
    #[serde(default)]
    pub position: Option<usize>,
    #[serde(default)]
    pub when_global: BTreeMap<String, String>,
    #[serde(default)]
    pub unless_global: BTreeMap<String, String>,
    /// `kind:name` or bare `name` entries that must exist.
    #[serde(default)]
    pub when_objects: Vec<String>,
    #[serde(default)]
    pub unless_objects: Vec<String>,
    /// Regexes that must each match some earlier statement of the script.
    #[serde(default)]
    pub when_history: Vec<String>,
    pub result: StatementStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FakeProgram {
    pub id: String,
    #[serde(default)]
    pub dialect: Dialect,
    #[serde(default = "default_version")]
    pub version: String,
    /// Global variables at provision time.
    #[serde(default)]
    pub globals: BTreeMap<String, String>,
    #[serde(default, rename = "rule")]
    pub rules: Vec<FakeRule>,
    /// Forced result for statements no rule matched; simulation when unset.
    #[serde(default)]
    pub default: Option<StatementStatus>,
}

fn default_version() -> String {
    "0.0.0".into()
}

impl FakeProgram {
    pub fn new(id: &str, dialect: Dialect, version: &str) -> Self {
        FakeProgram { id: id.into(), dialect, version: version.into(), globals: BTreeMap::new(), rules: vec![], default: None }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("fake program: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

/// Observable state of the fake server.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct FakeState {
    /// Schema-local objects; triggers and indexes remember their table.
    pub objects: BTreeMap<(ObjectKind, String), Option<String>>,
    pub globals: BTreeMap<String, String>,
    pub plugins: BTreeSet<String>,
    pub roles: BTreeSet<String>,
    pub users: BTreeSet<String>,
    pub extensions: BTreeSet<String>,
}

impl FakeState {
    fn has_relation(&self, name: &str) -> bool {
        [ObjectKind::Table, ObjectKind::View, ObjectKind::Sequence].iter().any(|k| self.objects.contains_key(&(*k, name.to_string())))
    }

    fn has_object(&self, spec: &str) -> bool {
        match spec.split_once(':') {
            Some((kind, name)) => {
                let name = name.to_lowercase();
                match kind.parse::<ObjectKind>() {
                    Ok(ObjectKind::Role) => self.roles.contains(&name),
                    Ok(ObjectKind::User) => self.users.contains(&name),
                    Ok(ObjectKind::Extension) => self.extensions.contains(&name),
                    Ok(k) => self.objects.contains_key(&(k, name)),
                    Err(_) if kind.eq_ignore_ascii_case("plugin") => self.plugins.contains(&name),
                    Err(_) => false,
                }
            }
            None => {
                let name = spec.to_lowercase();
                self.objects.keys().any(|(_, n)| *n == name)
                    || self.roles.contains(&name)
                    || self.users.contains(&name)
                    || self.extensions.contains(&name)
                    || self.plugins.contains(&name)
            }
        }
    }

    fn server_set(&mut self, kind: ObjectKind) -> Option<&mut BTreeSet<String>> {
        match kind {
            ObjectKind::Role => Some(&mut self.roles),
            ObjectKind::User => Some(&mut self.users),
            ObjectKind::Extension => Some(&mut self.extensions),
            _ => None,
        }
    }
}

struct CompiledRule {
    pattern: Option<Regex>,
    history: Vec<Regex>,
}

#[derive(Clone, Copy)]
enum Fault<'a> {
    Syntax(&'a str),
    RelExists(&'a str),
    RelUnknown(&'a str),
    RelMissing(&'a str),
    RoutineExists(ObjectKind, &'a str),
    RoutineMissing(ObjectKind, &'a str),
    ObjExists(ObjectKind, &'a str),
    ObjMissing(ObjectKind, &'a str),
}

fn fault(dialect: Dialect, f: Fault<'_>) -> ErrorInfo {
    let pg = dialect == Dialect::Postgres;
    let monet = dialect == Dialect::MonetDb;
    let (code, message) = match f {
        Fault::Syntax(near) => {
            if pg {
                let m = if near.is_empty() { "syntax error at end of input".to_string() } else { format!("syntax error at or near \"{near}\"") };
                ("42601", m)
            } else if monet {
                ("42000", format!("syntax error, unexpected '{near}'"))
            } else {
                (
                    "1064",
                    format!("You have an error in your SQL syntax; check the manual for the right syntax to use near '{near}' at line 1"),
                )
            }
        }
        Fault::RelExists(n) => match (pg, monet) {
            (true, _) => ("42P07", format!("relation \"{n}\" already exists")),
            (_, true) => ("42S01", format!("CREATE TABLE: name '{n}' already in use")),
            _ => ("1050", format!("Table '{n}' already exists")),
        },
        Fault::RelUnknown(n) => match (pg, monet) {
            (true, _) => ("42P01", format!("table \"{n}\" does not exist")),
            (_, true) => ("42S02", format!("DROP TABLE: no such table '{n}'")),
            _ => ("1051", format!("Unknown table 'test.{n}'")),
        },
        Fault::RelMissing(n) => match (pg, monet) {
            (true, _) => ("42P01", format!("relation \"{n}\" does not exist")),
            (_, true) => ("42S02", format!("SELECT: no such table '{n}'")),
            _ => ("1146", format!("Table 'test.{n}' doesn't exist")),
        },
        Fault::RoutineExists(k, n) => match (pg, monet) {
            (true, _) => ("42723", format!("{} \"{n}\" already exists", k.as_str())),
            (_, true) => ("42000", format!("CREATE {}: name '{n}' already in use", k.as_str().to_uppercase())),
            _ => ("1304", format!("{} {n} already exists", k.as_str().to_uppercase())),
        },
        Fault::RoutineMissing(k, n) => match (pg, monet) {
            (true, _) => ("42883", format!("{} {n}() does not exist", k.as_str())),
            (_, true) => ("42000", format!("{}: no such {} '{n}'", k.as_str().to_uppercase(), k.as_str())),
            _ => ("1305", format!("{} test.{n} does not exist", k.as_str().to_uppercase())),
        },
        Fault::ObjExists(k, n) => match (pg, monet) {
            (true, _) => ("42710", format!("{} \"{n}\" already exists", k.as_str())),
            (_, true) => ("42000", format!("{} '{n}' already exists", k.as_str())),
            _ if !k.is_schema_local() => ("1396", format!("Operation CREATE {} failed for '{n}'", k.as_str().to_uppercase())),
            _ => ("1359", format!("{} already exists", k.as_str().to_uppercase())),
        },
        Fault::ObjMissing(k, n) => match (pg, monet) {
            (true, _) => ("42704", format!("{} \"{n}\" does not exist", k.as_str())),
            (_, true) => ("42000", format!("no such {} '{n}'", k.as_str())),
            _ if !k.is_schema_local() => ("1396", format!("Operation DROP {} failed for '{n}'", k.as_str().to_uppercase())),
            _ => ("1360", format!("{} does not exist", k.as_str().to_uppercase())),
        },
    };
    ErrorInfo { code: code.to_string(), message }
}

const DANGLING: &[&str] = &[
    "FROM", "WHERE", "SELECT", "AND", "OR", "JOIN", "BY", "SET", "INTO", "VALUES", "AS", "IN", "NOT", "LIKE", "BETWEEN",
    "HAVING", "UNION", "TABLE", "LIMIT", "CASE", "WHEN", "THEN", "ELSE", "ON",
];

const SYSTEM_SCHEMAS: &[&str] = &["information_schema", "mysql", "performance_schema", "sys", "pg_catalog", "tmp"];

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_value(v: &str) -> String {
    let v = v.trim().trim_matches(|c| c == '\'' || c == '"').to_ascii_lowercase();
    match v.as_str() {
        "on" | "true" => "1".into(),
        "off" | "false" => "0".into(),
        _ => v,
    }
}

/// Syntax check shared by execution and dry runs.
pub fn syntax_error(dialect: Dialect, stmt: &str) -> Option<ErrorInfo> {
    let body = sql::strip_prompt(stmt);
    let toks = sql::significant(body);
    let first = toks.iter().find(|t| !t.is_punct('('))?;
    let subjects = dialect.subject_keywords();
    if first.kind != TokenKind::Word || !subjects.contains(first.text.to_ascii_uppercase().as_str()) {
        return Some(fault(dialect, Fault::Syntax(near(body, first.offset))));
    }
    let mut depth = 0i32;
    for t in &toks {
        if t.is_punct('(') {
            depth += 1;
        } else if t.is_punct(')') {
            depth -= 1;
            if depth < 0 {
                return Some(fault(dialect, Fault::Syntax(near(body, t.offset))));
            }
        }
        let unterminated = match t.kind {
            TokenKind::Str | TokenKind::QuotedIdent => {
                let q = t.text.chars().last().unwrap_or(' ');
                let open = t.text.trim_start_matches(|c: char| c.is_ascii_alphabetic()).chars().next().unwrap_or(' ');
                matches!(open, '\'' | '"' | '`') && (t.text.len() < 2 || q != open)
            }
            _ => false,
        };
        if unterminated {
            return Some(fault(dialect, Fault::Syntax(near(body, t.offset))));
        }
    }
    if depth != 0 {
        return Some(fault(dialect, Fault::Syntax("")));
    }
    let last = toks.last()?;
    let is_set = first.is_word("SET") || (first.is_word("ALTER") && toks.get(1).is_some_and(|t| t.is_word("SYSTEM")));
    let dangling = match last.kind {
        TokenKind::Word => {
            let up = last.text.to_ascii_uppercase();
            DANGLING.contains(&up.as_str()) && !(is_set && up == "ON") && toks.len() > 1
        }
        TokenKind::Operator => last.text != "*",
        TokenKind::Punct => last.is_punct(',') || last.is_punct('.'),
        _ => false,
    };
    if dangling {
        return Some(fault(dialect, Fault::Syntax("")));
    }
    None
}

fn near(body: &str, offset: usize) -> &str {
    let rest = &body[offset..];
    let end = rest.char_indices().nth(40).map(|(i, _)| i).unwrap_or(rest.len());
    &rest[..end]
}

pub struct ScriptedFake {
    program: FakeProgram,
    compiled: Vec<CompiledRule>,
    lifecycle: LifecycleState,
    state: FakeState,
}

impl ScriptedFake {
    pub fn new(program: FakeProgram) -> Result<Self, HarnessError> {
        let re = |p: &str| Regex::new(&format!("(?i){p}")).map_err(|e| HarnessError::Config(format!("fake rule pattern `{p}`: {e}")));
        let mut compiled = Vec::new();
        for r in &program.rules {
            compiled.push(CompiledRule {
                pattern: r.pattern.as_deref().map(re).transpose()?,
                history: r.when_history.iter().map(|p| re(p)).collect::<Result<_, _>>()?,
            });
        }
        Ok(ScriptedFake { program, compiled, lifecycle: LifecycleState::Absent, state: FakeState::default() })
    }

    /// A fake that has already been provisioned and is healthy.
    pub fn provisioned(program: FakeProgram) -> Result<Self, HarnessError> {
        let mut f = Self::new(program)?;
        f.lifecycle(LifecycleAction::Provision)?;
        Ok(f)
    }

    pub fn program(&self) -> &FakeProgram {
        &self.program
    }

    pub fn snapshot(&self) -> FakeState {
        self.state.clone()
    }

    /// The state right after provisioning.
    pub fn initial_state(&self) -> FakeState {
        FakeState { globals: self.program.globals.iter().map(|(k, v)| (k.to_lowercase(), normalize_value(v))).collect(), ..Default::default() }
    }

    fn forced(&self, index: usize, text: &str, history: &[String]) -> Option<StatementStatus> {
        for (rule, c) in self.program.rules.iter().zip(&self.compiled) {
            if rule.pattern.is_none() && rule.position.is_none() {
                continue;
            }
            if rule.position.is_some_and(|p| p != index) {
                continue;
            }
            if c.pattern.as_ref().is_some_and(|p| !p.is_match(text)) {
                continue;
            }
            let global_eq = |k: &String, v: &String| self.state.globals.get(&k.to_lowercase()).is_some_and(|g| *g == normalize_value(v));
            if !rule.when_global.iter().all(|(k, v)| global_eq(k, v)) || rule.unless_global.iter().any(|(k, v)| global_eq(k, v)) {
                continue;
            }
            if !rule.when_objects.iter().all(|o| self.state.has_object(o)) || rule.unless_objects.iter().any(|o| self.state.has_object(o)) {
                continue;
            }
            if !c.history.iter().all(|h| history.iter().any(|prev| h.is_match(prev))) {
                continue;
            }
            log::trace!("{}: rule {:?} forces {:?}", self.program.id, rule.name, rule.result);
            return Some(rule.result.clone());
        }
        None
    }

    fn step(&mut self, index: usize, stmt: &str, history: &[String]) -> StatementStatus {
        let text = collapse(sql::strip_prompt(stmt));
        let forced = self.forced(index, &text, history).or_else(|| self.program.default.clone());
        match forced {
            Some(StatementStatus::Ok) => {
                let _ = self.simulate(stmt, false);
                StatementStatus::Ok
            }
            Some(other) => other,
            None => {
                if let Some(e) = syntax_error(self.program.dialect, stmt) {
                    return StatementStatus::Error(e);
                }
                match self.simulate(stmt, true) {
                    Ok(()) => StatementStatus::Ok,
                    Err(e) => StatementStatus::Error(e),
                }
            }
        }
    }

    fn base_name(name: &str) -> Option<&str> {
        match name.rsplit_once('.') {
            Some((schema, base)) => (!SYSTEM_SCHEMAS.contains(&schema)).then_some(base),
            None => Some(name),
        }
    }

    fn on_target(&self, stmt: &str, after: &str) -> Option<String> {
        let toks = sql::significant(stmt);
        let start = toks.iter().position(|t| matches!(t.kind, TokenKind::Word | TokenKind::QuotedIdent) && self.program.dialect.normalize_ident(t) == after)?;
        let on = (start + 1..toks.len()).find(|&i| toks[i].is_word("ON"))?;
        let t = toks.get(on + 1)?;
        let mut name = self.program.dialect.normalize_ident(t);
        if toks.get(on + 2).is_some_and(|p| p.is_punct('.')) {
            if let Some(n) = toks.get(on + 3) {
                name = self.program.dialect.normalize_ident(n);
            }
        }
        Some(name)
    }

    fn check_relations(&self, names: &BTreeSet<String>, skip: &BTreeSet<String>) -> Result<(), ErrorInfo> {
        for n in names {
            if skip.contains(n) || n == "dual" {
                continue;
            }
            let Some(base) = Self::base_name(n) else { continue };
            if !self.state.has_relation(base) {
                return Err(fault(self.program.dialect, Fault::RelMissing(base)));
            }
        }
        Ok(())
    }

    /// Checks (when `check`) and applies one statement's catalog effects.
    fn simulate(&mut self, stmt: &str, check: bool) -> Result<(), ErrorInfo> {
        let d = self.program.dialect;
        let body = sql::strip_prompt(stmt);
        let info = sql::analyze(body, d, &BTreeSet::new());
        let verb = info.verb.clone().unwrap_or_default();
        let upper = collapse(&body.to_ascii_uppercase());
        let if_exists = upper.contains(" IF EXISTS");
        let if_not_exists = upper.contains(" IF NOT EXISTS");
        let or_replace = upper.starts_with("CREATE OR REPLACE") || upper.starts_with("CREATE OR ALTER");
        match verb.as_str() {
            "CREATE" => {
                for (kind, name) in &info.defines {
                    let kind = *kind;
                    if let Some(set) = self.state.server_set(kind) {
                        if set.contains(name) && !if_not_exists && !or_replace {
                            return if check { Err(fault(d, Fault::ObjExists(kind, name))) } else { Ok(()) };
                        }
                        set.insert(name.clone());
                        continue;
                    }
                    let body_kind = matches!(kind, ObjectKind::Function | ObjectKind::Procedure | ObjectKind::Trigger | ObjectKind::Other);
                    if check && !body_kind {
                        let mut skip = info.local_names.clone();
                        skip.insert(name.clone());
                        self.check_relations(&info.tables, &skip)?;
                    }
                    let relation = matches!(kind, ObjectKind::Table | ObjectKind::View | ObjectKind::Sequence);
                    let exists = if relation { self.state.has_relation(name) } else { self.state.objects.contains_key(&(kind, name.clone())) };
                    if exists && !or_replace {
                        if if_not_exists || !check {
                            continue;
                        }
                        let f = match kind {
                            ObjectKind::Table | ObjectKind::View | ObjectKind::Sequence => Fault::RelExists(name),
                            ObjectKind::Function | ObjectKind::Procedure => Fault::RoutineExists(kind, name),
                            _ => Fault::ObjExists(kind, name),
                        };
                        return Err(fault(d, f));
                    }
                    let target = if matches!(kind, ObjectKind::Trigger | ObjectKind::Index) { self.on_target(body, name) } else { None };
                    if check && kind == ObjectKind::Trigger {
                        if let Some(t) = &target {
                            if !self.state.has_relation(t) {
                                return Err(fault(d, Fault::RelMissing(t)));
                            }
                        }
                    }
                    if or_replace && relation {
                        self.state.objects.retain(|(k, n), _| !(n == name && matches!(k, ObjectKind::Table | ObjectKind::View | ObjectKind::Sequence)));
                    }
                    self.state.objects.insert((kind, name.clone()), target);
                }
                Ok(())
            }
            "DROP" => {
                for (kind, name) in &info.drops {
                    let kind = *kind;
                    if let Some(set) = self.state.server_set(kind) {
                        if !set.remove(name) && !if_exists && check {
                            return Err(fault(d, Fault::ObjMissing(kind, name)));
                        }
                        continue;
                    }
                    let Some(base) = Self::base_name(name) else { continue };
                    let base = base.to_string();
                    if self.state.objects.remove(&(kind, base.clone())).is_none() {
                        if if_exists || !check {
                            continue;
                        }
                        let f = match kind {
                            ObjectKind::Table | ObjectKind::View | ObjectKind::Sequence => Fault::RelUnknown(name),
                            ObjectKind::Function | ObjectKind::Procedure => Fault::RoutineMissing(kind, name),
                            _ => Fault::ObjMissing(kind, name),
                        };
                        return Err(fault(d, f));
                    }
                    if kind == ObjectKind::Table {
                        self.state.objects.retain(|_, target| target.as_deref() != Some(base.as_str()));
                    }
                    if kind == ObjectKind::Schema {
                        let prefix = format!("{base}.");
                        self.state.objects.retain(|(_, n), _| !n.starts_with(&prefix));
                    }
                }
                Ok(())
            }
            "SET" => {
                self.apply_set(body);
                Ok(())
            }
            "ALTER" if upper.starts_with("ALTER SYSTEM") => {
                let caps = Regex::new(r"(?i)^\s*ALTER\s+SYSTEM\s+(SET|RESET)\s+([\w.]+)(?:\s*(?:=|\bTO\b)\s*(.+?))?\s*;?\s*$").expect("static regex");
                if let Some(c) = caps.captures(body) {
                    let name = c[2].to_lowercase();
                    if c[1].eq_ignore_ascii_case("SET") {
                        let v = c.get(3).map(|m| normalize_value(m.as_str())).unwrap_or_default();
                        self.state.globals.insert(name, v);
                    } else if let Some(v) = self.initial_state().globals.get(&name) {
                        self.state.globals.insert(name, v.clone());
                    } else {
                        self.state.globals.remove(&name);
                    }
                }
                Ok(())
            }
            "INSTALL" | "UNINSTALL" => {
                let toks = sql::significant(body);
                if let Some(name) = toks.get(2).filter(|_| toks.get(1).is_some_and(|t| t.is_word("PLUGIN"))) {
                    let name = d.normalize_ident(name);
                    if verb == "INSTALL" {
                        self.state.plugins.insert(name);
                    } else {
                        self.state.plugins.remove(&name);
                    }
                }
                Ok(())
            }
            "CALL" => {
                let toks = sql::significant(body);
                if let Some(t) = toks.get(1) {
                    let name = d.normalize_ident(t);
                    if check && !self.state.objects.contains_key(&(ObjectKind::Procedure, name.clone())) {
                        return Err(fault(d, Fault::RoutineMissing(ObjectKind::Procedure, &name)));
                    }
                }
                Ok(())
            }
            "RENAME" => {
                let caps = Regex::new(r"(?i)^\s*RENAME\s+TABLE\s+([\w`.]+)\s+TO\s+([\w`.]+)").expect("static regex");
                if let Some(c) = caps.captures(body) {
                    let from = c[1].trim_matches('`').to_lowercase();
                    let to = c[2].trim_matches('`').to_lowercase();
                    if self.state.objects.remove(&(ObjectKind::Table, from.clone())).is_none() {
                        return if check { Err(fault(d, Fault::RelMissing(&from))) } else { Ok(()) };
                    }
                    self.state.objects.insert((ObjectKind::Table, to), None);
                }
                Ok(())
            }
            _ => {
                if check {
                    self.check_relations(&info.tables, &info.local_names)?;
                }
                Ok(())
            }
        }
    }

    fn apply_set(&mut self, body: &str) {
        let Some(rest) = body.trim_start().get(3..) else { return };
        let rest = rest.trim().trim_end_matches(';');
        let assign = Regex::new(r"(?is)^\s*(?:(GLOBAL|PERSIST|PERSIST_ONLY|SESSION|LOCAL)\s+)?(?:@@(global|persist|persist_only|session|local)\.)?(@?[A-Za-z_][\w.$]*)\s*(?::=|=|\bTO\b)\s*(.+?)\s*$")
            .expect("static regex");
        let mut global_scope = false;
        for piece in rest.split(',') {
            let Some(c) = assign.captures(piece) else { continue };
            let scope = c.get(1).or_else(|| c.get(2)).map(|m| m.as_str().to_ascii_lowercase());
            if let Some(s) = &scope {
                global_scope = s.starts_with("global") || s.starts_with("persist");
            }
            if global_scope && !c[3].starts_with('@') {
                self.state.globals.insert(c[3].to_lowercase(), normalize_value(&c[4]));
            }
        }
    }
}

impl Backend for ScriptedFake {
    fn id(&self) -> &str {
        &self.program.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::ScriptedFake
    }

    fn dialect(&self) -> Dialect {
        self.program.dialect
    }

    fn version(&self) -> &str {
        &self.program.version
    }

    fn state(&self) -> LifecycleState {
        self.lifecycle
    }

    fn lifecycle(&mut self, action: LifecycleAction) -> Result<LifecycleState, HarnessError> {
        match (action, self.lifecycle) {
            (LifecycleAction::Provision, LifecycleState::Absent) => {
                self.state = self.initial_state();
                self.lifecycle = LifecycleState::Provisioned;
                self.lifecycle = LifecycleState::Healthy;
            }
            (LifecycleAction::Provision, _) => {}
            (LifecycleAction::HealthCheck, LifecycleState::Absent) => {
                return Err(HarnessError::HealthCheckFailed(format!("{} is not provisioned", self.program.id)))
            }
            (LifecycleAction::HealthCheck, LifecycleState::Degraded) => {
                return Err(HarnessError::HealthCheckFailed(format!("{} is not responding", self.program.id)))
            }
            (LifecycleAction::HealthCheck, _) => self.lifecycle = LifecycleState::Healthy,
            (LifecycleAction::Reset, LifecycleState::Absent) => {
                return Err(HarnessError::BackendUnhealthy { id: self.program.id.clone(), state: LifecycleState::Absent })
            }
            (LifecycleAction::Reset, _) => {
                self.cleanup(CleanupAction::RestartAndVerify)?;
            }
            (LifecycleAction::Teardown, _) => {
                self.state = FakeState::default();
                self.lifecycle = LifecycleState::Absent;
            }
        }
        Ok(self.lifecycle)
    }

    fn run_script(&mut self, statements: &[String], limits: &Limits) -> Result<ExecutionOutcome, HarnessError> {
        if self.lifecycle != LifecycleState::Healthy {
            return Err(HarnessError::BackendUnhealthy { id: self.program.id.clone(), state: self.lifecycle });
        }
        let mut results = Vec::new();
        let mut history: Vec<String> = Vec::new();
        for (i, stmt) in statements.iter().enumerate() {
            let status = self.step(i, stmt, &history);
            history.push(collapse(sql::strip_prompt(stmt)));
            let terminal = status.is_terminal();
            let is_error = matches!(status, StatementStatus::Error(_));
            results.push(StatementResult { index: i, status });
            if terminal {
                self.lifecycle = LifecycleState::Degraded;
                break;
            }
            if is_error && limits.stop_on_error {
                break;
            }
        }
        Ok(ExecutionOutcome::from_results(results, limits.timeout_ms, 0, &self.program.id, &self.program.version))
    }

    fn cleanup(&mut self, action: CleanupAction) -> Result<LifecycleState, HarnessError> {
        if self.lifecycle == LifecycleState::Absent {
            return Err(HarnessError::BackendUnhealthy { id: self.program.id.clone(), state: LifecycleState::Absent });
        }
        self.state.objects.clear();
        if action >= CleanupAction::RestartAndVerify {
            let initial = self.initial_state();
            self.state.globals = initial.globals;
            self.state.plugins.clear();
            self.lifecycle = LifecycleState::Healthy;
        }
        if action >= CleanupAction::ReinstallContainer {
            self.state = self.initial_state();
        }
        Ok(self.lifecycle)
    }

    fn user_objects(&mut self) -> Result<Vec<String>, HarnessError> {
        if self.lifecycle == LifecycleState::Absent {
            return Err(HarnessError::BackendUnhealthy { id: self.program.id.clone(), state: LifecycleState::Absent });
        }
        Ok(self.state.objects.keys().map(|(k, n)| format!("{}:{n}", k.as_str())).collect())
    }

    fn dry_run(&mut self, statements: &[String]) -> Result<Vec<Option<ErrorInfo>>, HarnessError> {
        if self.lifecycle == LifecycleState::Absent {
            return Err(HarnessError::BackendUnhealthy { id: self.program.id.clone(), state: LifecycleState::Absent });
        }
        Ok(statements.iter().map(|s| syntax_error(self.program.dialect, s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::backend::execute;
    use crate::harness::outcome::OutcomeKind;
    use crate::harness::risk::RiskRules;

    fn stmts(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn fake(toml_text: &str) -> ScriptedFake {
        ScriptedFake::provisioned(FakeProgram::from_toml(toml_text).unwrap()).unwrap()
    }

    #[test]
    fn catalog_errors() {
        let mut f = fake("id = \"m\"\ndialect = \"mysql\"\n");
        let o = f.run_script(&stmts(&["CREATE TABLE t (a INT)", "CREATE TABLE t (a INT)"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "1050");
        let o = f.run_script(&stmts(&["SELECT * FROM nope"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "1146");
        let o = f.run_script(&stmts(&["DROP TABLE nope"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "1051");
        let o = f.run_script(&stmts(&["SELEC 1"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "1064");
        let o = f.run_script(&stmts(&["SELECT a FROM t WHERE"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "1064");
        let o = f.run_script(&stmts(&["SELECT a FROM information_schema.tables", "SELECT 1 FROM dual"]), &Limits::default()).unwrap();
        assert!(o.is_clean());
    }

    #[test]
    fn postgres_codes() {
        let mut f = fake("id = \"p\"\ndialect = \"postgres\"\n");
        let o = f.run_script(&stmts(&["SELECT * FROM missing"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "42P01");
    }

    #[test]
    fn position_rule_and_stop_on_error() {
        let program = "id = \"m\"\ndialect = \"mysql\"\n[[rule]]\nposition = 2\nresult = { kind = \"error\", code = \"1418\", message = \"no DETERMINISTIC\" }\n";
        let mut f = fake(program);
        let o = f.run_script(&stmts(&["SELECT 1", "SELECT 2", "SELECT 3", "SELECT 4"]), &Limits::default()).unwrap();
        assert_eq!(o.statements.len(), 3);
        assert!(matches!(&o.kind, OutcomeKind::Error { index: 2, error } if error.code == "1418"));
        let go_on = Limits { stop_on_error: false, ..Limits::default() };
        let o = f.run_script(&stmts(&["SELECT 1", "SELECT 2", "SELECT 3", "SELECT 4"]), &go_on).unwrap();
        assert_eq!(o.statements.len(), 4);
    }

    #[test]
    fn crash_degrades_and_cleanup_recovers() {
        let program = "id = \"maria\"\ndialect = \"mariadb\"\n[[rule]]\npattern = 'REPEAT\\(JSON_NORMALIZE'\nresult = { kind = \"crash\", signal = \"SIGSEGV\" }\n";
        let mut f = fake(program);
        let s = stmts(&["SELECT REPEAT(json_normalize('{\"a\":1}'), 2)", "SELECT 1"]);
        let e = execute(&mut f, &s, &Limits::default(), &RiskRules::default()).unwrap();
        assert!(matches!(e.outcome.kind, OutcomeKind::Crash { index: 0, .. }));
        assert_eq!(e.outcome.statements.len(), 1);
        assert_eq!(e.cleanup, CleanupAction::RestartAndVerify);
        assert_eq!(f.state(), LifecycleState::Healthy);
    }

    #[test]
    fn conditions_on_globals_objects_and_history() {
        let program = r#"
id = "m"
dialect = "mysql"
[globals]
log_bin_trust_function_creators = "0"
[[rule]]
pattern = '^CREATE FUNCTION'
unless_global = { log_bin_trust_function_creators = "1" }
result = { kind = "error", code = "1418", message = "This function has none of DETERMINISTIC" }
[[rule]]
pattern = '^INSERT INTO t1'
when_objects = ["trigger:trg", "table:v1"]
when_history = ['^DROP VIEW v1']
result = { kind = "crash", signal = "SIGSEGV" }
"#;
        let mut f = fake(program);
        let o = f.run_script(&stmts(&["CREATE FUNCTION f() RETURNS INT RETURN 1"]), &Limits::default()).unwrap();
        assert_eq!(o.error().unwrap().code, "1418");
        let o = f.run_script(&stmts(&["SET GLOBAL log_bin_trust_function_creators = ON", "CREATE FUNCTION f() RETURNS INT RETURN 1"]), &Limits::default()).unwrap();
        assert!(o.is_clean(), "{o:?}");
        f.cleanup(CleanupAction::RestartAndVerify).unwrap();
        let script = stmts(&[
            "CREATE TABLE t1 (a INT)",
            "CREATE TABLE t2 (a INT)",
            "CREATE VIEW v1 AS SELECT * FROM t2",
            "CREATE TRIGGER trg AFTER INSERT ON t1 FOR EACH ROW INSERT INTO v1 VALUES (NEW.a)",
            "DROP VIEW v1",
            "CREATE TABLE v1 (a INT)",
            "INSERT INTO t1 VALUES (1)",
        ]);
        let o = f.run_script(&script, &Limits::default()).unwrap();
        assert!(matches!(o.kind, OutcomeKind::Crash { index: 6, .. }), "{o:?}");
    }

    #[test]
    fn lifecycle_machine() {
        let mut f = ScriptedFake::new(FakeProgram::new("x", Dialect::MySql, "1")).unwrap();
        assert!(f.lifecycle(LifecycleAction::HealthCheck).is_err());
        assert!(f.run_script(&[], &Limits::default()).is_err());
        assert_eq!(f.lifecycle(LifecycleAction::Provision).unwrap(), LifecycleState::Healthy);
        f.run_script(&stmts(&["CREATE TABLE t (a INT)"]), &Limits::default()).unwrap();
        assert_eq!(f.user_objects().unwrap(), vec!["table:t".to_string()]);
        f.lifecycle(LifecycleAction::Reset).unwrap();
        assert!(f.user_objects().unwrap().is_empty());
        f.lifecycle(LifecycleAction::Teardown).unwrap();
        assert!(f.lifecycle(LifecycleAction::HealthCheck).is_err());
    }

    #[test]
    fn cleanup_restores_post_provision_state() {
        let mut f = fake("id = \"m\"\ndialect = \"mysql\"\n[globals]\nsql_mode = \"strict\"\n");
        let initial = f.snapshot();
        for script in [
            vec!["CREATE TABLE t (a INT)", "CREATE VIEW v AS SELECT a FROM t"],
            vec!["SET GLOBAL sql_mode = ''", "INSTALL PLUGIN p SONAME 'p.so'", "CREATE TABLE t (a INT)"],
            vec!["CREATE ROLE r1", "CREATE USER u", "SET GLOBAL innodb_purge_stop_now = ON"],
        ] {
            let e = execute(&mut f, &stmts(&script), &Limits::default(), &RiskRules::default()).unwrap();
            assert!(e.outcome.is_clean(), "{:?}", e.outcome);
            assert_eq!(f.snapshot(), initial, "after {:?}", e.cleanup);
        }
    }
}
