//! Statement-level environmental risk and the cleanup it calls for.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::sql::{self, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    #[default]
    Low,
    Medium,
    High,
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskLevel::Low => "low",
            RiskLevel::Medium => "medium",
            RiskLevel::High => "high",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RiskClass {
    pub value: RiskLevel,
    /// Statements at the maximum level; empty when everything is low.
    pub triggering_statements: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanupAction {
    CleanDatabase,
    RestartAndVerify,
    ReinstallContainer,
}

impl fmt::Display for CleanupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CleanupAction::CleanDatabase => "clean_database",
            CleanupAction::RestartAndVerify => "restart_and_verify",
            CleanupAction::ReinstallContainer => "reinstall_container",
        })
    }
}

pub fn schedule_cleanup(risk: &RiskClass) -> CleanupAction {
    match risk.value {
        RiskLevel::High => CleanupAction::ReinstallContainer,
        RiskLevel::Medium => CleanupAction::RestartAndVerify,
        RiskLevel::Low => CleanupAction::CleanDatabase,
    }
}

/// Verb+object risk table. `high` and `medium` entries are either a verb
/// (`FLUSH`) or a verb and object keyword (`CREATE ROLE`); `*_patterns`
/// are extra case-insensitive regexes over the statement text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskRules {
    pub high: Vec<String>,
    pub medium: Vec<String>,
    /// Global variables whose modification is high risk.
    pub global_denylist: Vec<String>,
    /// Schemas whose grants count as system-level.
    pub system_schemas: Vec<String>,
    pub high_patterns: Vec<String>,
    pub medium_patterns: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for RiskRules {
    fn default() -> Self {
        RiskRules {
            high: strings(&["CREATE ROLE", "DROP ROLE", "CREATE USER", "DROP USER", "CREATE EXTENSION", "DROP EXTENSION"]),
            medium: strings(&["ALTER SYSTEM", "FLUSH", "INSTALL PLUGIN", "UNINSTALL PLUGIN", "INSTALL SONAME", "UNINSTALL SONAME"]),
            global_denylist: strings(&[
                "innodb_purge_stop_now",
                "innodb_purge_run_now",
                "innodb_force_recovery",
                "innodb_fast_shutdown",
                "innodb_read_only",
                "read_only",
                "super_read_only",
                "offline_mode",
            ]),
            system_schemas: strings(&["mysql", "sys", "information_schema", "performance_schema", "pg_catalog", "pg_toast", "tmp"]),
            high_patterns: vec![],
            medium_patterns: vec![],
        }
    }
}

const OBJECT_WORDS: &[&str] = &[
    "TABLE", "VIEW", "ROLE", "USER", "EXTENSION", "FUNCTION", "PROCEDURE", "TRIGGER", "INDEX", "DATABASE", "SCHEMA",
    "SEQUENCE", "TYPE", "PLUGIN", "SONAME", "SYSTEM", "EVENT", "SERVER", "TABLESPACE", "AGGREGATE", "COMPONENT",
];

#[derive(Debug, thiserror::Error)]
pub enum RiskRulesError {
    #[error("reading risk rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing risk rules: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad risk pattern `{0}`: {1}")]
    Pattern(String, regex::Error),
}

impl RiskRules {
    pub fn load(path: &Path) -> Result<Self, RiskRulesError> {
        let rules: RiskRules = toml::from_str(&std::fs::read_to_string(path)?)?;
        rules.compile()?;
        Ok(rules)
    }

    fn compile(&self) -> Result<(Vec<Regex>, Vec<Regex>), RiskRulesError> {
        let build = |ps: &[String]| -> Result<Vec<Regex>, RiskRulesError> {
            ps.iter().map(|p| Regex::new(&format!("(?i){p}")).map_err(|e| RiskRulesError::Pattern(p.clone(), e))).collect()
        };
        Ok((build(&self.high_patterns)?, build(&self.medium_patterns)?))
    }

    fn verb_object(stmt: &str) -> (String, Option<String>) {
        let toks = sql::significant(stmt);
        let words: Vec<String> = toks.iter().filter(|t| t.kind == TokenKind::Word).map(|t| t.text.to_ascii_uppercase()).collect();
        let verb = words.first().cloned().unwrap_or_default();
        let object = words.iter().skip(1).take(6).find(|w| OBJECT_WORDS.contains(&w.as_str())).cloned();
        (verb, object)
    }

    fn table_hit(table: &[String], verb: &str, object: Option<&str>) -> bool {
        table.iter().any(|entry| {
            let mut parts = entry.split_whitespace();
            let v = parts.next().unwrap_or_default();
            if !v.eq_ignore_ascii_case(verb) {
                return false;
            }
            match parts.next() {
                None => true,
                Some(o) => object.is_some_and(|ob| ob.eq_ignore_ascii_case(o)),
            }
        })
    }

    fn sets_global(stmt: &str, verb: &str) -> bool {
        if verb != "SET" {
            return false;
        }
        let lower = stmt.to_ascii_lowercase();
        sql::significant(stmt)
            .iter()
            .take(3)
            .any(|t| t.kind == TokenKind::Word && matches!(t.text.to_ascii_uppercase().as_str(), "GLOBAL" | "PERSIST" | "PERSIST_ONLY"))
            || lower.contains("@@global.")
            || lower.contains("@@persist.")
    }

    fn grant_on_system(&self, stmt: &str) -> bool {
        let lower = stmt.to_ascii_lowercase();
        let collapsed: String = lower.split_whitespace().collect::<Vec<_>>().join(" ");
        if collapsed.contains(" on *.*") || collapsed.contains(" on *") && !collapsed.contains(" on *.") {
            return true;
        }
        self.system_schemas.iter().any(|s| {
            let s = s.to_ascii_lowercase();
            [format!(" on {s}."), format!(" on `{s}`."), format!(" on schema {s}"), format!(" on database {s}"), format!(" in schema {s}")]
                .iter()
                .any(|needle| collapsed.contains(needle.as_str()))
        })
    }

    fn level_with(&self, stmt: &str, high_re: &[Regex], medium_re: &[Regex]) -> RiskLevel {
        let body = sql::strip_prompt(stmt);
        let (verb, object) = Self::verb_object(body);
        let object = object.as_deref();
        if Self::table_hit(&self.high, &verb, object) || high_re.iter().any(|r| r.is_match(body)) {
            return RiskLevel::High;
        }
        if matches!(verb.as_str(), "GRANT" | "REVOKE") && self.grant_on_system(body) {
            return RiskLevel::High;
        }
        if Self::sets_global(body, &verb) {
            let names = sql::analyze(body, sql::Dialect::Generic, &BTreeSet::new()).config_names;
            let deny = names.iter().any(|n| {
                let n = n.rsplit('.').next().unwrap_or(n);
                self.global_denylist.iter().any(|d| d.eq_ignore_ascii_case(n))
            });
            return if deny { RiskLevel::High } else { RiskLevel::Medium };
        }
        if Self::table_hit(&self.medium, &verb, object) || medium_re.iter().any(|r| r.is_match(body)) {
            return RiskLevel::Medium;
        }
        RiskLevel::Low
    }

    pub fn statement_level(&self, stmt: &str) -> RiskLevel {
        let (h, m) = self.compile().unwrap_or_default();
        self.level_with(stmt, &h, &m)
    }

    pub fn assess(&self, statements: &[String]) -> RiskClass {
        let (h, m) = self.compile().unwrap_or_default();
        let levels: Vec<RiskLevel> = statements.iter().map(|s| self.level_with(s, &h, &m)).collect();
        let value = levels.iter().copied().max().unwrap_or_default();
        let triggering_statements =
            if value == RiskLevel::Low { vec![] } else { (0..levels.len()).filter(|&i| levels[i] == value).collect() };
        RiskClass { value, triggering_statements }
    }
}

/// Risk under the default rule table.
pub fn assess_risk(statements: &[String]) -> RiskClass {
    RiskRules::default().assess(statements)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(s: &str) -> RiskLevel {
        RiskRules::default().statement_level(s)
    }

    #[test]
    fn rule_table() {
        assert_eq!(level("SELECT 1"), RiskLevel::Low);
        assert_eq!(level("CREATE ROLE r1"), RiskLevel::High);
        assert_eq!(level("create extension if not exists pg_trgm"), RiskLevel::High);
        assert_eq!(level("DROP USER IF EXISTS 'u'@'%'"), RiskLevel::High);
        assert_eq!(level("ALTER SYSTEM SET work_mem='64MB'"), RiskLevel::Medium);
        assert_eq!(level("SET GLOBAL innodb_purge_stop_now=ON"), RiskLevel::High);
        assert_eq!(level("SET GLOBAL log_bin_trust_function_creators=1"), RiskLevel::Medium);
        assert_eq!(level("SET @@global.sql_mode=''"), RiskLevel::Medium);
        assert_eq!(level("SET sql_mode=''"), RiskLevel::Low);
        assert_eq!(level("FLUSH TABLES"), RiskLevel::Medium);
        assert_eq!(level("INSTALL PLUGIN x SONAME 'x.so'"), RiskLevel::Medium);
        assert_eq!(level("GRANT ALL ON *.* TO u"), RiskLevel::High);
        assert_eq!(level("GRANT SELECT ON mysql.user TO u"), RiskLevel::High);
        assert_eq!(level("GRANT SELECT ON test.t1 TO u"), RiskLevel::Low);
        assert_eq!(level("CREATE TABLE role (a INT)"), RiskLevel::Low);
    }

    #[test]
    fn triggering_indices_and_mapping() {
        let stmts: Vec<String> = ["CREATE TABLE t (a INT)", "CREATE ROLE r", "ALTER SYSTEM SET x=1", "CREATE ROLE q"].iter().map(|s| s.to_string()).collect();
        let r = assess_risk(&stmts);
        assert_eq!(r.value, RiskLevel::High);
        assert_eq!(r.triggering_statements, vec![1, 3]);
        assert_eq!(schedule_cleanup(&r), CleanupAction::ReinstallContainer);
        assert_eq!(assess_risk(&[]).triggering_statements, Vec::<usize>::new());
        assert_eq!(schedule_cleanup(&assess_risk(&[])), CleanupAction::CleanDatabase);
    }

    #[test]
    fn extensible_patterns() {
        let rules = RiskRules { medium_patterns: vec![r"^\s*SHUTDOWN\b".into()], ..Default::default() };
        assert_eq!(rules.statement_level("shutdown"), RiskLevel::Medium);
    }
}
