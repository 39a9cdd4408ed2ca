//! Error knowledge base: rule files with one rule per line,
//!
//! ```text
//! # id | regex | category | guidance
//! mysql-1418 | (?i)\berror 1418\b | configuration | Enable function creation ...
//! ```
//!
//! Blank lines and `#` comments are ignored. When several rules match, the
//! category priority is syntax, then configuration, then semantic; within a
//! category the first rule in file order wins.

use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::sql::Dialect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisCategory {
    Syntax,
    Configuration,
    Semantic,
    Unknown,
}

impl fmt::Display for DiagnosisCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosisCategory::Syntax => "syntax",
            DiagnosisCategory::Configuration => "configuration",
            DiagnosisCategory::Semantic => "semantic",
            DiagnosisCategory::Unknown => "unknown",
        })
    }
}

impl std::str::FromStr for DiagnosisCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "syntax" => Ok(DiagnosisCategory::Syntax),
            "configuration" | "config" => Ok(DiagnosisCategory::Configuration),
            "semantic" => Ok(DiagnosisCategory::Semantic),
            other => Err(format!("unknown diagnosis category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub category: DiagnosisCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance: Option<String>,
    pub raw_feedback: String,
}

#[derive(Debug, Clone)]
pub struct KbRule {
    pub id: String,
    pub pattern: Regex,
    pub category: DiagnosisCategory,
    pub guidance: String,
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    pub rules: Vec<KbRule>,
}

const MYSQL_RULES: &str = r#"
# MySQL and MariaDB client/server error codes.
mysql-1064 | (?i)\berror 1064\b|error in your sql syntax | syntax | The statement is not valid SQL near the reported position. Complete truncated statements, balance parentheses and quotes, and leave every other statement unchanged.
mysql-1149 | (?i)\berror 1149\b | syntax | The statement is not valid SQL. Fix only the reported statement.
mysql-1418 | (?i)\berror 1418\b|none of deterministic, no sql, or reads sql data | configuration | Binary logging refuses non-deterministic stored functions. Prepend `SET GLOBAL log_bin_trust_function_creators=1;` before the CREATE FUNCTION statement; do not change the function.
mysql-1193 | (?i)\berror 1193\b|unknown system variable | configuration | The system variable does not exist on this server version. Remove the assignment or use the variable name this version supports.
mysql-1227 | (?i)\berror 1227\b|access denied; you need | configuration | The statement needs a privilege the session lacks. Keep the statement and grant the privilege or use an equivalent session setting.
mysql-1286 | (?i)\berror 1286\b|unknown storage engine | configuration | The storage engine is not available. Use the server's default engine in the table definition.
mysql-1524 | (?i)\berror 1524\b|plugin .* is not loaded | configuration | A plugin the PoC relies on is not installed. Add the INSTALL PLUGIN statement before first use.
mysql-1146 | (?i)\berror 1146\b|table .* doesn't exist | semantic | A table the PoC reads is never created. Add a CREATE TABLE for it, consistent with how the PoC uses it, before the first reference.
mysql-1054 | (?i)\berror 1054\b|unknown column | semantic | A column the PoC uses is missing. Add the column to the table definition instead of removing it from the query.
mysql-1305 | (?i)\berror 1305\b|(function|procedure) .* does not exist | semantic | A routine the PoC calls is never created. Add its definition before the call.
mysql-1050 | (?i)\berror 1050\b|already exists | semantic | An object is created twice. Drop it first with DROP ... IF EXISTS.
mysql-1051 | (?i)\berror 1051\b|unknown table | semantic | A dropped table never existed. Use DROP ... IF EXISTS or create it first.
mysql-1049 | (?i)\berror 1049\b|unknown database | semantic | The database does not exist. Create it or use the current database.
"#;

const POSTGRES_RULES: &str = r#"
# PostgreSQL SQLSTATE codes.
pg-42601 | (?i)\b42601\b|syntax error at or near|syntax error at end of input | syntax | The statement is not valid SQL near the reported token. Complete or correct only that statement.
pg-42501 | (?i)\b42501\b|permission denied | configuration | The session lacks a privilege. Keep the statement and grant the privilege first.
pg-58P01 | (?i)\b58P01\b|extension .* is not available|could not open extension control file | configuration | The extension is not installed on this server. Use an available extension or CREATE EXTENSION for a bundled one.
pg-42704 | (?i)unrecognized configuration parameter | configuration | The configuration parameter does not exist on this version. Remove it or use the supported name.
pg-42P01 | (?i)\b42P01\b|relation .* does not exist | semantic | A relation the PoC reads is never created. Add a CREATE TABLE before the first reference.
pg-42703 | (?i)\b42703\b|column .* does not exist | semantic | A column the PoC uses is missing. Add it to the table definition.
pg-42883 | (?i)\b42883\b|function .* does not exist | semantic | A function the PoC calls is missing or has different argument types. Define it or add explicit casts.
pg-42P07 | (?i)\b42P07\b|already exists | semantic | An object is created twice. Drop it first with DROP ... IF EXISTS.
"#;

const MONETDB_RULES: &str = r#"
# MonetDB error codes.
monet-syntax | (?i)syntax error | syntax | The statement is not valid SQL near the reported token. Correct only that statement.
monet-config | (?i)not supported|not enabled|insufficient privileges | configuration | The server configuration rejects the statement. Adjust the session or server setting it needs.
monet-42S02 | (?i)\b42S02\b|no such table | semantic | A table the PoC reads is never created. Add a CREATE TABLE before the first reference.
monet-42S22 | (?i)\b42S22\b|no such column | semantic | A column the PoC uses is missing. Add it to the table definition.
monet-42S01 | (?i)\b42S01\b|already in use | semantic | An object is created twice. Drop it first.
"#;

impl KnowledgeBase {
    pub fn parse(text: &str) -> Result<Self, KbError> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.splitn(4, " | ").map(str::trim).collect();
            let bad = |reason: String| KbError::Parse { line: n + 1, reason };
            if parts.len() != 4 {
                return Err(bad("expected `id | regex | category | guidance`".into()));
            }
            let pattern = Regex::new(parts[1]).map_err(|e| bad(e.to_string()))?;
            let category: DiagnosisCategory = parts[2].parse().map_err(bad)?;
            rules.push(KbRule { id: parts[0].into(), pattern, category, guidance: parts[3].into() });
        }
        Ok(KnowledgeBase { rules })
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Embedded rule table for a dialect.
    pub fn defaults(dialect: Dialect) -> Self {
        let text = match dialect {
            Dialect::MySql | Dialect::MariaDb => MYSQL_RULES,
            Dialect::Postgres => POSTGRES_RULES,
            Dialect::MonetDb => MONETDB_RULES,
            Dialect::Generic => return Self::parse(&format!("{MYSQL_RULES}\n{POSTGRES_RULES}\n{MONETDB_RULES}")).expect("embedded rules parse"),
        };
        Self::parse(text).expect("embedded rules parse")
    }

    pub fn extend(&mut self, other: KnowledgeBase) {
        self.rules.extend(other.rules);
    }

    /// Never fails; unmatched feedback yields `unknown` with the feedback kept.
    pub fn diagnose(&self, feedback: &str) -> Diagnosis {
        let best = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.pattern.is_match(feedback))
            .min_by_key(|(i, r)| (r.category, *i))
            .map(|(_, r)| r);
        let raw_feedback = if feedback.trim().is_empty() { "(no feedback)".to_string() } else { feedback.to_string() };
        match best {
            Some(r) => Diagnosis { category: r.category, matched_rule: Some(r.id.clone()), guidance: Some(r.guidance.clone()), raw_feedback },
            None => Diagnosis { category: DiagnosisCategory::Unknown, matched_rule: None, guidance: None, raw_feedback },
        }
    }
}

pub fn diagnose(feedback: &str, kb: &KnowledgeBase) -> Diagnosis {
    kb.diagnose(feedback)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table() {
        let kb = KnowledgeBase::defaults(Dialect::MySql);
        assert_eq!(kb.diagnose("ERROR 1064 (42000): You have an error in your SQL syntax").category, DiagnosisCategory::Syntax);
        let d = kb.diagnose("statement 2: ERROR 1418: This function has none of DETERMINISTIC");
        assert_eq!((d.category, d.matched_rule.as_deref()), (DiagnosisCategory::Configuration, Some("mysql-1418")));
        assert_eq!(kb.diagnose("ERROR 1146 (42S02): Table 'test.t' doesn't exist").category, DiagnosisCategory::Semantic);
        let d = kb.diagnose("ERROR 9999: mystery");
        assert_eq!(d.category, DiagnosisCategory::Unknown);
        assert!(d.matched_rule.is_none() && d.raw_feedback.contains("mystery"));
    }

    #[test]
    fn priority_beats_file_order() {
        let kb = KnowledgeBase::parse("a | boom | semantic | s\nb | boom | syntax | x\n").unwrap();
        assert_eq!(kb.diagnose("boom").matched_rule.as_deref(), Some("b"));
        assert!(KnowledgeBase::parse("only | two").is_err());
    }

    #[test]
    fn every_dialect_table_parses() {
        for d in [Dialect::MySql, Dialect::MariaDb, Dialect::Postgres, Dialect::MonetDb, Dialect::Generic] {
            assert!(!KnowledgeBase::defaults(d).rules.is_empty());
        }
    }
}
