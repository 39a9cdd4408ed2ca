//! Dialect-light SQL lexing and statement analysis.
//!
//! Nothing here parses a full grammar. The tokenizer recognises keywords,
//! identifiers, literals, operators and comments well enough to split scripts
//! into statements, find terminators that are not inside quotes, and pull out
//! the schema objects a statement touches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Word,
    QuotedIdent,
    Str,
    Number,
    Variable,
    Operator,
    Punct,
    Comment,
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub offset: usize,
}

impl Token<'_> {
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Comment | TokenKind::Whitespace)
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.kind == TokenKind::Punct && self.text.len() == 1 && self.text.starts_with(c)
    }

    /// Case-insensitive keyword comparison for bare words.
    pub fn is_word(&self, kw: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(kw)
    }
}

const MULTI_CHAR_OPS: &[&str] = &[
    "<=>", "->>", "<=", ">=", "<>", "!=", ":=", "::", "||", "&&", "->", "<<", ">>",
];

/// Tokenizes `src`. Never fails: unterminated strings and comments extend to
/// the end of input.
pub fn tokenize(src: &str) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = src[i..].chars().next().unwrap();
        let kind = if c.is_whitespace() {
            while i < bytes.len() {
                let ch = src[i..].chars().next().unwrap();
                if !ch.is_whitespace() {
                    break;
                }
                i += ch.len_utf8();
            }
            TokenKind::Whitespace
        } else if src[i..].starts_with("--") || c == '#' {
            i = src[i..].find('\n').map_or(bytes.len(), |n| i + n);
            TokenKind::Comment
        } else if src[i..].starts_with("/*") {
            i = src[i + 2..].find("*/").map_or(bytes.len(), |n| i + 2 + n + 2);
            TokenKind::Comment
        } else if c == '\'' {
            i = scan_quoted(bytes, i, b'\'', true);
            TokenKind::Str
        } else if c == '"' {
            i = scan_quoted(bytes, i, b'"', true);
            TokenKind::QuotedIdent
        } else if c == '`' {
            i = scan_quoted(bytes, i, b'`', false);
            TokenKind::QuotedIdent
        } else if c == '$' && dollar_tag(&src[i..]).is_some() {
            let tag = dollar_tag(&src[i..]).unwrap();
            let body = i + tag.len();
            i = src[body..].find(tag).map_or(bytes.len(), |n| body + n + tag.len());
            TokenKind::Str
        } else if c == '@' {
            i += 1;
            while i < bytes.len() && (bytes[i] == b'@' || is_ident_byte(bytes[i]) || bytes[i] == b'.') {
                i += 1;
            }
            TokenKind::Variable
        } else if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i = scan_number(bytes, i);
            TokenKind::Number
        } else if c.is_alphabetic() || c == '_' {
            while i < bytes.len() {
                let ch = src[i..].chars().next().unwrap();
                if !(ch.is_alphanumeric() || ch == '_' || ch == '$') {
                    break;
                }
                i += ch.len_utf8();
            }
            TokenKind::Word
        } else if matches!(c, '(' | ')' | ',' | ';' | '.' | '[' | ']' | '{' | '}') {
            i += 1;
            TokenKind::Punct
        } else if let Some(op) = MULTI_CHAR_OPS.iter().find(|op| src[i..].starts_with(**op)) {
            i += op.len();
            TokenKind::Operator
        } else {
            i += c.len_utf8();
            TokenKind::Operator
        };
        out.push(Token { kind, text: &src[start..i], offset: start });
    }
    out
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn scan_quoted(bytes: &[u8], start: usize, quote: u8, backslash: bool) -> usize {
    let mut i = start + 1;
    while i < bytes.len() {
        let b = bytes[i];
        if backslash && b == b'\\' {
            i += 2;
            continue;
        }
        if b == quote {
            if bytes.get(i + 1) == Some(&quote) {
                i += 2;
                continue;
            }
            return i + 1;
        }
        i += 1;
    }
    bytes.len()
}

fn scan_number(bytes: &[u8], start: usize) -> usize {
    let mut i = start;
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
        i += 2;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        i += 1;
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

/// `$$` or `$tag$` at the start of `s`.
fn dollar_tag(s: &str) -> Option<&str> {
    let rest = &s[1..];
    let end = rest.find('$')?;
    let tag = &rest[..end];
    if tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !tag.starts_with(|c: char| c.is_ascii_digit()) {
        Some(&s[..end + 2])
    } else {
        None
    }
}

/// True when `line` holds a `;` that is not inside a quoted string,
/// quoted identifier, or comment.
pub fn has_terminator(line: &str) -> bool {
    tokenize(line).iter().any(|t| t.is_punct(';'))
}

/// Significant (non-trivia) tokens.
pub fn significant(src: &str) -> Vec<Token<'_>> {
    tokenize(src).into_iter().filter(|t| !t.is_trivia()).collect()
}

/// Splits a script into statements. Honours `DELIMITER` lines the way the
/// mysql client does; returned statements carry no trailing delimiter.
pub fn split_statements(script: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut delimiter = String::from(";");
    let mut segment = String::new();
    for line in script.split('\n') {
        let trimmed = line.trim();
        if let Some(rest) = strip_prefix_ci(trimmed, "delimiter ") {
            split_segment(&segment, &delimiter, &mut out);
            segment.clear();
            delimiter = rest.trim().to_string();
            if delimiter.is_empty() {
                delimiter = ";".into();
            }
            continue;
        }
        segment.push_str(line);
        segment.push('\n');
    }
    split_segment(&segment, &delimiter, &mut out);
    out
}

fn split_segment(segment: &str, delimiter: &str, out: &mut Vec<String>) {
    let mut start = 0;
    // Re-tokenize after every split: a custom delimiter such as `$$` also
    // opens a dollar-quoted string, which would swallow the rest.
    'outer: while start < segment.len() {
        let rest = &segment[start..];
        for tok in tokenize(rest) {
            let quoted = matches!(tok.kind, TokenKind::QuotedIdent | TokenKind::Comment)
                || (tok.kind == TokenKind::Str && !(delimiter != ";" && tok.text.starts_with(delimiter)));
            if quoted {
                continue;
            }
            // Custom delimiters may be glued to a word, as in `END$$`.
            let at = if rest[tok.offset..].starts_with(delimiter) {
                Some(0)
            } else if delimiter != ";" {
                tok.text.find(delimiter)
            } else {
                None
            };
            if let Some(k) = at {
                let pos = tok.offset + k;
                push_statement(&rest[..pos], out);
                start += pos + delimiter.len();
                continue 'outer;
            }
        }
        break;
    }
    push_statement(&segment[start.min(segment.len())..], out);
}

fn push_statement(text: &str, out: &mut Vec<String>) {
    let stmt = text.trim();
    if tokenize(stmt).iter().any(|t| !t.is_trivia()) {
        out.push(stmt.to_string());
    }
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len() && s.is_char_boundary(prefix.len()) && s[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

/// Interactive client prompts that commonly prefix statements pasted into
/// reports (`mysql>`, `MariaDB [test]>`, `postgres=#`, `sql>`, `->`).
pub fn strip_prompt(line: &str) -> &str {
    let t = line.trim_start();
    for p in ["mysql>", "sql>", "->", "-->"] {
        if let Some(rest) = strip_prefix_ci(t, p) {
            return rest.trim_start();
        }
    }
    if let Some(rest) = strip_prefix_ci(t, "mariadb") {
        if let Some(end) = rest.find('>') {
            if rest[..end].trim().is_empty() || rest[..end].trim_start().starts_with('[') {
                return rest[end + 1..].trim_start();
            }
        }
    }
    if let Some(pos) = t.find("=#").or_else(|| t.find("=>")) {
        let head = &t[..pos];
        if !head.is_empty() && head.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return t[pos + 2..].trim_start();
        }
    }
    t
}

/// First bare word of a statement, upper-cased, skipping leading trivia and
/// opening parentheses.
pub fn first_keyword(stmt: &str) -> Option<String> {
    significant(stmt)
        .into_iter()
        .find(|t| !t.is_punct('('))
        .filter(|t| t.kind == TokenKind::Word)
        .map(|t| t.text.to_ascii_uppercase())
}

/// SQL dialects the toolkit knows how to fold identifiers for and pre-filter
/// statements against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    MySql,
    MariaDb,
    Postgres,
    MonetDb,
    #[default]
    Generic,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::MySql => "mysql",
            Dialect::MariaDb => "mariadb",
            Dialect::Postgres => "postgresql",
            Dialect::MonetDb => "monetdb",
            Dialect::Generic => "generic",
        }
    }

    /// Whether double-quoted identifiers keep their case.
    fn quoted_is_case_sensitive(self) -> bool {
        matches!(self, Dialect::Postgres | Dialect::MonetDb)
    }

    /// Statement-starting keywords this dialect accepts.
    pub fn subject_keywords(self) -> BTreeSet<&'static str> {
        let mut set: BTreeSet<&'static str> = BASE_SUBJECT_KEYWORDS.iter().copied().collect();
        let extra: &[&str] = match self {
            Dialect::MySql | Dialect::MariaDb => &[
                "HANDLER", "LOAD", "OPTIMIZE", "REPAIR", "CHECK", "CHECKSUM", "INSTALL", "UNINSTALL", "XA", "DO",
                "START", "SAVEPOINT", "RELEASE", "DESCRIBE", "DESC", "KILL", "RESET", "TABLE", "DEALLOCATE",
            ],
            Dialect::Postgres => &[
                "COPY", "VACUUM", "LISTEN", "NOTIFY", "DO", "DISCARD", "REINDEX", "CLUSTER", "COMMENT", "START",
                "SAVEPOINT", "RELEASE", "RESET", "TABLE", "DEALLOCATE", "REFRESH", "SECURITY",
            ],
            Dialect::MonetDb => &["START", "SAVEPOINT", "RELEASE", "COMMENT", "TABLE", "DEALLOCATE", "TRACE", "PLAN", "DEBUG"],
            Dialect::Generic => &["START", "SAVEPOINT", "RELEASE", "TABLE"],
        };
        set.extend(extra.iter().copied());
        set
    }

    /// Keywords that only exist in other dialects; seeing one marks a
    /// statement as non-portable to this dialect.
    pub fn foreign_keywords(self) -> BTreeSet<&'static str> {
        let words: &[&str] = match self {
            Dialect::MySql => &["SEQUENCE", "RETURNING", "NEXTVAL", "LASTVAL", "SETVAL", "VERSIONING", "SYSTEM_TIME", "ILIKE"],
            Dialect::MariaDb => &["ILIKE", "MEMBER", "TABLESPACE_AUTOEXTEND"],
            Dialect::Postgres => &["ENGINE", "AUTO_INCREMENT", "UNSIGNED", "ZEROFILL", "STRAIGHT_JOIN", "SQL_CALC_FOUND_ROWS"],
            Dialect::MonetDb => &["ENGINE", "AUTO_INCREMENT", "UNSIGNED", "ZEROFILL", "STRAIGHT_JOIN"],
            Dialect::Generic => &[],
        };
        words.iter().copied().collect()
    }

    /// Normalizes an identifier token: quotes stripped, case folded unless
    /// the dialect treats quoted names as case-sensitive.
    pub fn normalize_ident(self, tok: &Token<'_>) -> String {
        match tok.kind {
            TokenKind::QuotedIdent => {
                let inner = &tok.text[1..tok.text.len().saturating_sub(1).max(1)];
                if tok.text.starts_with('"') && self.quoted_is_case_sensitive() {
                    inner.to_string()
                } else {
                    inner.to_lowercase()
                }
            }
            _ => tok.text.to_lowercase(),
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dialect {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mysql" => Ok(Dialect::MySql),
            "mariadb" => Ok(Dialect::MariaDb),
            "postgres" | "postgresql" | "pg" => Ok(Dialect::Postgres),
            "monetdb" => Ok(Dialect::MonetDb),
            "generic" | "ansi" => Ok(Dialect::Generic),
            other => Err(format!("unknown dialect `{other}`")),
        }
    }
}

/// Default statement-starting keywords shared by every dialect.
pub const BASE_SUBJECT_KEYWORDS: &[&str] = &[
    "SELECT", "INSERT", "UPDATE", "DELETE", "CREATE", "ALTER", "DROP", "SET", "GRANT", "REVOKE", "WITH", "EXPLAIN",
    "ANALYZE", "CALL", "BEGIN", "COMMIT", "ROLLBACK", "TRUNCATE", "PREPARE", "EXECUTE", "USE", "FLUSH", "LOCK",
    "UNLOCK", "SHOW", "VALUES", "RENAME", "REPLACE",
];

/// Clause-level keywords and operators tracked as key operations.
pub const KEY_OPERATIONS: &[&str] = &[
    "SELECT", "INSERT", "UPDATE", "DELETE", "REPLACE", "MERGE", "CREATE", "ALTER", "DROP", "TRUNCATE", "WHERE",
    "HAVING", "JOIN", "ORDER BY", "GROUP BY", "PARTITION BY", "UNION", "INTERSECT", "EXCEPT", "LIMIT", "OFFSET",
    "DISTINCT", "WITH", "CASE", "EXISTS", "IN", "ANY", "ALL", "SOME", "BETWEEN", "LIKE", "OVER", "WINDOW",
    "RETURNING", "TRIGGER",
];

const AGGREGATES: &[&str] = &[
    "COUNT", "SUM", "AVG", "MIN", "MAX", "GROUP_CONCAT", "STRING_AGG", "ARRAY_AGG", "JSON_ARRAYAGG", "JSON_OBJECTAGG",
    "BIT_AND", "BIT_OR", "BIT_XOR", "STDDEV", "VARIANCE", "STD", "MEDIAN",
];

/// Words never treated as identifiers: reserved words, type names, table
/// option values and a few zero-argument built-ins.
const NON_IDENTIFIERS: &[&str] = &[
    "ACTION", "ADD", "AFTER", "AGAINST", "ALGORITHM", "ALL", "ALTER", "ALWAYS", "ANALYZE", "AND", "ANY", "ARRAY", "AS",
    "ASC", "AUTO_INCREMENT", "BEFORE", "BEGIN", "BETWEEN", "BIGINT", "BINARY", "BIT", "BLOB", "BOOL", "BOOLEAN", "BOTH",
    "BTREE", "BY", "CALL", "CASCADE", "CASE", "CAST", "CHAR", "CHARACTER", "CHARSET", "CHECK", "COLLATE", "COLUMN",
    "COLUMNS", "COMMENT", "COMMIT", "CONSTRAINT", "CONVERT", "CREATE", "CROSS", "CURRENT", "CURRENT_DATE",
    "CURRENT_TIME", "CURRENT_TIMESTAMP", "CURRENT_USER", "DATABASE", "DATE", "DATETIME", "DAY", "DEC", "DECIMAL",
    "DECLARE", "DEFAULT", "DEFINER", "DELETE", "DESC", "DETERMINISTIC", "DISTINCT", "DIV", "DO", "DOUBLE", "DROP",
    "DUPLICATE", "EACH", "ELSE", "ELSEIF", "ENABLE", "DISABLE", "END", "ENGINE", "ENUM", "ESCAPE", "EXCEPT", "EXISTS",
    "EXPLAIN", "EXTENSION", "FALSE", "FIRST", "FLOAT", "FOLLOWING", "FOR", "FORCE", "FOREIGN", "FROM", "FULL",
    "FULLTEXT", "FUNCTION", "GENERATED", "GLOBAL", "GRANT", "GROUP", "HASH", "HAVING", "HOUR", "IF", "IGNORE", "ILIKE",
    "IN", "INDEX", "INNER", "INNODB", "INOUT", "INSERT", "INT", "INTEGER", "INTERSECT", "INTERVAL", "INTO", "INVOKER",
    "IS", "JOIN", "JSON", "JSONB", "KEY", "KEYS", "LANGUAGE", "LAST", "LATERAL", "LATIN1", "LEADING", "LEFT", "LIKE",
    "LIMIT", "LOCAL", "LOCALTIME", "LOCALTIMESTAMP", "LONGBLOB", "LONGTEXT", "LOOP", "MATCH", "MEDIUMINT",
    "MEDIUMTEXT", "MEMORY", "MERGE", "MINUTE", "MODIFIES", "MONTH", "MYISAM", "NATURAL", "NEW", "NO", "NOT", "NOW",
    "NULL", "NULLS", "NUMERIC", "OF", "OFFSET", "OLD", "ON", "ONLY", "OPTION", "OR", "ORDER", "OUT", "OUTER", "OVER",
    "PARTITION", "PERSIST", "PERSIST_ONLY", "PLPGSQL", "PRECEDING", "PRECISION", "PRIMARY", "PROCEDURE", "RANGE",
    "READ", "READS", "REAL", "RECURSIVE", "REFERENCES", "RENAME", "REPLACE", "RESTRICT", "RETURN", "RETURNING",
    "RETURNS", "REVOKE", "RIGHT", "ROLE", "ROLLBACK", "ROLLUP", "CUBE", "ROW", "ROWS", "SCHEMA", "SECOND", "SECURITY", "SELECT",
    "SEQUENCE", "SERIAL", "SESSION", "SET", "SHOW", "SIGNED", "SMALLINT", "SOME", "SQL", "STATEMENT", "STORED",
    "STRAIGHT_JOIN", "SYSTEM", "TABLE", "TEMP", "TEMPORARY", "TEXT", "THEN", "TIME", "TIMESTAMP", "TINYINT",
    "TINYTEXT", "TO", "TRAILING", "TRIGGER", "TRUE", "TRUNCATE", "TYPE", "UNBOUNDED", "UNION", "UNIQUE", "UNKNOWN",
    "UNSIGNED", "UPDATE", "USE", "USER", "USING", "UTF8", "UTF8MB3", "UTF8MB4", "VALUE", "VALUES", "VARBINARY",
    "VARCHAR", "VARYING", "VIEW", "VIRTUAL", "WHEN", "WHERE", "WHILE", "WINDOW", "WITH", "WITHOUT", "XOR", "YEAR",
    "ZEROFILL", "CLOB", "STRING", "HUGEINT", "UUID", "INET", "BYTEA", "ISOLATION", "LEVEL", "TRANSACTION", "START",
    "WORK", "SAVEPOINT", "RELEASE", "FLUSH", "PRIVILEGES", "TABLES", "LOCK", "UNLOCK", "WRITE", "EXECUTE", "PREPARE",
    "DEALLOCATE", "CONTAINS", "NONE", "MODE", "SHARE", "NOWAIT", "SKIP", "LOCKED", "EXCLUSIVE", "STATUS", "VARIABLES",
    "ENGINES", "PLUGIN", "PLUGINS", "SQL_CACHE", "SQL_NO_CACHE", "SQL_CALC_FOUND_ROWS", "SQL_BUFFER_RESULT",
    "SQL_SMALL_RESULT", "SQL_BIG_RESULT", "HIGH_PRIORITY", "LOW_PRIORITY", "DELAYED", "INSTALL", "UNINSTALL", "SONAME", "OWNER", "ZONE",
];

const OBJECT_KINDS: &[&str] = &[
    "TABLE", "VIEW", "FUNCTION", "PROCEDURE", "TRIGGER", "INDEX", "SEQUENCE", "TYPE", "SCHEMA", "DATABASE", "ROLE",
    "USER", "EXTENSION", "EVENT", "SERVER", "AGGREGATE",
];

/// Kinds of objects a statement can create or drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Table,
    View,
    Function,
    Procedure,
    Trigger,
    Index,
    Sequence,
    Type,
    Schema,
    Role,
    User,
    Extension,
    Other,
}

impl ObjectKind {
    fn from_keyword(kw: &str) -> ObjectKind {
        match kw {
            "TABLE" => ObjectKind::Table,
            "VIEW" => ObjectKind::View,
            "FUNCTION" | "AGGREGATE" => ObjectKind::Function,
            "PROCEDURE" => ObjectKind::Procedure,
            "TRIGGER" => ObjectKind::Trigger,
            "INDEX" => ObjectKind::Index,
            "SEQUENCE" => ObjectKind::Sequence,
            "TYPE" => ObjectKind::Type,
            "SCHEMA" | "DATABASE" => ObjectKind::Schema,
            "ROLE" => ObjectKind::Role,
            "USER" => ObjectKind::User,
            "EXTENSION" => ObjectKind::Extension,
            _ => ObjectKind::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Table => "table",
            ObjectKind::View => "view",
            ObjectKind::Function => "function",
            ObjectKind::Procedure => "procedure",
            ObjectKind::Trigger => "trigger",
            ObjectKind::Index => "index",
            ObjectKind::Sequence => "sequence",
            ObjectKind::Type => "type",
            ObjectKind::Schema => "schema",
            ObjectKind::Role => "role",
            ObjectKind::User => "user",
            ObjectKind::Extension => "extension",
            ObjectKind::Other => "other",
        }
    }

    /// Objects that live in the user schema (dropped by database cleaning).
    pub fn is_schema_local(self) -> bool {
        matches!(
            self,
            ObjectKind::Table
                | ObjectKind::View
                | ObjectKind::Function
                | ObjectKind::Procedure
                | ObjectKind::Trigger
                | ObjectKind::Index
                | ObjectKind::Sequence
                | ObjectKind::Type
                | ObjectKind::Schema
                | ObjectKind::Other
        )
    }
}

impl FromStr for ObjectKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = ObjectKind::from_keyword(&s.to_ascii_uppercase());
        if kind == ObjectKind::Other && !s.eq_ignore_ascii_case("other") {
            Err(format!("unknown object kind `{s}`"))
        } else {
            Ok(kind)
        }
    }
}

/// Structural cues a statement carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryPattern {
    Filtering,
    Ordering,
    Aggregation,
    Joining,
    Grouping,
    Subquery,
    Dml,
    Ddl,
    Txn,
    Config,
}

/// What one statement reads, writes and defines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatementInfo {
    /// Leading keyword, upper-cased.
    pub verb: Option<String>,
    pub tables: BTreeSet<String>,
    pub columns: BTreeSet<String>,
    /// Calls to routines the caller told us are user-defined.
    pub routines: BTreeSet<String>,
    pub defines: Vec<(ObjectKind, String)>,
    pub drops: Vec<(ObjectKind, String)>,
    /// System or session variable names assigned by `SET` / `ALTER SYSTEM`.
    pub config_names: BTreeSet<String>,
    pub key_operations: Vec<String>,
    pub patterns: BTreeSet<QueryPattern>,
    /// Names bound locally (CTEs); never schema dependencies.
    pub local_names: BTreeSet<String>,
}

impl StatementInfo {
    /// Schema-level identifiers: tables, columns, routines and defined objects.
    pub fn dependencies(&self) -> BTreeSet<String> {
        let mut deps: BTreeSet<String> = self.tables.iter().chain(&self.columns).chain(&self.routines).cloned().collect();
        deps.extend(self.defines.iter().chain(&self.drops).map(|(_, n)| n.clone()));
        deps
    }
}

fn is_non_identifier(word: &str) -> bool {
    let up = word.to_ascii_uppercase();
    NON_IDENTIFIERS.contains(&up.as_str()) || KEY_OPERATIONS.contains(&up.as_str())
}

/// Analyzes one statement. `user_routines` lists routine names (already
/// normalized) defined elsewhere in the same script, so calls to them count
/// as dependencies while built-in function calls do not.
pub fn analyze(stmt: &str, dialect: Dialect, user_routines: &BTreeSet<String>) -> StatementInfo {
    let toks = significant(stmt);
    let mut info = StatementInfo {
        verb: toks.iter().find(|t| !t.is_punct('(')).filter(|t| t.kind == TokenKind::Word).map(|t| t.text.to_ascii_uppercase()),
        ..Default::default()
    };
    let verb = info.verb.clone().unwrap_or_default();
    let upper = |t: &Token<'_>| if t.kind == TokenKind::Word { t.text.to_ascii_uppercase() } else { String::new() };

    // Qualified names: ident ( '.' ident )*
    let name_at = |i: usize| -> Option<(String, usize)> {
        let t = toks.get(i)?;
        if !matches!(t.kind, TokenKind::Word | TokenKind::QuotedIdent) {
            return None;
        }
        if t.kind == TokenKind::Word && is_non_identifier(t.text) {
            return None;
        }
        let mut name = dialect.normalize_ident(t);
        let mut j = i + 1;
        while toks.get(j).is_some_and(|p| p.is_punct('.'))
            && toks.get(j + 1).is_some_and(|n| matches!(n.kind, TokenKind::Word | TokenKind::QuotedIdent))
        {
            name.push('.');
            name.push_str(&dialect.normalize_ident(&toks[j + 1]));
            j += 2;
        }
        Some((name, j))
    };

    let mut consumed = vec![false; toks.len()];

    // CTE names.
    if verb == "WITH" {
        let mut i = 1;
        if toks.get(i).is_some_and(|t| t.is_word("RECURSIVE")) {
            i += 1;
        }
        while let Some((name, next)) = name_at(i) {
            info.local_names.insert(name);
            consumed[i..next].iter_mut().for_each(|c| *c = true);
            let mut j = next;
            if toks.get(j).is_some_and(|t| t.is_punct('(')) {
                j = skip_parens(&toks, j);
            }
            if !toks.get(j).is_some_and(|t| t.is_word("AS")) {
                break;
            }
            j = skip_parens(&toks, j + 1);
            if toks.get(j).is_some_and(|t| t.is_punct(',')) {
                i = j + 1;
            } else {
                break;
            }
        }
    }

    // CREATE / DROP object definitions.
    if verb == "CREATE" || verb == "DROP" {
        let start = toks.iter().position(|t| t.kind == TokenKind::Word).unwrap_or(0) + 1;
        let kind_pos = (start..toks.len().min(start + 10))
            .find(|&k| toks[k].kind == TokenKind::Word && OBJECT_KINDS.contains(&upper(&toks[k]).as_str()));
        if let Some(kp) = kind_pos {
            let kind = ObjectKind::from_keyword(&upper(&toks[kp]));
            let mut i = kp + 1;
            while toks.get(i).is_some_and(|t| t.is_word("IF") || t.is_word("NOT") || t.is_word("EXISTS")) {
                i += 1;
            }
            loop {
                let Some((name, next)) = name_at(i) else { break };
                consumed[i..next].iter_mut().for_each(|c| *c = true);
                if verb == "CREATE" {
                    info.defines.push((kind, name));
                    break;
                }
                info.drops.push((kind, name));
                if toks.get(next).is_some_and(|t| t.is_punct(',')) {
                    i = next + 1;
                } else {
                    break;
                }
            }
        }
    }

    // Config assignments.
    let is_alter_system = verb == "ALTER" && toks.get(1).is_some_and(|t| t.is_word("SYSTEM"));
    if verb == "SET" || is_alter_system {
        let mut expect_name = true;
        let mut depth = 0i32;
        for (i, t) in toks.iter().enumerate().skip(if is_alter_system { 3 } else { 1 }) {
            if t.is_punct('(') {
                depth += 1;
            } else if t.is_punct(')') {
                depth -= 1;
            } else if depth == 0 && t.is_punct(',') {
                expect_name = true;
            } else if expect_name && t.kind == TokenKind::Word {
                let up = upper(t);
                if matches!(up.as_str(), "GLOBAL" | "SESSION" | "LOCAL" | "PERSIST" | "PERSIST_ONLY") {
                    continue;
                }
                consumed[i] = true;
                let mut name = t.text.to_lowercase();
                let mut j = i + 1;
                while toks.get(j).is_some_and(|p| p.is_punct('.')) && toks.get(j + 1).is_some_and(|n| n.kind == TokenKind::Word) {
                    name.push('.');
                    name.push_str(&toks[j + 1].text.to_lowercase());
                    consumed[j + 1] = true;
                    j += 2;
                }
                info.config_names.insert(name);
                expect_name = false;
            } else if t.kind == TokenKind::Variable {
                consumed[i] = true;
                expect_name = false;
            } else if t.kind == TokenKind::Operator {
                expect_name = false;
            }
        }
        // `SET NAMES utf8`, `SET x TO y` values are not identifiers either.
        for (i, t) in toks.iter().enumerate() {
            if t.kind == TokenKind::Word && !consumed[i] {
                consumed[i] = true;
            }
        }
    }

    // Table references.
    let mut i = 0;
    while i < toks.len() {
        let up = upper(&toks[i]);
        let table_ctx = matches!(up.as_str(), "FROM" | "JOIN" | "INTO" | "UPDATE" | "REFERENCES" | "STRAIGHT_JOIN")
            || (up == "TABLE" && matches!(verb.as_str(), "ALTER" | "TRUNCATE" | "LOCK" | "RENAME" | "ANALYZE" | "OPTIMIZE" | "CHECK" | "REPAIR"))
            || (up == "ON" && matches!(verb.as_str(), "CREATE" | "GRANT" | "REVOKE") && i > 0 && !info.defines.iter().any(|(k, _)| *k == ObjectKind::Table))
            || (up == "TABLES" && verb == "LOCK");
        if table_ctx && toks[i].kind == TokenKind::Word {
            let mut j = i + 1;
            if up == "ON" {
                // ON t, but not `ON DUPLICATE`, `ON *.*` or the ON of a join.
                if verb == "CREATE" && !info.defines.iter().any(|(k, _)| matches!(k, ObjectKind::Index | ObjectKind::Trigger)) {
                    i += 1;
                    continue;
                }
            }
            while toks.get(j).is_some_and(|t| t.is_word("ONLY") || t.is_word("LATERAL")) {
                j += 1;
            }
            loop {
                let Some((name, next)) = name_at(j) else { break };
                // A name followed by '(' is a table function call, except INSERT INTO t (cols).
                if toks.get(next).is_some_and(|t| t.is_punct('(')) && up != "INTO" && up != "REFERENCES" {
                    break;
                }
                consumed[j..next].iter_mut().for_each(|c| *c = true);
                if !info.local_names.contains(&name) {
                    info.tables.insert(name);
                }
                let mut k = next;
                // Alias: [AS] alias
                if toks.get(k).is_some_and(|t| t.is_word("AS")) {
                    k += 1;
                }
                if let Some(alias) = toks.get(k) {
                    if matches!(alias.kind, TokenKind::Word | TokenKind::QuotedIdent)
                        && !(alias.kind == TokenKind::Word && is_non_identifier(alias.text))
                        && matches!(up.as_str(), "FROM" | "JOIN" | "UPDATE" | "STRAIGHT_JOIN")
                    {
                        info.local_names.insert(dialect.normalize_ident(alias));
                        consumed[k] = true;
                        k += 1;
                    }
                }
                if matches!(up.as_str(), "FROM" | "TABLES") && toks.get(k).is_some_and(|t| t.is_punct(',')) {
                    j = k + 1;
                } else {
                    break;
                }
            }
        }
        i += 1;
    }

    // Routine calls, columns and key operations.
    let mut i = 0;
    while i < toks.len() {
        let t = &toks[i];
        let up = upper(t);
        // key operations
        if t.kind == TokenKind::Word {
            let next_by = toks.get(i + 1).is_some_and(|n| n.is_word("BY"));
            let op = match up.as_str() {
                "ORDER" | "GROUP" | "PARTITION" if next_by => Some(format!("{up} BY")),
                "JOIN" | "STRAIGHT_JOIN" => Some("JOIN".to_string()),
                "TRIGGER" if verb == "CREATE" => Some(up.clone()),
                // `WITH ROLLUP` / `WITH CUBE` are grouping modifiers, not CTEs.
                "WITH" if toks.get(i + 1).is_some_and(|n| n.is_word("ROLLUP") || n.is_word("CUBE")) => None,
                _ if KEY_OPERATIONS.contains(&up.as_str()) && !up.contains(' ') && up != "TRIGGER" => Some(up.clone()),
                _ => None,
            };
            if let Some(op) = op {
                info.key_operations.push(op);
            }
        }
        if consumed[i] {
            i += 1;
            continue;
        }
        if let Some((name, next)) = name_at(i) {
            let is_call = toks.get(next).is_some_and(|n| n.is_punct('('));
            if is_call {
                if user_routines.contains(&name) {
                    info.routines.insert(name);
                }
            } else if !info.local_names.contains(&name) && !name.split('.').next().is_some_and(|q| info.local_names.contains(q)) {
                info.columns.insert(name);
            } else if let Some((_, col)) = name.split_once('.') {
                info.columns.insert(col.to_string());
            }
            i = next;
            continue;
        }
        i += 1;
    }
    // Columns that are really aliases of tables or the tables themselves.
    let tables = info.tables.clone();
    info.columns.retain(|c| !tables.contains(c));

    info.patterns = patterns_for(&toks, &verb, &info);
    info
}

fn skip_parens(toks: &[Token<'_>], open: usize) -> usize {
    if !toks.get(open).is_some_and(|t| t.is_punct('(')) {
        return open;
    }
    let mut depth = 0;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if t.is_punct('(') {
            depth += 1;
        } else if t.is_punct(')') {
            depth -= 1;
            if depth == 0 {
                return k + 1;
            }
        }
    }
    toks.len()
}

fn patterns_for(toks: &[Token<'_>], verb: &str, info: &StatementInfo) -> BTreeSet<QueryPattern> {
    let mut p = BTreeSet::new();
    let has_op = |op: &str| info.key_operations.iter().any(|k| k == op);
    if has_op("WHERE") || has_op("HAVING") {
        p.insert(QueryPattern::Filtering);
    }
    if has_op("ORDER BY") {
        p.insert(QueryPattern::Ordering);
    }
    if has_op("GROUP BY") {
        p.insert(QueryPattern::Grouping);
    }
    if has_op("JOIN") {
        p.insert(QueryPattern::Joining);
    }
    let aggregate_call = toks.windows(2).any(|w| {
        w[0].kind == TokenKind::Word && AGGREGATES.contains(&w[0].text.to_ascii_uppercase().as_str()) && w[1].is_punct('(')
    });
    if aggregate_call {
        p.insert(QueryPattern::Aggregation);
    }
    let nested_select = toks.iter().enumerate().skip(1).any(|(i, t)| {
        (t.is_word("SELECT") || t.is_word("WITH") || t.is_word("VALUES")) && toks[i - 1].is_punct('(')
    });
    if nested_select {
        p.insert(QueryPattern::Subquery);
    }
    match verb {
        "CREATE" | "DROP" | "TRUNCATE" | "RENAME" => {
            p.insert(QueryPattern::Ddl);
        }
        "ALTER" => {
            if toks.get(1).is_some_and(|t| t.is_word("SYSTEM")) {
                p.insert(QueryPattern::Config);
            } else {
                p.insert(QueryPattern::Ddl);
            }
        }
        "INSERT" | "UPDATE" | "DELETE" | "REPLACE" | "MERGE" | "CALL" | "DO" | "LOAD" | "COPY" => {
            p.insert(QueryPattern::Dml);
        }
        "BEGIN" | "COMMIT" | "ROLLBACK" | "START" | "SAVEPOINT" | "RELEASE" | "XA" => {
            p.insert(QueryPattern::Txn);
        }
        "SET" | "FLUSH" | "INSTALL" | "UNINSTALL" | "RESET" | "GRANT" | "REVOKE" => {
            p.insert(QueryPattern::Config);
        }
        "SELECT" | "WITH" | "VALUES" | "TABLE" | "EXPLAIN" | "SHOW" | "ANALYZE" | "DESCRIBE" | "DESC" => {
            if p.is_empty() {
                p.insert(QueryPattern::Dml);
            }
        }
        _ => {}
    }
    p
}

/// Names of routines created anywhere in `statements`.
pub fn defined_routines(statements: &[String], dialect: Dialect) -> BTreeSet<String> {
    let none = BTreeSet::new();
    statements
        .iter()
        .flat_map(|s| analyze(s, dialect, &none).defines)
        .filter(|(k, _)| matches!(k, ObjectKind::Function | ObjectKind::Procedure))
        .map(|(_, n)| n)
        .collect()
}

/// Token sequence used for rewrite distance: significant tokens, words
/// upper-cased, everything else verbatim. Statement boundaries appear as `;`.
pub fn edit_tokens(statements: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for s in statements {
        for t in significant(s) {
            out.push(if t.kind == TokenKind::Word { t.text.to_ascii_uppercase() } else { t.text.to_string() });
        }
        out.push(";".into());
    }
    out
}

/// Renders statements as a script, using `DELIMITER` for bodies that
/// contain their own semicolons.
pub fn render_script(statements: &[String]) -> String {
    let mut out = String::new();
    for s in statements {
        let s = s.trim().trim_end_matches(';').trim_end();
        if has_inner_terminator(s) {
            out.push_str("DELIMITER $$\n");
            out.push_str(s);
            out.push_str("$$\nDELIMITER ;\n");
        } else {
            out.push_str(s);
            out.push_str(";\n");
        }
    }
    out
}

fn has_inner_terminator(stmt: &str) -> bool {
    tokenize(stmt).iter().any(|t| t.is_punct(';'))
}

/// Multiset helper: counts of each string.
pub fn counts<'a>(items: impl IntoIterator<Item = &'a String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for it in items {
        *m.entry(it.clone()).or_insert(0) += 1;
    }
    m
}
