//! The tagged answer format models must use.
//!
//! ````text
//! ```envelope
//! STATEMENTS:
//! CREATE TABLE t (a INT);
//! SELECT * FROM t;
//! RENAME: old_name -> new_name
//! EXPECTED: ERROR 1146
//! ```
//! ````
//!
//! The first non-blank line inside the fence is `STATEMENTS:`,
//! `INSUFFICIENT_CONTEXT` or `NON_EXTRACTABLE: <reason>`. `RENAME:` and
//! `EXPECTED:` lines may appear anywhere after `STATEMENTS:`; everything
//! else is SQL, split with `DELIMITER` support.

use crate::sql;

pub const FENCE_OPEN: &str = "```envelope";

/// Appended to a request when the previous answer did not parse.
pub const FORMAT_REMINDER: &str = "Your previous answer did not follow the required format. Answer again with exactly one \
```envelope fenced block whose first line is STATEMENTS:, INSUFFICIENT_CONTEXT, or NON_EXTRACTABLE: <reason>.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Envelope {
    Statements { statements: Vec<String>, renames: Vec<(String, String)>, expected: Option<String> },
    InsufficientContext { reason: String },
    NonExtractable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("no ```envelope block in response")]
    MissingFence,
    #[error("envelope block is not closed")]
    Unclosed,
    #[error("unknown envelope tag `{0}`")]
    UnknownTag(String),
    #[error("STATEMENTS envelope carries no SQL")]
    NoStatements,
    #[error("malformed RENAME line `{0}`")]
    BadRename(String),
}

pub fn parse_envelope(text: &str) -> Result<Envelope, EnvelopeError> {
    let lines: Vec<&str> = text.lines().collect();
    let open = lines.iter().position(|l| l.trim().eq_ignore_ascii_case(FENCE_OPEN)).ok_or(EnvelopeError::MissingFence)?;
    let close = (open + 1..lines.len()).find(|&j| lines[j].trim() == "```").ok_or(EnvelopeError::Unclosed)?;
    let body = &lines[open + 1..close];
    let start = body.iter().position(|l| !l.trim().is_empty()).ok_or(EnvelopeError::UnknownTag(String::new()))?;
    let head = body[start].trim();
    let rest = &body[start + 1..];
    let upper = head.to_ascii_uppercase();
    if upper.starts_with("INSUFFICIENT_CONTEXT") {
        let reason = head["INSUFFICIENT_CONTEXT".len()..].trim_start_matches(':').trim();
        return Ok(Envelope::InsufficientContext { reason: reason.to_string() });
    }
    if upper.starts_with("NON_EXTRACTABLE") {
        let inline = head["NON_EXTRACTABLE".len()..].trim_start_matches(':').trim();
        let reason = if inline.is_empty() { rest.iter().map(|l| l.trim()).collect::<Vec<_>>().join(" ").trim().to_string() } else { inline.to_string() };
        return Ok(Envelope::NonExtractable { reason });
    }
    if !upper.starts_with("STATEMENTS:") {
        return Err(EnvelopeError::UnknownTag(head.to_string()));
    }
    let mut sql_text = String::new();
    let inline = head["STATEMENTS:".len()..].trim();
    if !inline.is_empty() {
        sql_text.push_str(inline);
        sql_text.push('\n');
    }
    let mut renames = Vec::new();
    let mut expected = None;
    for l in rest {
        let t = l.trim();
        let up = t.to_ascii_uppercase();
        if up.starts_with("RENAME:") {
            let spec = t["RENAME:".len()..].trim();
            let (old, new) = spec.split_once("->").ok_or_else(|| EnvelopeError::BadRename(t.to_string()))?;
            let (old, new) = (old.trim(), new.trim());
            if old.is_empty() || new.is_empty() {
                return Err(EnvelopeError::BadRename(t.to_string()));
            }
            renames.push((old.to_string(), new.to_string()));
        } else if up.starts_with("EXPECTED:") {
            let e = t["EXPECTED:".len()..].trim();
            if !e.is_empty() {
                expected = Some(e.to_string());
            }
        } else {
            sql_text.push_str(l);
            sql_text.push('\n');
        }
    }
    let statements = sql::split_statements(&sql_text);
    if statements.is_empty() {
        return Err(EnvelopeError::NoStatements);
    }
    Ok(Envelope::Statements { statements, renames, expected })
}

/// Renders an envelope; the inverse of [`parse_envelope`] for well-formed
/// inputs. Used for exemplar answers and scripted fixtures.
pub fn render_envelope(env: &Envelope) -> String {
    let mut s = String::from(FENCE_OPEN);
    s.push('\n');
    match env {
        Envelope::Statements { statements, renames, expected } => {
            s.push_str("STATEMENTS:\n");
            s.push_str(&sql::render_script(statements));
            for (o, n) in renames {
                s.push_str(&format!("RENAME: {o} -> {n}\n"));
            }
            if let Some(e) = expected {
                s.push_str(&format!("EXPECTED: {e}\n"));
            }
        }
        Envelope::InsufficientContext { reason } => {
            s.push_str("INSUFFICIENT_CONTEXT");
            if !reason.is_empty() {
                s.push_str(&format!(": {reason}"));
            }
            s.push('\n');
        }
        Envelope::NonExtractable { reason } => s.push_str(&format!("NON_EXTRACTABLE: {reason}\n")),
    }
    s.push_str("```\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statements_with_renames_and_expectation() {
        let text = "Sure.\n```envelope\nSTATEMENTS:\nCREATE TABLE t (a INT);\nRENAME: t -> t2\nSELECT a\nFROM t2;\nEXPECTED: ERROR 2027\n```\n";
        match parse_envelope(text).unwrap() {
            Envelope::Statements { statements, renames, expected } => {
                assert_eq!(statements, vec!["CREATE TABLE t (a INT)", "SELECT a\nFROM t2"]);
                assert_eq!(renames, vec![("t".to_string(), "t2".to_string())]);
                assert_eq!(expected.as_deref(), Some("ERROR 2027"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn verdict_tags() {
        assert_eq!(
            parse_envelope("```envelope\nNON_EXTRACTABLE: only a stack trace\n```").unwrap(),
            Envelope::NonExtractable { reason: "only a stack trace".into() }
        );
        assert!(matches!(parse_envelope("```envelope\nINSUFFICIENT_CONTEXT\n```").unwrap(), Envelope::InsufficientContext { .. }));
    }

    #[test]
    fn free_text_is_rejected() {
        assert_eq!(parse_envelope("SELECT 1;"), Err(EnvelopeError::MissingFence));
        assert_eq!(parse_envelope("```envelope\nSTATEMENTS:\n```"), Err(EnvelopeError::NoStatements));
        assert!(matches!(parse_envelope("```envelope\nMAYBE\n```"), Err(EnvelopeError::UnknownTag(_))));
    }

    #[test]
    fn render_round_trips() {
        let env = Envelope::Statements {
            statements: vec!["CREATE FUNCTION f() RETURNS INT BEGIN RETURN 1; END".into(), "SELECT f()".into()],
            renames: vec![],
            expected: Some("ERROR 1418".into()),
        };
        assert_eq!(parse_envelope(&render_envelope(&env)).unwrap(), env);
    }
}
