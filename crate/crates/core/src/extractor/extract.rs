//! Raw PoC extraction: prompt, query, parse, expand on demand, examine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::client::{ClientError, Message, TextClient};
use super::embed::Embedder;
use super::envelope::{parse_envelope, Envelope, FORMAT_REMINDER};
use super::library::{Exemplar, ExemplarLibrary, Polarity, RetrievalContext};
use super::prompt::{build_prompt, PromptError};
use crate::fragmenter::Fragment;
use crate::repository::{BugReport, CorpusRecord, PipelineStage};
use crate::sql::{self, Dialect};

/// Where a statement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Fragment(usize),
    ModelInferred,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Fragment(i) => write!(f, "F{i}"),
            Provenance::ModelInferred => f.write_str("model-inferred"),
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Provenance::Fragment(i) => s.serialize_u64(*i as u64),
            Provenance::ModelInferred => s.serialize_str("model-inferred"),
        }
    }
}

impl<'de> Deserialize<'de> for Provenance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Index(i) => Ok(Provenance::Fragment(i)),
            Raw::Tag(t) if t == "model-inferred" => Ok(Provenance::ModelInferred),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("bad provenance `{t}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectedSource {
    Rule,
    Model,
}

/// Statements as extracted from a report, before any repair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPoc {
    pub statements: Vec<String>,
    pub report_id: String,
    pub provenance: BTreeMap<usize, Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_behavior: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_source: Option<ExpectedSource>,
}

impl RawPoc {
    /// A PoC whose statements all come from fragment 0.
    pub fn verbatim(report_id: &str, statements: Vec<String>) -> RawPoc {
        RawPoc {
            provenance: (0..statements.len()).map(|i| (i, Provenance::Fragment(0))).collect(),
            statements,
            report_id: report_id.to_string(),
            expected_behavior: None,
            expected_source: None,
        }
    }

    pub fn has_model_inferred(&self) -> bool {
        self.provenance.values().any(|p| *p == Provenance::ModelInferred)
    }

    pub fn script(&self) -> String {
        sql::render_script(&self.statements)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    /// Exemplars retrieved per prompt (a negative may be appended).
    pub retrieval_k: usize,
    pub max_rounds: usize,
    /// Lines added on each side of every fragment per expansion round.
    pub expansion_lines: usize,
    pub token_budget: usize,
    pub library_cap: usize,
    pub embedding_dim: usize,
    /// Case-insensitive substrings that mark client or server output.
    pub denylist: Vec<String>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            retrieval_k: 3,
            max_rounds: 3,
            expansion_lines: 8,
            token_budget: 4096,
            library_cap: super::library::DEFAULT_CAP,
            embedding_dim: 128,
            denylist: [
                "mysql>", "mariadb [", "postgres=#", "sql>", "query ok", "rows in set", "row in set", "empty set",
                "rows affected", "row affected", "+---", "|---", "warnings:", "records:", "duplicates:",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.retrieval_k == 0 || self.max_rounds == 0 || self.token_budget == 0 || self.library_cap == 0 || self.embedding_dim == 0 {
            return Err("extractor retrieval_k, max_rounds, token_budget, library_cap and embedding_dim must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    Contextual,
    Structural,
    Boilerplate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject { kind: RejectKind, reason: String },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

fn word_set(lines: &[String]) -> BTreeSet<String> {
    lines
        .iter()
        .flat_map(|l| l.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '$')).filter(|w| !w.is_empty()).map(|w| w.to_lowercase()))
        .collect()
}

/// Checks an extracted PoC against its report.
///
/// Rejects when a statement references an identifier that neither appears
/// in the report body nor is created by an earlier statement, when a
/// statement does not start with a subject keyword, or when a statement
/// contains denylisted client/server output.
pub fn self_examine(poc: &RawPoc, report: &BugReport, subjects: &BTreeSet<String>, denylist: &[String]) -> Verdict {
    let dialect: Dialect = report.dbms.parse().unwrap_or_default();
    for (i, stmt) in poc.statements.iter().enumerate() {
        let low = stmt.to_lowercase();
        if let Some(d) = denylist.iter().find(|d| low.contains(&d.to_lowercase())) {
            return Verdict::Reject { kind: RejectKind::Boilerplate, reason: format!("statement {} contains `{d}`", i + 1) };
        }
        match sql::first_keyword(stmt) {
            Some(k) if subjects.contains(&k) => {}
            other => {
                return Verdict::Reject {
                    kind: RejectKind::Structural,
                    reason: format!("statement {} does not start with a SQL keyword ({})", i + 1, other.unwrap_or_else(|| "nothing".into())),
                }
            }
        }
    }
    let body = word_set(&report.body);
    let routines = sql::defined_routines(&poc.statements, dialect);
    let mut defined: BTreeSet<String> = BTreeSet::new();
    for (i, stmt) in poc.statements.iter().enumerate() {
        let info = sql::analyze(stmt, dialect, &routines);
        let own: BTreeSet<String> = info.defines.iter().map(|(_, n)| n.to_lowercase()).collect();
        for dep in info.dependencies() {
            let dep = dep.to_lowercase();
            if own.contains(&dep) || defined.contains(&dep) {
                continue;
            }
            let known = dep.split('.').all(|part| body.contains(part) || defined.contains(part));
            if !known {
                return Verdict::Reject {
                    kind: RejectKind::Contextual,
                    reason: format!("statement {} references `{dep}`, which is neither in the report nor created earlier", i + 1),
                };
            }
        }
        for name in own {
            if let Some(last) = name.rsplit('.').next() {
                defined.insert(last.to_string());
            }
            defined.insert(name);
        }
    }
    Verdict::Accept
}

fn normalize_for_match(text: &str) -> String {
    let joined: Vec<&str> = text.lines().map(sql::strip_prompt).collect();
    let collapsed = joined.join(" ").split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(|c: char| c == ';' || c.is_whitespace()).to_string()
}

/// Maps each statement to the first fragment that contains it.
pub fn compute_provenance(statements: &[String], fragments: &[Fragment]) -> BTreeMap<usize, Provenance> {
    let frag_text: Vec<String> = fragments.iter().map(|f| normalize_for_match(&f.text())).collect();
    statements
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let needle = normalize_for_match(s);
            let p = frag_text.iter().position(|f| !needle.is_empty() && f.contains(&needle)).map_or(Provenance::ModelInferred, Provenance::Fragment);
            (i, p)
        })
        .collect()
}

fn symptom_patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            r"ERROR\s+\d{3,5}\b[^\r\n]*",
            r"(?i)\b(?:got signal \d+|signal \d+|SIGSEGV|SIGABRT|segmentation fault|segfault)\b[^\r\n]*",
            r"(?i)\bassertion\b[^\r\n]*\bfail(?:ed|ure)\b[^\r\n]*",
            r"(?i)\blost connection to (?:mysql |mariadb )?server\b[^\r\n]*",
            r"(?i)\bserver has gone away\b",
            r"(?i)\bserver (?:has )?crash(?:ed|es)?\b[^\r\n]*",
            r"(?i)\bcrash(?:es|ed)?\b[^\r\n]*",
        ]
        .iter()
        .map(|p| Regex::new(p).expect("static pattern"))
        .collect()
    })
}

/// First symptom phrase in the body, by pattern priority then line order.
/// The result is always a verbatim substring of one body line.
pub fn mine_expected_behavior(body: &[String]) -> Option<String> {
    for re in symptom_patterns() {
        for line in body {
            if let Some(m) = re.find(line) {
                let s = m.as_str().trim_end();
                if !s.is_empty() {
                    return Some(s.to_string());
                }
            }
        }
    }
    None
}

/// Body line indices shown as extra context in `round` (1-based); round 1
/// has none. Each round's set contains the previous one.
pub fn expansion_window(body_len: usize, fragments: &[Fragment], round: usize, width: usize) -> BTreeSet<usize> {
    let pad = width * round.saturating_sub(1);
    let covered: BTreeSet<usize> = fragments.iter().flat_map(|f| f.start_index..f.end_index()).collect();
    let mut out = BTreeSet::new();
    if pad == 0 {
        return out;
    }
    for f in fragments {
        let lo = f.start_index.saturating_sub(pad);
        let hi = (f.end_index() + pad).min(body_len);
        out.extend((lo..hi).filter(|i| !covered.contains(i)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractionOutcome {
    Extracted { poc: RawPoc },
    NonExtractable { reason: String, details: Vec<String> },
}

/// Everything one extraction did, for logging and exemplar promotion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionRun {
    pub report_id: String,
    pub outcome: ExtractionOutcome,
    pub rounds: usize,
    pub format_retries: usize,
    pub verdict: Option<Verdict>,
    /// Exemplar ids retrieved for the prompt.
    pub retrieved: Vec<String>,
    /// Context line indices per round.
    pub context_rounds: Vec<BTreeSet<usize>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("record {0} is not at the fragmented stage")]
    NotFragmented(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Read-only inputs shared by every extraction in a batch.
pub struct ExtractionEnv<'a> {
    pub client: &'a dyn TextClient,
    pub library: &'a ExemplarLibrary,
    pub embedder: &'a dyn Embedder,
    pub subjects: &'a BTreeSet<String>,
    pub cfg: &'a ExtractorConfig,
}

pub(crate) fn query(client: &dyn TextClient, messages: &[Message], retries: &mut usize) -> Result<Result<Envelope, String>, ClientError> {
    let text = client.complete(messages)?;
    match parse_envelope(&text) {
        Ok(env) => Ok(Ok(env)),
        Err(first) => {
            *retries += 1;
            let mut again = messages.to_vec();
            again.push(Message::user(FORMAT_REMINDER));
            let text = client.complete(&again)?;
            Ok(parse_envelope(&text).map_err(|e| format!("{first}; after reminder: {e}")))
        }
    }
}

pub fn extract_raw_poc(record: &CorpusRecord, env: &ExtractionEnv<'_>) -> Result<ExtractionRun, ExtractError> {
    let report = &record.report;
    let fragments = match (&record.fragments, record.pipeline_stage) {
        (Some(f), PipelineStage::Fragmented) if !f.is_empty() => f,
        _ => return Err(ExtractError::NotFragmented(report.id.clone())),
    };
    let ctx = RetrievalContext { summary: report.summary(), fragments: fragments.iter().map(Fragment::text).collect::<Vec<_>>().join("\n") };
    let refs = env.library.retrieve(&ctx, env.cfg.retrieval_k, env.embedder);
    let mut run = ExtractionRun {
        report_id: report.id.clone(),
        outcome: ExtractionOutcome::NonExtractable { reason: String::new(), details: vec![] },
        rounds: 0,
        format_retries: 0,
        verdict: None,
        retrieved: refs.iter().map(|e| e.id.clone()).collect(),
        context_rounds: Vec::new(),
    };
    let non = |reason: &str, details: Vec<String>| ExtractionOutcome::NonExtractable { reason: reason.to_string(), details };

    for round in 1..=env.cfg.max_rounds {
        run.rounds = round;
        let window = expansion_window(report.body.len(), fragments, round, env.cfg.expansion_lines);
        let context: BTreeMap<usize, String> = window.iter().map(|&i| (i, report.body[i].clone())).collect();
        run.context_rounds.push(window);
        let bundle = match build_prompt(report, fragments, &refs, &context, env.cfg.token_budget) {
            Ok(b) => b,
            Err(e @ PromptError::TokenBudgetExceeded { .. }) => {
                run.outcome = non("token_budget_exceeded", vec![e.to_string()]);
                return Ok(run);
            }
            Err(PromptError::NoFragments) => return Err(ExtractError::NotFragmented(report.id.clone())),
        };
        let envelope = match query(env.client, &bundle.messages(), &mut run.format_retries)? {
            Ok(e) => e,
            Err(msg) => {
                run.outcome = non("unparseable_response", vec![msg]);
                return Ok(run);
            }
        };
        match envelope {
            Envelope::InsufficientContext { reason } => {
                if round == env.cfg.max_rounds {
                    let mut details = vec![format!("still insufficient after {round} rounds")];
                    if !reason.is_empty() {
                        details.push(reason);
                    }
                    run.outcome = non("budget_exhausted", details);
                    return Ok(run);
                }
            }
            Envelope::NonExtractable { reason } => {
                run.outcome = non("model_verdict", vec![reason]);
                return Ok(run);
            }
            Envelope::Statements { statements, expected, .. } => {
                let provenance = compute_provenance(&statements, fragments);
                let (expected_behavior, expected_source) = match mine_expected_behavior(&report.body) {
                    Some(e) => (Some(e), Some(ExpectedSource::Rule)),
                    None => match expected.filter(|e| report.body.iter().any(|l| l.contains(e.as_str()))) {
                        Some(e) => (Some(e), Some(ExpectedSource::Model)),
                        None => (None, None),
                    },
                };
                let poc = RawPoc { statements, report_id: report.id.clone(), provenance, expected_behavior, expected_source };
                let verdict = self_examine(&poc, report, env.subjects, &env.cfg.denylist);
                run.verdict = Some(verdict.clone());
                run.outcome = match verdict {
                    Verdict::Accept => ExtractionOutcome::Extracted { poc },
                    Verdict::Reject { kind, reason } => non("self_examination", vec![format!("{}: {reason}", serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())]),
                };
                return Ok(run);
            }
        }
    }
    unreachable!("the loop returns on its last round")
}

/// An accepted extraction qualifies for the library when it needed no
/// format retry, no context expansion and no model-inferred statements.
pub fn promotion_candidate(run: &ExtractionRun, record: &CorpusRecord, embedder: &dyn Embedder) -> Option<Exemplar> {
    let ExtractionOutcome::Extracted { poc } = &run.outcome else { return None };
    if run.verdict != Some(Verdict::Accept) || run.format_retries > 0 || run.rounds != 1 || poc.has_model_inferred() {
        return None;
    }
    let fragments = record.fragments.as_deref().unwrap_or_default();
    let mut trace = vec![format!("The summary describes the symptom: {}.", record.report.title)];
    for (i, p) in &poc.provenance {
        if let Provenance::Fragment(f) = p {
            let stage = fragments.get(*f).map(|x| x.capture_stage.as_str()).unwrap_or("fragment");
            trace.push(format!("Statement {} is taken verbatim from F{f} ({stage}).", i + 1));
        }
    }
    if let (Some(e), Some(src)) = (&poc.expected_behavior, poc.expected_source) {
        let how = match src {
            ExpectedSource::Rule => "matched by a symptom rule",
            ExpectedSource::Model => "quoted by the model",
        };
        trace.push(format!("Expected behavior `{e}` is {how}."));
    }
    trace.push("Self-examination passed: identifiers resolve, every statement is SQL, no client output.".into());
    let text = fragments.iter().map(Fragment::text).collect::<Vec<_>>().join("\n");
    Some(Exemplar::new(format!("ex-{}", record.report.id), Polarity::Positive, record.report.summary(), &text, Some(poc.clone()), trace, embedder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmenter::CaptureStage;
    use crate::repository::{ReportSource, ReportStatus};
    use chrono::{TimeZone, Utc};

    fn report(body: &[&str]) -> BugReport {
        let t = Utc.with_ymd_and_hms(2021, 1, 12, 0, 0, 0).unwrap();
        BugReport {
            id: "mysql#9".into(),
            source: ReportSource::Fixture,
            title: "t".into(),
            status: ReportStatus::Confirmed,
            dbms: "mysql".into(),
            versions: vec![],
            created_at: t,
            last_modified: t,
            body: body.iter().map(|s| s.to_string()).collect(),
            labels: vec![],
            cve_ids: vec![],
            last_collected_at: t,
        }
    }

    fn subjects() -> BTreeSet<String> {
        sql::BASE_SUBJECT_KEYWORDS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn verbatim_poc_is_accepted() {
        let r = report(&["```sql", "CREATE TABLE t1 (a INT);", "SELECT a FROM t1;", "```"]);
        let poc = RawPoc::verbatim(&r.id, vec!["CREATE TABLE t1 (a INT)".into(), "SELECT a FROM t1".into()]);
        assert_eq!(self_examine(&poc, &r, &subjects(), &ExtractorConfig::default().denylist), Verdict::Accept);
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let r = report(&["SELECT a FROM t1;"]);
        let poc = RawPoc::verbatim(&r.id, vec!["SELECT a FROM ghost_t".into()]);
        assert!(matches!(
            self_examine(&poc, &r, &subjects(), &[]),
            Verdict::Reject { kind: RejectKind::Contextual, .. }
        ));
    }

    #[test]
    fn prompt_residue_is_rejected() {
        let r = report(&["mysql> SELECT 1;"]);
        let poc = RawPoc::verbatim(&r.id, vec!["mysql> SELECT 1".into()]);
        let v = self_examine(&poc, &r, &subjects(), &ExtractorConfig::default().denylist);
        assert!(matches!(v, Verdict::Reject { kind: RejectKind::Boilerplate, .. }));
        let v = self_examine(&poc, &r, &subjects(), &[]);
        assert!(matches!(v, Verdict::Reject { kind: RejectKind::Structural, .. }));
    }

    #[test]
    fn provenance_matches_through_prompts() {
        let frags = vec![Fragment {
            start_index: 0,
            lines: vec!["mysql> SELECT a".into(), "    -> FROM t;".into()],
            capture_stage: CaptureStage::BacktrackedStatement,
            score: None,
        }];
        let p = compute_provenance(&["SELECT a FROM t".into(), "DROP TABLE t".into()], &frags);
        assert_eq!(p[&0], Provenance::Fragment(0));
        assert_eq!(p[&1], Provenance::ModelInferred);
    }

    #[test]
    fn expected_behavior_is_verbatim() {
        let body: Vec<String> = ["it fails", "ERROR 2027 (HY000): Malformed packet", "then the server crashed"].iter().map(|s| s.to_string()).collect();
        let e = mine_expected_behavior(&body).unwrap();
        assert_eq!(e, "ERROR 2027 (HY000): Malformed packet");
        assert!(body.iter().any(|l| l.contains(&e)));
        assert_eq!(mine_expected_behavior(&["all good".to_string()]), None);
    }

    #[test]
    fn expansion_grows_monotonically() {
        let frags = vec![Fragment { start_index: 20, lines: vec!["x".into(); 2], capture_stage: CaptureStage::ScoredLine, score: Some(5.0) }];
        let r1 = expansion_window(100, &frags, 1, 8);
        let r2 = expansion_window(100, &frags, 2, 8);
        let r3 = expansion_window(100, &frags, 3, 8);
        assert!(r1.is_empty());
        assert_eq!(r2.len(), 16);
        assert!(r2.is_subset(&r3));
        assert!(!r2.contains(&20));
    }

    #[test]
    fn provenance_serializes_as_index_or_tag() {
        let mut m = BTreeMap::new();
        m.insert(0usize, Provenance::Fragment(2));
        m.insert(1usize, Provenance::ModelInferred);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"0":2,"1":"model-inferred"}"#);
        let back: BTreeMap<usize, Provenance> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
