//! Regression and cross-DBMS replay of adapted test cases.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::signature::signature;
use super::CampaignError;
use crate::adapter::{Expectation, TestCase};
use crate::harness::{ExecutionOutcome, Executor, OutcomeKind};
use crate::repository::{CorpusRecord, ReportStatus};
use crate::sql::{self, Dialect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StillFixed,
    Regression,
    NewSymptom,
    CrossHit,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::StillFixed => "still_fixed",
            Verdict::Regression => "regression",
            Verdict::NewSymptom => "new_symptom",
            Verdict::CrossHit => "cross_hit",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An adapted case together with what replay needs from its origin report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCase {
    pub origin_report_id: String,
    pub origin_dbms: String,
    pub origin_status: ReportStatus,
    pub test_case: TestCase,
}

impl ReplayCase {
    pub fn from_record(r: &CorpusRecord) -> Option<Self> {
        Some(ReplayCase {
            origin_report_id: r.report.id.clone(),
            origin_dbms: r.report.dbms.clone(),
            origin_status: r.report.status,
            test_case: r.test_case.clone()?,
        })
    }

    fn symptom(&self) -> Option<&str> {
        match &self.test_case.expectation {
            Expectation::ExpectBug(s) => Some(s),
            Expectation::ExpectClean => None,
        }
    }
}

/// A backend instance taking part in a replay.
pub struct ReplayTarget {
    pub executor: Executor,
    pub dbms: String,
    /// Newest version under test.
    pub latest: bool,
    /// A version in which the origin bugs are marked fixed.
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFinding {
    pub origin_report_id: String,
    pub origin_dbms: String,
    pub replay_backend: String,
    pub replay_version: String,
    /// `None` when the case was filtered out before execution.
    pub outcome: Option<ExecutionOutcome>,
    pub verdict: Verdict,
    pub signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Does `outcome` show the recorded symptom (`ERROR <code>`, `crash ...`,
/// `timeout`, `connection lost`)?
pub fn symptom_matches(symptom: &str, outcome: &ExecutionOutcome) -> bool {
    let s = symptom.trim();
    match &outcome.kind {
        OutcomeKind::Error { error, .. } => {
            s.strip_prefix("ERROR ").map(str::trim).is_some_and(|code| code.eq_ignore_ascii_case(&error.code))
        }
        OutcomeKind::Crash { .. } => s.starts_with("crash"),
        OutcomeKind::Timeout { .. } => s == "timeout",
        OutcomeKind::ConnectionLost { .. } => s == "connection lost",
        OutcomeKind::Clean => false,
    }
}

fn run_all(targets: &mut [ReplayTarget], cases: &[&ReplayCase]) -> Result<Vec<Vec<ExecutionOutcome>>, CampaignError> {
    // One worker per backend instance; each runs the cases sequentially with
    // harness cleanup in between.
    std::thread::scope(|scope| {
        let handles: Vec<_> = targets
            .iter_mut()
            .map(|t| {
                scope.spawn(move || -> Result<Vec<ExecutionOutcome>, CampaignError> {
                    let mut out = Vec::with_capacity(cases.len());
                    for c in cases {
                        t.executor.ensure_healthy()?;
                        out.push(t.executor.execute(&c.test_case.statements)?.outcome);
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("replay worker panicked")).collect()
    })
}

fn finding(case: &ReplayCase, target: &ReplayTarget, outcome: Option<ExecutionOutcome>, verdict: Verdict, reason: Option<&str>) -> ReplayFinding {
    let backend = target.executor.backend.as_ref();
    ReplayFinding {
        origin_report_id: case.origin_report_id.clone(),
        origin_dbms: case.origin_dbms.clone(),
        replay_backend: backend.id().to_string(),
        replay_version: backend.version().to_string(),
        signature: outcome.as_ref().map(signature).unwrap_or_default(),
        outcome,
        verdict,
        reason: reason.map(str::to_string),
    }
}

fn sort_findings(v: &mut [ReplayFinding]) {
    v.sort_by(|a, b| (&a.origin_report_id, &a.replay_backend, &a.replay_version).cmp(&(&b.origin_report_id, &b.replay_backend, &b.replay_version)));
}

/// Replays fixed bugs on every target. A regression needs the origin
/// symptom on a latest target and on at least one fixed-marked target.
pub fn regression_replay(cases: &[ReplayCase], targets: &mut [ReplayTarget]) -> Result<Vec<ReplayFinding>, CampaignError> {
    if targets.is_empty() {
        return Err(CampaignError::NoBackends);
    }
    let refs: Vec<&ReplayCase> = cases.iter().collect();
    let outcomes = run_all(targets, &refs)?;
    let mut findings = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let symptom = case.symptom();
        let reproduced: Vec<bool> = outcomes.iter().map(|o| symptom.is_some_and(|s| symptom_matches(s, &o[ci]))).collect();
        let on_latest = targets.iter().zip(&reproduced).any(|(t, r)| t.latest && *r);
        let on_fixed = targets.iter().zip(&reproduced).any(|(t, r)| t.fixed && *r);
        for (ti, target) in targets.iter().enumerate() {
            let out = outcomes[ti][ci].clone();
            let (verdict, reason) = if case.origin_status != ReportStatus::Fixed {
                (Verdict::Inconclusive, Some("origin_not_fixed"))
            } else if symptom.is_none() {
                (Verdict::Inconclusive, Some("no_origin_symptom"))
            } else if reproduced[ti] {
                match (on_latest, on_fixed) {
                    (true, true) => (Verdict::Regression, None),
                    (true, false) => (Verdict::Inconclusive, Some("not_reproduced_on_fixed_version")),
                    _ => (Verdict::Inconclusive, Some("not_reproduced_on_latest")),
                }
            } else if out.is_clean() {
                (Verdict::StillFixed, None)
            } else if out.is_abnormal() {
                (Verdict::NewSymptom, None)
            } else {
                (Verdict::Inconclusive, Some("different_error"))
            };
            findings.push(finding(case, target, Some(out), verdict, reason));
        }
    }
    sort_findings(&mut findings);
    Ok(findings)
}

/// Tokenizer-level check that every statement reads as dialect `d`.
pub fn dialect_compatible(statements: &[String], d: Dialect) -> Result<(), String> {
    let subjects = d.subject_keywords();
    let foreign = d.foreign_keywords();
    for s in statements {
        let body = sql::strip_prompt(s);
        let Some(first) = sql::first_keyword(body) else { continue };
        if !subjects.contains(&first.as_str()) {
            return Err(format!("`{first}` does not start a {d} statement"));
        }
        let upper = body.to_ascii_uppercase();
        for tok in sql::significant(&upper) {
            if let Some(f) = foreign.iter().find(|f| tok.text == **f) {
                return Err(format!("`{f}` is not {d} syntax"));
            }
        }
    }
    Ok(())
}

/// Replays cases from one DBMS on a target of another.
pub fn cross_replay(cases: &[ReplayCase], target: &mut ReplayTarget) -> Result<Vec<ReplayFinding>, CampaignError> {
    let dialect = target.executor.dialect();
    let mut findings = Vec::new();
    for case in cases {
        if case.origin_dbms.eq_ignore_ascii_case(&target.dbms) {
            return Err(CampaignError::SameDbms(target.dbms.clone()));
        }
        if let Err(why) = dialect_compatible(&case.test_case.statements, dialect) {
            log::info!("{}: skipped on {}: {why}", case.origin_report_id, target.dbms);
            findings.push(finding(case, target, None, Verdict::Inconclusive, Some("dialect_mismatch")));
            continue;
        }
        target.executor.ensure_healthy()?;
        let out = target.executor.execute(&case.test_case.statements)?.outcome;
        let hit = matches!(out.kind, OutcomeKind::Crash { .. }) || case.symptom().is_some_and(|s| symptom_matches(s, &out));
        let (verdict, reason) = if hit {
            (Verdict::CrossHit, None)
        } else if out.is_clean() {
            (Verdict::Inconclusive, Some("not_reproduced"))
        } else {
            (Verdict::Inconclusive, Some("different_error"))
        };
        findings.push(finding(case, target, Some(out), verdict, reason));
    }
    sort_findings(&mut findings);
    Ok(findings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingGroup {
    pub signature: String,
    pub representative: ReplayFinding,
    pub count: usize,
    pub members: Vec<String>,
}

/// Groups findings by signature, keeping the first of each as representative.
pub fn dedupe_findings(findings: &[ReplayFinding]) -> Vec<FindingGroup> {
    let mut groups: BTreeMap<&str, FindingGroup> = BTreeMap::new();
    let mut order = Vec::new();
    for f in findings {
        let member = format!("{}@{}", f.origin_report_id, f.replay_backend);
        match groups.get_mut(f.signature.as_str()) {
            Some(g) => {
                g.count += 1;
                g.members.push(member);
            }
            None => {
                order.push(f.signature.as_str());
                groups.insert(&f.signature, FindingGroup { signature: f.signature.clone(), representative: f.clone(), count: 1, members: vec![member] });
            }
        }
    }
    order.into_iter().map(|s| groups.remove(s).expect("group exists")).collect()
}

pub fn write_findings_jsonl(findings: &[ReplayFinding], mut w: impl Write) -> std::io::Result<()> {
    for f in findings {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn component(f: &ReplayFinding) -> String {
    match f.outcome.as_ref().map(|o| &o.kind) {
        Some(OutcomeKind::Crash { crash, .. }) => crash.frames.first().map(|fr| super::normalize_frame(fr)).unwrap_or_else(|| "crash".into()),
        Some(OutcomeKind::Error { error, .. }) => format!("error {}", error.code),
        Some(OutcomeKind::Timeout { .. }) => "timeout".into(),
        Some(OutcomeKind::ConnectionLost { .. }) => "connection".into(),
        Some(OutcomeKind::Clean) | None => "-".into(),
    }
}

/// Summary table: id, status, component, method, description.
pub fn render_findings_table(findings: &[ReplayFinding], method: &str) -> String {
    let rows: Vec<[String; 5]> = findings
        .iter()
        .map(|f| {
            let mut desc = format!("{} on {} {}", f.origin_report_id, f.replay_backend, f.replay_version);
            if let Some(o) = &f.outcome {
                desc.push_str(&format!(": {}", o.symptom()));
            }
            if let Some(r) = &f.reason {
                desc.push_str(&format!(" ({r})"));
            }
            [f.origin_report_id.clone(), f.verdict.to_string(), component(f), method.to_string(), desc]
        })
        .collect();
    let header = ["ID", "Status", "Component", "Method", "Description"];
    let mut w = header.map(str::len);
    for r in &rows {
        for (i, c) in r.iter().enumerate().take(4) {
            w[i] = w[i].max(c.len());
        }
    }
    let line = |cols: [&str; 5]| format!("{:<a$}  {:<b$}  {:<c$}  {:<d$}  {}\n", cols[0], cols[1], cols[2], cols[3], cols[4], a = w[0], b = w[1], c = w[2], d = w[3]);
    let mut s = line(header);
    for r in &rows {
        s.push_str(&line([&r[0], &r[1], &r[2], &r[3], &r[4]]));
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::adapter::{capture_anchors, check_constraints};
    use crate::harness::{FakeProgram, RiskClass, RiskLevel, ScriptedFake};

    pub(crate) fn case(id: &str, dbms: &str, status: ReportStatus, stmts: &[&str], expectation: Expectation) -> ReplayCase {
        let statements: Vec<String> = stmts.iter().map(|s| s.to_string()).collect();
        let p = capture_anchors(&statements, Dialect::Generic);
        ReplayCase {
            origin_report_id: id.into(),
            origin_dbms: dbms.into(),
            origin_status: status,
            test_case: TestCase {
                constraint_report: check_constraints(&statements, &statements, &p, 0.4, &[], Dialect::Generic),
                statements,
                origin_report_id: id.into(),
                expectation,
                risk_tier: RiskClass { value: RiskLevel::Low, triggering_statements: vec![] },
                adaptation_log: vec![],
                iterations: 1,
                backend_id: "origin".into(),
            },
        }
    }

    pub(crate) fn target(program: &str, dbms: &str, latest: bool, fixed: bool) -> ReplayTarget {
        let fake = ScriptedFake::new(FakeProgram::from_toml(program).unwrap()).unwrap();
        ReplayTarget { executor: Executor::new(Box::new(fake)), dbms: dbms.into(), latest, fixed }
    }

    const MONET_CRASH: &str = "id = \"monet-new\"\ndialect = \"monetdb\"\nversion = \"11.49\"\n[[rule]]\npattern = 'GROUP BY.*ANY'\nresult = { kind = \"crash\", signal = \"SIGSEGV\", frames = [\"#0 0x1 in rel_groupby_ops (sql=0x2) at rel.c:10\", \"#1 exp_any\", \"#2 rel_select\"] }\n";
    const MONET_OK: &str = "id = \"monet-old\"\ndialect = \"monetdb\"\nversion = \"11.47\"\n";

    fn monet_case() -> ReplayCase {
        case(
            "monetdb#7400",
            "monetdb",
            ReportStatus::Fixed,
            &["CREATE TABLE t (a INT, b INT)", "SELECT a FROM t GROUP BY a HAVING a > ANY (SELECT b FROM t)"],
            Expectation::ExpectBug("crash (SIGSEGV)".into()),
        )
    }

    #[test]
    fn regression_on_latest_fixed_backend() {
        let mut t = vec![target(MONET_CRASH, "monetdb", true, true)];
        let f = regression_replay(&[monet_case()], &mut t).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].verdict, Verdict::Regression);
        assert_eq!(f[0].signature, "rel_groupby_ops | exp_any | rel_select");
    }

    #[test]
    fn latest_only_is_inconclusive() {
        let mut t = vec![target(MONET_CRASH, "monetdb", true, false), target(MONET_OK, "monetdb", false, true)];
        let f = regression_replay(&[monet_case()], &mut t).unwrap();
        let by_backend: BTreeMap<_, _> = f.iter().map(|x| (x.replay_backend.as_str(), x.verdict)).collect();
        assert_eq!(by_backend["monet-new"], Verdict::Inconclusive);
        assert_eq!(by_backend["monet-old"], Verdict::StillFixed);
    }

    #[test]
    fn never_reproducing_is_still_fixed() {
        let mut t = vec![target(MONET_OK, "monetdb", true, true)];
        let f = regression_replay(&[monet_case()], &mut t).unwrap();
        assert_eq!(f[0].verdict, Verdict::StillFixed);
        assert!(regression_replay(&[monet_case()], &mut []).is_err());
    }

    #[test]
    fn cross_prefilter_and_hit() {
        let prog = "id = \"mysql-8\"\ndialect = \"mysql\"\n[[rule]]\npattern = '^SELECT 42'\nresult = { kind = \"crash\", signal = \"SIGABRT\" }\n";
        let mut t = target(prog, "mysql", true, false);
        let cases = [
            case("mariadb#1", "mariadb", ReportStatus::Confirmed, &["SELECT 42"], Expectation::ExpectClean),
            case("mariadb#2", "mariadb", ReportStatus::Confirmed, &["CREATE SEQUENCE s1", "SELECT NEXTVAL(s1)"], Expectation::ExpectClean),
            case("mariadb#3", "mariadb", ReportStatus::Confirmed, &["SELECT 1"], Expectation::ExpectClean),
        ];
        let f = cross_replay(&cases, &mut t).unwrap();
        let v: Vec<_> = f.iter().map(|x| (x.verdict, x.reason.as_deref())).collect();
        assert_eq!(
            v,
            vec![(Verdict::CrossHit, None), (Verdict::Inconclusive, Some("dialect_mismatch")), (Verdict::Inconclusive, Some("not_reproduced"))]
        );
        assert!(f[1].outcome.is_none());
        let same = [case("mysql#1", "mysql", ReportStatus::Fixed, &["SELECT 1"], Expectation::ExpectClean)];
        assert!(matches!(cross_replay(&same, &mut t), Err(CampaignError::SameDbms(_))));
    }

    #[test]
    fn dedupe_groups_by_signature() {
        assert!(dedupe_findings(&[]).is_empty());
        let mut t = vec![target(MONET_CRASH, "monetdb", true, true)];
        let mut c2 = monet_case();
        c2.origin_report_id = "monetdb#7401".into();
        let f = regression_replay(&[monet_case(), c2], &mut t).unwrap();
        let g = dedupe_findings(&f);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].count, 2);
        assert_eq!(g[0].members, vec!["monetdb#7400@monet-new", "monetdb#7401@monet-new"]);
    }

    #[test]
    fn table_and_jsonl() {
        let mut t = vec![target(MONET_CRASH, "monetdb", true, true)];
        let f = regression_replay(&[monet_case()], &mut t).unwrap();
        let table = render_findings_table(&f, "regression");
        assert!(table.starts_with("ID"));
        assert!(table.contains("rel_groupby_ops") && table.contains("regression"));
        let mut buf = Vec::new();
        write_findings_jsonl(&f, &mut buf).unwrap();
        let back: ReplayFinding = serde_json::from_str(std::str::from_utf8(&buf).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(back, f[0]);
    }
}
