//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line per
//! criterion on stderr (uncaptured), then fails if any criterion failed.
//!
//! Set BLESS=1 to rewrite the golden corpus under fixtures/golden/corpus.
//! Set BUGREPO_LIVE=1 to run the live smoke test when docker is available.

mod common;

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bugrepo::adapter::{capture_anchors, check_constraints, Expectation, StrategyMode, StrategyReport};
use bugrepo::campaigns::{select_seeds, ReplayFinding, SeedFilter, Verdict, ALL_DBMS};
use bugrepo::fragmenter::{CaptureStage, Fragment, ScoringConfig};
use bugrepo::harness::{
    assess_risk, execute, schedule_cleanup, Backend, CleanupAction, Executor, FakeProgram, LifecycleAction, Limits, LiveBackend,
    LiveDescriptor, RiskLevel, RiskRules, ScriptedFake,
};
use bugrepo::pipeline::{self, Selection};
use bugrepo::sql::Dialect;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::sample::select;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;

fn say(line: &str) {
    let _ = std::io::stderr().write_all(format!("{line}\n").as_bytes());
}

fn runner(cases: u32, seed: u8) -> TestRunner {
    let config = Config { cases, failure_persistence: None, max_shrink_iters: 256, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

// ---- 1: fragmenter fixture suite

fn fragmenter_suite() -> Outcome {
    let scorer = ScoringConfig::load(&common::fixtures().join("scoring.toml")).map_err(|e| e.to_string())?.compile().map_err(|e| e.to_string())?;
    let cases = common::fragmenter_cases();
    let kinds: BTreeMap<&str, usize> = cases.iter().fold(BTreeMap::new(), |mut m, c| {
        *m.entry(c.kind.as_str()).or_default() += 1;
        m
    });
    if kinds != BTreeMap::from([("ddl", 10), ("fenced", 10), ("prose", 10)]) {
        return Err(format!("unexpected fixture mix {kinds:?}"));
    }
    let start = Instant::now();
    let results: Vec<Vec<Fragment>> = cases.iter().map(|c| scorer.process_report(&c.body).unwrap_or_default()).collect();
    within(start, Duration::from_secs(1))?;

    let (mut blocks, mut blocks_hit, mut planted, mut found, mut trace_hits) = (0, 0, 0, 0, Vec::new());
    for (c, frags) in cases.iter().zip(&results) {
        if let Some(block) = &c.block {
            blocks += 1;
            if frags.iter().any(|f| f.capture_stage == CaptureStage::FormattedBlock && &f.lines == block) {
                blocks_hit += 1;
            }
        } else {
            let texts: Vec<String> = frags.iter().filter(|f| f.capture_stage != CaptureStage::FormattedBlock).map(|f| common::norm(&f.text())).collect();
            for s in &c.statements {
                planted += 1;
                if texts.iter().any(|t| t.contains(&common::norm(s))) {
                    found += 1;
                }
            }
        }
        for f in frags {
            trace_hits.extend(f.lines.iter().filter(|l| c.trace.contains(l)).map(|l| format!("{}: {l}", c.id)));
        }
    }
    let recall = found as f64 / planted as f64;
    if blocks_hit != blocks {
        return Err(format!("formatted-block recall {blocks_hit}/{blocks}"));
    }
    if recall < 0.9 {
        return Err(format!("statement recall {found}/{planted} = {recall:.3} < 0.9"));
    }
    if !trace_hits.is_empty() {
        return Err(format!("captured trace lines: {trace_hits:?}"));
    }
    Ok(format!("blocks {blocks_hit}/{blocks}, statements {found}/{planted}, 0 trace lines, {:?}", start.elapsed()))
}

// ---- 2: fragmenter invariants on randomized reports

const WORDS: &[&str] = &[
    "the", "server", "returns", "wrong", "rows", "after", "upgrade", "select", "from", "table", "where", "index", "we", "see", "it",
    "crash", "order", "by", "join", "value", "when", "set", "plan", "SELECT", "FROM", "WHERE", "JOIN",
];
const TABLES: &[&str] = &["t1", "t2", "orders", "items", "parts"];
const COLS: &[&str] = &["a", "b", "c", "id", "qty"];

fn noise_lines() -> BoxedStrategy<Vec<String>> {
    vec(select(WORDS), 1..12).prop_map(|w| vec![w.join(" ")]).boxed()
}

fn trace_lines() -> BoxedStrategy<Vec<String>> {
    (0u64..1 << 40, 0usize..9, 100u32..9000, any::<bool>())
        .prop_map(|(addr, i, line, sig)| {
            let mut v = vec![format!("#{i} 0x{addr:x} in fn_{i}() at sql/x.cc:{line}")];
            if sig {
                v.push("mysqld got signal 11 ;".into());
            }
            v
        })
        .boxed()
}

fn statement_lines() -> BoxedStrategy<Vec<String>> {
    (select(TABLES), select(COLS), 0i32..100, 0usize..4)
        .prop_map(|(t, c, n, k)| {
            vec![match k {
                0 => format!("SELECT {c} FROM {t} WHERE {c} > {n};"),
                1 => format!("INSERT INTO {t} VALUES ({n}, {n});"),
                2 => format!("UPDATE {t} SET {c} = {n};"),
                _ => format!("mysql> DELETE FROM {t} WHERE ({c} < {n});"),
            }]
        })
        .boxed()
}

fn ddl_lines() -> BoxedStrategy<Vec<String>> {
    (select(TABLES), vec(select(COLS), 1..5), any::<bool>())
        .prop_map(|(t, cols, engine)| {
            let mut v = vec![format!("CREATE TABLE {t} (")];
            for (i, c) in cols.iter().enumerate() {
                let sep = if i + 1 == cols.len() { "" } else { "," };
                v.push(format!("  {c}{i} DECIMAL(10,{i}){sep}"));
            }
            v.push(if engine { ") ENGINE=InnoDB;".into() } else { ");".into() });
            v
        })
        .boxed()
}

fn quoted_lines() -> BoxedStrategy<Vec<String>> {
    ("[a-z;() ]{0,8}", "[a-z;() ]{0,8}", 0usize..3)
        .prop_map(|(p, q, k)| match k {
            0 => vec![format!("INSERT INTO t1 VALUES ('{p}', \"{q}\");")],
            1 => vec!["INSERT INTO t1 VALUES (".into(), format!("  '{p}', \"{q}\""), ");".into()],
            _ => vec![format!("The log said '{p}' and \"{q}\" before it stopped")],
        })
        .boxed()
}

fn fenced_lines() -> BoxedStrategy<Vec<String>> {
    (vec(statement_lines(), 0..4), any::<bool>())
        .prop_map(|(stmts, closed)| {
            let mut v = vec!["```sql".to_string()];
            v.extend(stmts.into_iter().flatten());
            if closed {
                v.push("```".into());
            }
            v
        })
        .boxed()
}

fn stray_lines() -> BoxedStrategy<Vec<String>> {
    select(vec![")", "  b INT);", "(", "x ;", ";", "END;", "  WHERE a = 1;", "it doesn't; matter", "SELECT (1;", "-- note; here"])
        .prop_map(|s| vec![s.to_string()])
        .boxed()
}

fn report_body() -> impl Strategy<Value = Vec<String>> {
    vec(prop_oneof![noise_lines(), trace_lines(), statement_lines(), ddl_lines(), quoted_lines(), fenced_lines(), stray_lines()], 0..20)
        .prop_map(|parts| parts.into_iter().flatten().collect())
}

/// Independent check: a `;` outside single- or double-quoted strings.
fn unquoted_semicolon(line: &str) -> bool {
    let cs: Vec<char> = line.chars().collect();
    let mut open: Option<char> = None;
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        match open {
            Some(q) if c == q => {
                if cs.get(i + 1) == Some(&q) {
                    i += 1;
                } else {
                    open = None;
                }
            }
            Some(_) => {}
            None if c == '\'' || c == '"' => open = Some(c),
            None if c == ';' => return true,
            None => {}
        }
        i += 1;
    }
    false
}

fn check_invariants(body: &[String], frags: &[Fragment], theta: f64) -> Result<(), String> {
    for f in frags {
        if f.lines.is_empty() || f.end_index() > body.len() || body[f.start_index..f.end_index()] != f.lines[..] {
            return Err(format!("contiguity broken at {}", f.start_index));
        }
        let scored = f.capture_stage == CaptureStage::ScoredLine;
        if scored != f.score.is_some() || f.score.is_some_and(|s| s < theta) {
            return Err(format!("score/stage mismatch at {}: {:?} {:?}", f.start_index, f.capture_stage, f.score));
        }
        if f.capture_stage == CaptureStage::BacktrackedStatement {
            let balance: i64 = f.lines.iter().flat_map(|l| l.chars()).map(|c| (c == ')') as i64 - (c == '(') as i64).sum();
            if balance > 0 {
                return Err(format!("unbalanced statement at {}: {:?}", f.start_index, f.lines));
            }
            if !unquoted_semicolon(f.lines.last().unwrap()) {
                return Err(format!("quoted semicolon ended a statement: {:?}", f.lines.last()));
            }
        }
    }
    for w in frags.windows(2) {
        if w[0].end_index() > w[1].start_index {
            return Err(format!("fragments overlap or are unsorted: {} then {}", w[0].start_index, w[1].start_index));
        }
    }
    Ok(())
}

fn fragmenter_properties() -> Outcome {
    let cfg = ScoringConfig::default();
    let scorer = cfg.compile().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut r = runner(1000, 2);
    let seen = Cell::new(0usize);
    let stages = std::cell::RefCell::new(BTreeMap::<CaptureStage, usize>::new());
    r.run(&report_body(), |body| {
        seen.set(seen.get() + 1);
        let frags = scorer.process_report(&body).unwrap_or_default();
        for f in &frags {
            *stages.borrow_mut().entry(f.capture_stage).or_default() += 1;
        }
        check_invariants(&body, &frags, cfg.theta_score).map_err(TestCaseError::fail)
    })
    .map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(10))?;
    let stages = stages.into_inner();
    if [CaptureStage::FormattedBlock, CaptureStage::BacktrackedStatement, CaptureStage::ScoredLine].iter().any(|st| !stages.contains_key(st)) {
        return Err(format!("generator never produced every capture stage: {stages:?}"));
    }
    let counts: Vec<String> = stages.iter().map(|(k, v)| format!("{v} {k}")).collect();
    Ok(format!("{} reports ({}), {:?}", seen.get(), counts.join(", "), start.elapsed()))
}

// ---- 3: determinism against the golden corpus

fn golden_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::build_corpus(a.path(), 1);
    common::build_corpus(b.path(), 4);
    let (sa, sb) = (common::snapshot(a.path()), common::snapshot(b.path()));
    if sa != sb {
        let differ: Vec<&String> = sa.keys().chain(sb.keys()).filter(|k| sa.get(*k) != sb.get(*k)).collect();
        return Err(format!("two runs differ in {differ:?}"));
    }
    let golden = common::fixtures().join("golden/corpus");
    if std::env::var_os("BLESS").is_some() {
        let _ = std::fs::remove_dir_all(&golden);
        for (rel, bytes) in &sa {
            let p = golden.join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).map_err(|e| e.to_string())?;
            std::fs::write(&p, bytes).map_err(|e| e.to_string())?;
        }
    }
    let sg = common::snapshot(&golden);
    if sa != sg {
        let differ: Vec<&String> = sa.keys().chain(sg.keys()).filter(|k| sa.get(*k) != sg.get(*k)).collect();
        return Err(format!("corpus differs from golden in {differ:?} (BLESS=1 to update)"));
    }
    Ok(format!("{} files identical across runs and golden", sa.len()))
}

// ---- 4: the 1418 -> 2027 scenario

fn binlog_scenario() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (_, corpus) = common::build_corpus(dir.path(), 1);
    let rec = corpus.get("mysql#102205").map_err(|e| e.to_string())?.ok_or("record missing")?;
    let tc = rec.test_case.ok_or("no test case")?;
    if !tc.statements.iter().any(|s| s.contains("set global log_bin_trust_function_creators=1")) {
        return Err(format!("configuration fix missing from {:?}", tc.statements));
    }
    if tc.expectation != Expectation::ExpectBug("ERROR 2027".into()) {
        return Err(format!("expectation {:?}", tc.expectation));
    }
    if tc.iterations > 3 {
        return Err(format!("{} iterations", tc.iterations));
    }
    Ok(format!("expect_bug(ERROR 2027) after {} iterations", tc.iterations))
}

// ---- 5: anchors of a PoC accept the PoC itself

fn generated_poc() -> impl Strategy<Value = (Dialect, Vec<String>)> {
    (prop_oneof![Just(Dialect::MySql), Just(Dialect::Postgres)], 1usize..4, vec((0usize..9, 0usize..3, 0usize..3, 0i32..50), 1..5)).prop_map(
        |(dialect, ntables, queries)| {
            let t = |k: usize| format!("t{}", k % ntables + 1);
            let mut s: Vec<String> = Vec::new();
            for k in 0..ntables {
                s.push(format!("CREATE TABLE t{} (a INT, b INT, c VARCHAR(10))", k + 1));
                s.push(format!("INSERT INTO t{} VALUES (1, 2, 'x1'), (2, 3, 'y')", k + 1));
            }
            for (i, (q, x, y, n)) in queries.into_iter().enumerate() {
                let (t, u) = (t(x), t(y));
                s.push(match q {
                    0 => format!("SELECT a, b FROM {t} WHERE a > {n}"),
                    1 => format!("SELECT {t}.a, {u}.b FROM {t} JOIN {u} ON {t}.a = {u}.a"),
                    2 => format!("SELECT a, COUNT(*) FROM {t} GROUP BY a HAVING COUNT(*) > {n}"),
                    3 => format!("UPDATE {t} SET b = b + {n} WHERE a = 1"),
                    4 => format!("DELETE FROM {t} WHERE b < {n}"),
                    5 => format!("SELECT a FROM {t} WHERE b IN (SELECT b FROM {u} WHERE a < {n})"),
                    6 => format!("SELECT a FROM {t} UNION SELECT a FROM {u}"),
                    7 => format!("SELECT c FROM {t} WHERE c LIKE 'x%'"),
                    _ => format!("CREATE VIEW v{i} AS SELECT a FROM {t}"),
                });
            }
            (dialect, s)
        },
    )
}

fn anchor_identity() -> Outcome {
    let mut r = runner(200, 5);
    let seen = Cell::new(0usize);
    r.run(&generated_poc(), |(dialect, poc)| {
        let mut fake = ScriptedFake::provisioned(FakeProgram::new("generated", dialect, "1.0")).unwrap();
        let run = execute(&mut fake, &poc, &Limits::default(), &RiskRules::default()).unwrap();
        prop_assert!(run.outcome.is_clean(), "generated PoC is not executable: {:?}", run.outcome.kind);
        let report = check_constraints(&poc, &poc, &capture_anchors(&poc, dialect), 0.4, &[], dialect);
        prop_assert!(report.overall, "{:?}", report.violations());
        seen.set(seen.get() + 1);
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok(format!("{n}/{n} executable PoCs keep their own anchors", n = seen.get()))
}

// ---- 6: strategy ordering

fn strategy_ordering() -> Outcome {
    let cfg = common::pipeline_config();
    let rep = pipeline::run_strategy_report(&cfg, None, None).map_err(|e| e.to_string())?;
    let reports: Vec<StrategyReport> = rep.rows.iter().map(|v| serde_json::from_value(v.clone()).unwrap()).collect();
    let get = |m: StrategyMode| reports.iter().find(|r| r.mode == m).ok_or(format!("no {m} row"));
    let (f, s, fs) = (get(StrategyMode::Feedback)?, get(StrategyMode::Semantic)?, get(StrategyMode::Combined)?);
    if !(f.executable_rate >= fs.executable_rate && fs.executable_rate >= s.executable_rate) {
        return Err(format!("executable order F {} F+S {} S {}", f.executable_rate, fs.executable_rate, s.executable_rate));
    }
    if !(s.richness_rate >= fs.richness_rate && fs.richness_rate >= f.richness_rate) {
        return Err(format!("richness order S {} F+S {} F {}", s.richness_rate, fs.richness_rate, f.richness_rate));
    }
    // Counts from scripts/strategy_oracle.py over the same fixtures.
    let expected = [(f, 12, 7), (s, 4, 12), (fs, 10, 12)];
    for (r, ex, rich) in expected {
        if (r.cases, r.executable, r.rich) != (12, ex, rich) {
            return Err(format!("{}: got {}/{} executable, {}/{} rich; oracle {ex}/12, {rich}/12", r.mode, r.executable, r.cases, r.rich, r.cases));
        }
    }
    Ok("F 12/12 7/12, S 4/12 12/12, F+S 10/12 12/12".into())
}

// ---- 7: risk table

const RISK_POOL: &[(&str, RiskLevel)] = &[
    ("CREATE ROLE r1", RiskLevel::High),
    ("CREATE EXTENSION pg_trgm", RiskLevel::High),
    ("CREATE USER u1", RiskLevel::High),
    ("DROP ROLE r2", RiskLevel::High),
    ("SET GLOBAL innodb_purge_stop_now = ON", RiskLevel::High),
    ("GRANT ALL ON *.* TO u1", RiskLevel::High),
    ("ALTER SYSTEM SET work_mem = '64MB'", RiskLevel::Medium),
    ("FLUSH TABLES", RiskLevel::Medium),
    ("INSTALL PLUGIN rocksdb SONAME 'ha_rocksdb.so'", RiskLevel::Medium),
    ("SET GLOBAL log_bin_trust_function_creators = 1", RiskLevel::Medium),
    ("CREATE TABLE t1 (a INT)", RiskLevel::Low),
    ("INSERT INTO t1 VALUES (1)", RiskLevel::Low),
    ("SELECT * FROM t1", RiskLevel::Low),
    ("UPDATE t1 SET a = 2", RiskLevel::Low),
    ("DELETE FROM t1", RiskLevel::Low),
    ("DROP TABLE t1", RiskLevel::Low),
    ("ALTER TABLE t1 ADD COLUMN b INT", RiskLevel::Low),
    ("CREATE INDEX i1 ON t1 (a)", RiskLevel::Low),
    ("SET SESSION sort_buffer_size = 1024", RiskLevel::Low),
];

fn risk_table() -> Outcome {
    let cleanup = |s: &str| schedule_cleanup(&assess_risk(&[s.to_string()]));
    let table = [
        ("CREATE ROLE r1", CleanupAction::ReinstallContainer),
        ("CREATE EXTENSION IF NOT EXISTS pg_trgm", CleanupAction::ReinstallContainer),
        ("ALTER SYSTEM SET work_mem = '64MB'", CleanupAction::RestartAndVerify),
        ("INSERT INTO t1 VALUES (1)", CleanupAction::CleanDatabase),
        ("DELETE FROM t1 WHERE a = 1", CleanupAction::CleanDatabase),
        ("CREATE TABLE t1 (a INT)", CleanupAction::CleanDatabase),
        ("DROP TABLE t1", CleanupAction::CleanDatabase),
    ];
    for (stmt, want) in table {
        if cleanup(stmt) != want {
            return Err(format!("{stmt}: {} instead of {want}", cleanup(stmt)));
        }
    }
    let mut r = runner(500, 7);
    let strategy = vec(0..RISK_POOL.len(), 1..8).prop_shuffle();
    r.run(&strategy, |picks| {
        let stmts: Vec<String> = picks.iter().map(|&i| RISK_POOL[i].0.to_string()).collect();
        let levels: Vec<RiskLevel> = picks.iter().map(|&i| RISK_POOL[i].1).collect();
        let top = *levels.iter().max().unwrap();
        let risk = assess_risk(&stmts);
        prop_assert_eq!(risk.value, top);
        let at_top: Vec<usize> = if top == RiskLevel::Low { vec![] } else { (0..levels.len()).filter(|&i| levels[i] == top).collect() };
        prop_assert_eq!(&risk.triggering_statements, &at_top);
        let want = match top {
            RiskLevel::High => CleanupAction::ReinstallContainer,
            RiskLevel::Medium => CleanupAction::RestartAndVerify,
            RiskLevel::Low => CleanupAction::CleanDatabase,
        };
        prop_assert_eq!(schedule_cleanup(&risk), want);
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    Ok("rule table holds, max-aggregation on 500 shuffles".into())
}

// ---- 8: isolation

const ISOLATION_POOL: &[&str] = &[
    "CREATE TABLE t1 (a INT, c1 INT)",
    "INSERT INTO t1 VALUES (1, 2)",
    "SELECT * FROM t1",
    "SET GLOBAL log_bin_trust_function_creators = 1",
    "CREATE FUNCTION f1() RETURNS INT RETURN 1",
    "SELECT f1(), c1 FROM t1 GROUP BY c1 WITH ROLLUP",
    "INSTALL PLUGIN rocksdb SONAME 'ha_rocksdb.so'",
    "CREATE ROLE r1",
    "CREATE USER u1",
    "CREATE VIEW v1 AS SELECT a FROM t1",
    "DROP VIEW v1",
    "CREATE TRIGGER trg BEFORE INSERT ON t1 FOR EACH ROW SET @x = 1",
    "SET GLOBAL innodb_purge_stop_now = ON",
    "CREATE TABLE t2 (a INT) ENGINE=ROCKSDB",
    "SELECT a FROM t2",
    "DROP TABLE t1",
];

fn isolation() -> Outcome {
    let program = FakeProgram::load(&common::fixtures().join("backends/mysql-8.0.toml")).map_err(|e| e.to_string())?;
    // Every statement runs, so the first script leaves as much state behind as it can.
    let limits = Limits { stop_on_error: false, ..Limits::default() };
    let rules = RiskRules::default();
    let script = || vec(select(ISOLATION_POOL), 1..7).prop_map(|v| v.into_iter().map(String::from).collect::<Vec<String>>());
    let mut r = runner(100, 8);
    let leaky = Cell::new(0usize);
    r.run(&(script(), script()), |(a, b)| {
        let mut shared = ScriptedFake::provisioned(program.clone()).unwrap();
        execute(&mut shared, &a, &limits, &rules).unwrap();
        let second = execute(&mut shared, &b, &limits, &rules).unwrap();
        let mut fresh = ScriptedFake::provisioned(program.clone()).unwrap();
        let alone = execute(&mut fresh, &b, &limits, &rules).unwrap();
        prop_assert_eq!(&second.outcome, &alone.outcome);
        prop_assert_eq!(second.cleanup, alone.cleanup);
        // Without cleanup between the two scripts, does state leak?
        let mut dirty = ScriptedFake::provisioned(program.clone()).unwrap();
        dirty.run_script(&a, &limits).unwrap();
        if dirty.run_script(&b, &limits).unwrap() != alone.outcome {
            leaky.set(leaky.get() + 1);
        }
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    if leaky.get() == 0 {
        return Err("no pair depends on leftover state; the property is vacuous".into());
    }
    Ok(format!("100 pairs identical to fresh execution ({} would differ without cleanup)", leaky.get()))
}

// ---- 9: replay verdicts

fn replay_verdicts() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (cfg, corpus) = common::build_corpus(dir.path(), 1);
    let findings = |rep: pipeline::StageReport| -> Vec<ReplayFinding> { rep.rows.iter().map(|v| serde_json::from_value(v.clone()).unwrap()).collect() };
    let reg = findings(pipeline::run_regress(&cfg, &corpus, &Selection::default(), "monetdb", &[], None).map_err(|e| e.to_string())?);
    let hit = reg.iter().find(|f| f.origin_report_id == "monetdb#7400" && f.replay_backend == "monetdb-11.49").ok_or("no 7400 finding on 11.49")?;
    if hit.verdict != Verdict::Regression {
        return Err(format!("monetdb#7400 on 11.49: {}", hit.verdict));
    }
    let cross = findings(pipeline::run_cross(&cfg, &corpus, &Selection::default(), "mariadb", "mysql-8.0", None).map_err(|e| e.to_string())?);
    let by_id = |id: &str| cross.iter().find(|f| f.origin_report_id == id).ok_or(format!("no finding for {id}"));
    let shared = by_id("MDEV-27050")?;
    if shared.verdict != Verdict::CrossHit {
        return Err(format!("MDEV-27050: {}", shared.verdict));
    }
    let dialect = by_id("MDEV-28100")?;
    if dialect.verdict != Verdict::Inconclusive || !dialect.reason.as_deref().unwrap_or("").contains("dialect") {
        return Err(format!("MDEV-28100: {} {:?}", dialect.verdict, dialect.reason));
    }
    Ok("regression, cross_hit, inconclusive (dialect mismatch)".into())
}

// ---- 10: live smoke test

fn docker_available() -> bool {
    std::process::Command::new("docker").arg("info").output().is_ok_and(|o| o.status.success())
}

fn live_smoke() -> Outcome {
    if std::env::var_os("BUGREPO_LIVE").is_none() {
        return Ok("skipped: BUGREPO_LIVE not set".into());
    }
    if !docker_available() {
        return Ok("skipped: no container runtime".into());
    }
    let text = std::fs::read_to_string(common::fixtures().join("live/mysql-8.0.toml")).map_err(|e| e.to_string())?;
    let desc: LiveDescriptor = toml::from_str(&text).map_err(|e| e.to_string())?;
    let records = bugrepo::repository::Corpus::open(common::fixtures().join("golden/corpus")).and_then(|c| c.load_all()).map_err(|e| e.to_string())?;
    let seeds = select_seeds(&records, ALL_DBMS, &SeedFilter::all()).map_err(|e| e.to_string())?;
    let mut ex = Executor::new(Box::new(LiveBackend::new(desc).map_err(|e| e.to_string())?));
    let result = (|| {
        ex.ensure_healthy().map_err(|e| e.to_string())?;
        let mut classified = 0;
        for (name, sql_text) in seeds.files.iter().take(10) {
            let stmts = bugrepo::sql::split_statements(sql_text);
            let run = ex.execute(&stmts).map_err(|e| format!("{name}: harness error {e}"))?;
            let left = ex.backend.user_objects().map_err(|e| e.to_string())?;
            if !left.is_empty() {
                return Err(format!("{name}: objects left after {}: {left:?}", run.cleanup));
            }
            classified += 1;
        }
        Ok(format!("{classified} seeds executed and classified, schema empty after each"))
    })();
    let _ = ex.backend.lifecycle(LifecycleAction::Teardown);
    result
}

#[test]
fn acceptance() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "fragmenter fixture suite", fragmenter_suite),
        (2, "fragmenter properties on 1000 random reports", fragmenter_properties),
        (3, "pipeline determinism and golden corpus", golden_determinism),
        (4, "binlog configuration repair scenario", binlog_scenario),
        (5, "anchor identity on 200 generated PoCs", anchor_identity),
        (6, "strategy ordering and oracle rates", strategy_ordering),
        (7, "risk and cleanup table", risk_table),
        (8, "isolation on 100 script pairs", isolation),
        (9, "replay verdicts", replay_verdicts),
        (10, "live smoke test", live_smoke),
    ];
    let mut failed = BTreeSet::new();
    for (n, name, f) in criteria {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match res {
            Ok(detail) => say(&format!("PASS criterion {n}: {name}: {detail}")),
            Err(why) => {
                say(&format!("FAIL criterion {n}: {name}: {why}"));
                failed.insert(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
