use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

fn bugrepo(corpus: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bugrepo"))
        .arg("--config")
        .arg(fixtures().join("pipeline.toml"))
        .arg("--corpus-dir")
        .arg(corpus)
        .args(args)
        .output()
        .expect("run bugrepo")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert_eq!(o.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != ".lock") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn build(corpus: &Path) {
    ok(bugrepo(corpus, &["collect", "--now", "2024-06-01T00:00:00Z"]));
    ok(bugrepo(corpus, &["fragment"]));
    ok(bugrepo(corpus, &["extract"]));
    ok(bugrepo(corpus, &["adapt"]));
}

#[test]
fn stats_on_empty_corpus_is_a_zero_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(bugrepo(dir.path(), &["stats"]));
    let collected = out.lines().find(|l| l.starts_with("Collected Reports")).expect("stats row");
    assert!(collected.split_whitespace().skip(2).all(|c| c == "0"), "{collected}");
    assert!(out.contains("Test Cases"));
}

#[test]
fn fragment_stage_marks_prose_only_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(bugrepo(dir.path(), &["collect", "--now", "2024-06-01T00:00:00Z"]));
    let out = ok(bugrepo(dir.path(), &["fragment", "--report", "postgres#17245", "--report", "mysql#102205"]));
    let row = |id: &str| out.lines().find(|l| l.starts_with(id)).unwrap_or_else(|| panic!("no row for {id} in\n{out}")).to_string();
    assert!(row("postgres#17245").contains("non_extractable"));
    assert!(row("mysql#102205").contains("fragmented"));
    assert!(out.contains("fragment: 2 processed"));
}

#[test]
fn full_run_counts_resumes_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(bugrepo(&corpus, &["collect", "--now", "2024-06-01T00:00:00Z"]));
    ok(bugrepo(&corpus, &["fragment"]));
    ok(bugrepo(&corpus, &["extract"]));
    let adapt = ok(bugrepo(&corpus, &["adapt"]));
    let row: Vec<&str> = adapt.lines().find(|l| l.starts_with("mysql#102205")).unwrap().split_whitespace().collect();
    assert_eq!(row[1], "adapted");
    assert_eq!(row[2], "2", "iterations: {row:?}");
    assert!(row[4..].join(" ").contains("expect_bug(ERROR 2027)"));

    let stats = ok(bugrepo(&corpus, &["stats"]));
    let total = |label: &str| stats.lines().find(|l| l.starts_with(label)).unwrap().split_whitespace().last().unwrap().to_string();
    assert_eq!((total("Collected Reports"), total("Extracted Raw PoCs"), total("Test Cases")), ("20".into(), "18".into(), "15".into()));

    // Re-running stages without --force skips everything and leaves the corpus untouched.
    let before = snapshot(&corpus);
    for stage in ["fragment", "extract", "adapt"] {
        let out = ok(bugrepo(&corpus, &[stage]));
        assert!(out.contains(&format!("{stage}: 0 processed")), "{out}");
    }
    assert!(before == snapshot(&corpus), "corpus changed on resume");

    let (a, b) = (dir.path().join("seeds-a"), dir.path().join("seeds-b"));
    for out in [&a, &b] {
        ok(bugrepo(&corpus, &["export", "--dbms", "all", "--out", out.to_str().unwrap()]));
    }
    let files = snapshot(&a);
    assert_eq!(files.keys().filter(|p| p.extension().is_some_and(|e| e == "sql")).count(), 15);
    assert!(files.contains_key(Path::new("manifest.json")));
    assert!(files == snapshot(&b), "exports differ");
}

#[test]
fn records_format_prints_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(bugrepo(dir.path(), &["--format", "records", "collect", "--now", "2024-06-01T00:00:00Z"]));
    for line in out.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap_or_else(|e| panic!("{line}: {e}"));
    }
    assert!(!out.is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let missing = Command::new(env!("CARGO_BIN_EXE_bugrepo")).args(["--config", "/nonexistent/pipeline.toml", "stats"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let script = dir.path().join("s.sql");
    std::fs::write(&script, "SELECT 1;\n").unwrap();
    assert_eq!(bugrepo(dir.path(), &["exec", "--backend", "no-such-backend", script.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(ok(bugrepo(dir.path(), &["exec", "--backend", "mysql-8.0", script.to_str().unwrap()])).contains("outcome: clean"), true);

    // A malformed payload is quarantined and the run reports partial failure.
    let payloads = dir.path().join("payloads");
    std::fs::create_dir(&payloads).unwrap();
    std::fs::copy(fixtures().join("reports/mysql-102205.json"), payloads.join("good.json")).unwrap();
    std::fs::write(payloads.join("bad.json"), "{ not json").unwrap();
    let corpus = dir.path().join("corpus");
    let partial = bugrepo(&corpus, &["collect", "--source", payloads.to_str().unwrap(), "--now", "2024-06-01T00:00:00Z"]);
    assert_eq!(partial.status.code(), Some(4), "{}", String::from_utf8_lossy(&partial.stderr));

    // A corrupt record makes the whole stage fail.
    let record = snapshot(&corpus).into_keys().find(|p| p.starts_with("mysql")).expect("stored record");
    std::fs::write(corpus.join(record), "garbage").unwrap();
    assert_eq!(bugrepo(&corpus, &["stats"]).status.code(), Some(3));
}

#[test]
fn regress_and_cross_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    build(dir.path());
    let findings = dir.path().join("findings.jsonl");
    ok(bugrepo(dir.path(), &["regress", "--dbms", "monetdb", "--out", findings.to_str().unwrap()]));
    let rows: Vec<serde_json::Value> = std::fs::read_to_string(&findings).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(rows.iter().any(|r| r["origin_report_id"] == "monetdb#7400" && r["replay_backend"] == "monetdb-11.49" && r["verdict"] == "regression"));
    assert!(rows.iter().any(|r| r["origin_report_id"] == "monetdb#7400" && r["replay_backend"] == "monetdb-11.45" && r["verdict"] == "still_fixed"));

    let cross = ok(bugrepo(dir.path(), &["cross", "--from", "mariadb", "--backend", "mysql-8.0"]));
    assert!(cross.lines().any(|l| l.starts_with("MDEV-27050") && l.contains("cross_hit")), "{cross}");
    assert_eq!(bugrepo(dir.path(), &["cross", "--from", "mysql", "--backend", "mysql-8.0"]).status.code(), Some(2));
}
