mod common;

use bugrepo::campaigns::{
    dedupe_findings, export_seeds, regression_replay, select_seeds, CampaignError, ReplayCase, ReplayTarget, SeedFilter, Verdict, ALL_DBMS,
    MANIFEST_FILE,
};
use bugrepo::repository::{Corpus, CorpusRecord};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn golden() -> Vec<CorpusRecord> {
    Corpus::open(common::fixtures().join("golden/corpus")).unwrap().load_all().unwrap()
}

fn monetdb_targets() -> Vec<ReplayTarget> {
    let cfg = common::pipeline_config();
    cfg.harness
        .backends
        .iter()
        .filter(|b| b.dbms == "monetdb")
        .map(|b| ReplayTarget { executor: cfg.executor(b).unwrap(), dbms: b.dbms.clone(), latest: b.latest, fixed: b.fixed })
        .collect()
}

#[test]
fn export_is_complete_and_stable() {
    let records = golden();
    let dir = tempfile::tempdir().unwrap();
    let a = export_seeds(&records, ALL_DBMS, &dir.path().join("a"), &SeedFilter::all()).unwrap();
    // A stray file from an older export disappears on re-export.
    std::fs::write(dir.path().join("a/0000-stale.sql"), "SELECT 1;\n").unwrap();
    let again = export_seeds(&records, ALL_DBMS, &dir.path().join("a"), &SeedFilter::all()).unwrap();
    assert_eq!(a, again);
    assert_eq!(a.files.len(), 15);
    let on_disk = common::snapshot(&dir.path().join("a"));
    assert_eq!(on_disk.len(), 16);
    assert!(on_disk.contains_key(MANIFEST_FILE));
    for (name, text) in &a.files {
        assert_eq!(on_disk[name.as_str()], text.as_bytes());
    }
}

#[test]
fn filters_and_empty_selection() {
    let records = golden();
    let mysql = select_seeds(&records, "mysql", &SeedFilter::all()).unwrap();
    assert!(mysql.manifest.values().all(|m| m.origin_report_id.starts_with("mysql#")));
    let bugs = select_seeds(&records, ALL_DBMS, &SeedFilter { expectation: Some("bug".into()), ..SeedFilter::all() }).unwrap();
    let clean = select_seeds(&records, ALL_DBMS, &SeedFilter { expectation: Some("clean".into()), ..SeedFilter::all() }).unwrap();
    assert_eq!(bugs.files.len() + clean.files.len(), 15);
    assert!(matches!(select_seeds(&records, "sqlite", &SeedFilter::all()), Err(CampaignError::EmptySelection(_))));
    assert!(matches!(select_seeds(&[], ALL_DBMS, &SeedFilter::all()), Err(CampaignError::EmptySelection(_))));
}

#[test]
fn replay_without_targets_is_an_error() {
    assert!(matches!(regression_replay(&[], &mut []), Err(CampaignError::NoBackends)));
}

#[test]
fn regression_findings_do_not_depend_on_case_order() {
    let cases: Vec<ReplayCase> = golden().iter().filter(|r| r.report.dbms == "monetdb").filter_map(ReplayCase::from_record).collect();
    assert!(!cases.is_empty());
    let reference = regression_replay(&cases, &mut monetdb_targets()).unwrap();
    assert!(reference.iter().any(|f| f.verdict == Verdict::Regression));

    let mut runner = TestRunner::new_with_rng(
        Config { cases: 16, failure_persistence: None, ..Config::default() },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]),
    );
    runner
        .run(&Just(cases).prop_shuffle(), |shuffled| {
            let got = regression_replay(&shuffled, &mut monetdb_targets()).unwrap();
            prop_assert_eq!(&got, &reference);
            Ok(())
        })
        .unwrap();
}

#[test]
fn dedupe_groups_by_signature() {
    let cases: Vec<ReplayCase> = golden().iter().filter(|r| r.report.dbms == "monetdb").filter_map(ReplayCase::from_record).collect();
    let findings = regression_replay(&cases, &mut monetdb_targets()).unwrap();
    let groups = dedupe_findings(&findings);
    assert_eq!(groups.iter().map(|g| g.count).sum::<usize>(), findings.len());
    let mut sigs: Vec<_> = groups.iter().map(|g| g.signature.as_str()).collect();
    let n = sigs.len();
    sigs.sort();
    sigs.dedup();
    assert_eq!(sigs.len(), n);
    for g in &groups {
        assert_eq!(g.members.len(), g.count);
        assert_eq!(g.representative.signature, g.signature);
    }
}
