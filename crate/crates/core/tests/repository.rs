mod common;

use bugrepo::repository::{
    corpus_stats, plan_sync, run_sync, AdapterRegistry, Corpus, CorpusRecord, FixtureAdapter, FixtureUpstream, PipelineStage, RefreshPolicy,
    ReportStatus, SourceAdapter,
};
use chrono::{DateTime, Duration, Utc};
use proptest::prelude::*;

fn now() -> DateTime<Utc> {
    common::NOW.parse().unwrap()
}

fn golden() -> Vec<CorpusRecord> {
    Corpus::open(common::fixtures().join("golden/corpus")).unwrap().load_all().unwrap()
}

fn sync_dir(corpus: &Corpus, dir: &std::path::Path, at: DateTime<Utc>) -> bugrepo::repository::SyncReport {
    let registry = AdapterRegistry::default();
    let upstream = FixtureUpstream::load(dir, &FixtureAdapter).unwrap();
    let mut w = corpus.writer().unwrap();
    let rep = run_sync(&mut w, &upstream, &registry, &RefreshPolicy::default(), at, None).unwrap();
    w.commit().unwrap();
    rep
}

#[test]
fn fixture_set_ingests_twenty_distinct_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = Corpus::open(dir.path()).unwrap();
    let rep = sync_dir(&corpus, &common::fixtures().join("reports"), now());
    assert_eq!(rep.inserted.len(), 20);
    assert_eq!(rep.quarantined, 0);
    let ids = corpus.ids().unwrap();
    assert_eq!(ids.len(), 20);

    let r = corpus.get("mysql#102205").unwrap().unwrap().report;
    assert_eq!((r.status, r.dbms.as_str(), r.body.len()), (ReportStatus::Confirmed, "mysql", 14));
    for rec in corpus.load_all().unwrap() {
        assert!(rec.report.last_collected_at >= rec.report.created_at, "{}", rec.report.id);
        assert_eq!(rec.pipeline_stage, PipelineStage::Collected);
    }

    // A second pass at the same instant finds nothing new and nothing stale.
    let again = sync_dir(&corpus, &common::fixtures().join("reports"), now());
    assert!(again.inserted.is_empty() && again.recollected.is_empty());
}

#[test]
fn changed_upstream_status_is_recollected() {
    let dir = tempfile::tempdir().unwrap();
    let up = dir.path().join("up");
    std::fs::create_dir(&up).unwrap();
    let src = std::fs::read_to_string(common::fixtures().join("reports/mysql-102205.json")).unwrap();
    std::fs::write(up.join("r.json"), &src).unwrap();
    let corpus = Corpus::open(dir.path().join("corpus")).unwrap();
    sync_dir(&corpus, &up, now());

    let mut v: serde_json::Value = serde_json::from_str(&src).unwrap();
    v["status"] = "Fixed".into();
    v["last_modified"] = "2024-06-15T00:00:00Z".into();
    std::fs::write(up.join("r.json"), v.to_string()).unwrap();
    // The report is years old, so it is only probed every 90 days.
    let later = now() + Duration::days(100);
    let rep = sync_dir(&corpus, &up, later);
    assert_eq!(rep.recollected, vec!["mysql#102205".to_string()]);
    let r = corpus.get("mysql#102205").unwrap().unwrap().report;
    assert_eq!(r.status, ReportStatus::Fixed);
    assert_eq!(r.last_collected_at, later);

    std::fs::remove_file(up.join("r.json")).unwrap();
    let rep = sync_dir(&corpus, &up, later + Duration::days(400));
    assert_eq!(rep.withdrawn, vec!["mysql#102205".to_string()]);
    assert_eq!(corpus.get("mysql#102205").unwrap().unwrap().report.status, ReportStatus::Other);
}

#[test]
fn malformed_payload_is_quarantined_not_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let up = dir.path().join("up");
    std::fs::create_dir(&up).unwrap();
    std::fs::write(up.join("broken.json"), "{\"id\": ").unwrap();
    let corpus = Corpus::open(dir.path().join("corpus")).unwrap();
    let rep = sync_dir(&corpus, &up, now());
    assert_eq!(rep.quarantined, 1);
    let kept: Vec<_> = walk(corpus.root()).into_iter().filter(|p| std::fs::read_to_string(p).unwrap().contains("{\\\"id\\\": ")).collect();
    assert_eq!(kept.len(), 1, "quarantined payload should be stored once");
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = vec![];
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn empty_body_payload_is_accepted() {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(common::fixtures().join("reports/mysql-102205.json")).unwrap()).unwrap();
    v["body"] = "".into();
    let r = FixtureAdapter.parse(v.to_string().as_bytes(), now()).unwrap();
    assert!(r.body.is_empty());
}

#[test]
fn stale_records_are_probed() {
    let mk = |id: &str, created_days: i64, collected_days: i64| {
        let payload = std::fs::read_to_string(common::fixtures().join("reports/mysql-102205.json")).unwrap();
        let mut r = FixtureAdapter.parse(payload.as_bytes(), now()).unwrap();
        r.id = id.into();
        r.created_at = now() - Duration::days(created_days);
        r.last_collected_at = now() - Duration::days(collected_days);
        CorpusRecord::new(r)
    };
    let plan = plan_sync(now(), &[mk("mysql#1", 10, 40), mk("mysql#2", 10, 0)], &RefreshPolicy::default());
    assert_eq!(plan.probe_ids, vec!["mysql#1".to_string()]);
    assert!(plan_sync(now(), &[mk("mysql#3", 400, 0)], &RefreshPolicy::default()).probe_ids.is_empty());
}

#[test]
fn golden_corpus_stats_and_lattice() {
    let records = golden();
    let stats = corpus_stats(&records);
    let v = serde_json::to_value(&stats).unwrap();
    let text = stats.render_table();
    let totals: Vec<&str> = ["Collected Reports", "Extracted Raw PoCs", "Test Cases"]
        .iter()
        .map(|label| text.lines().find(|l| l.starts_with(label)).unwrap().split_whitespace().last().unwrap())
        .collect();
    assert_eq!(totals, vec!["20", "18", "15"], "{v}");
    for r in &records {
        assert!(r.lattice_ok(), "{} at {:?}", r.report.id, r.pipeline_stage);
    }
}

proptest! {
    #[test]
    fn refresh_interval_never_shrinks_with_age(a in 0i64..5000, b in 0i64..5000) {
        let p = RefreshPolicy::default();
        let (young, old) = (a.min(b), a.max(b));
        prop_assert!(p.interval(Duration::days(young)) <= p.interval(Duration::days(old)));
    }
}
