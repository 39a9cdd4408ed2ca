#![allow(dead_code)]

use std::path::PathBuf;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("repo root")
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

pub fn lines(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Whitespace-collapsed, lowercased, trailing `;` dropped.
pub fn norm(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase().trim_end_matches(';').trim().to_string()
}

pub const NOW: &str = "2024-06-01T00:00:00Z";

pub fn pipeline_config() -> bugrepo::pipeline::PipelineConfig {
    bugrepo::pipeline::PipelineConfig::load(&fixtures().join("pipeline.toml")).expect("fixture pipeline config")
}

/// Runs collect, fragment, extract and adapt over the fixture reports into `dir`.
pub fn build_corpus(dir: &std::path::Path, jobs: usize) -> (bugrepo::pipeline::PipelineConfig, bugrepo::repository::Corpus) {
    use bugrepo::pipeline::{self, Selection};
    let cfg = pipeline_config();
    let corpus = cfg.corpus(Some(dir)).expect("open corpus");
    let now = NOW.parse().unwrap();
    let all = Selection::default();
    for rep in [
        pipeline::run_collect(&cfg, &corpus, None, now, None),
        pipeline::run_fragment(&cfg, &corpus, &all),
        pipeline::run_extract(&cfg, &corpus, &all, jobs),
        pipeline::run_adapt(&cfg, &corpus, &all, None),
    ] {
        let rep = rep.expect("stage runs");
        assert!(rep.failed.is_empty(), "{}: {:?}", rep.stage, rep.failed);
    }
    (cfg, corpus)
}

/// Relative path → bytes for every file under `root`, lock files excluded.
pub fn snapshot(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().is_some_and(|n| n != ".lock") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[derive(serde::Deserialize)]
pub struct FragmenterCase {
    pub id: String,
    pub kind: String,
    pub body: Vec<String>,
    pub block: Option<Vec<String>>,
    pub statements: Vec<String>,
    pub trace: Vec<String>,
}

pub fn fragmenter_cases() -> Vec<FragmenterCase> {
    let mut paths: Vec<_> = std::fs::read_dir(fixtures().join("fragmenter")).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths.iter().map(|p| serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()).collect()
}
