//! Configuration and stage runners shared by the command-line front end.
//!
//! Every stage reads the corpus, processes the selected records and writes
//! results back through the single corpus writer. Stages are resumable:
//! records already past a stage are skipped unless `force` is set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adapter::{adapt, render_strategy_table, strategy_report, AdaptConfig, AdaptOutcome, KnowledgeBase, StrategyMode};
use crate::campaigns::{
    cross_replay, dedupe_findings, export_seeds, regression_replay, render_findings_table, write_findings_jsonl, CampaignError, ReplayCase,
    ReplayTarget, SeedFilter,
};
use crate::extractor::{
    extract_raw_poc, promotion_candidate, ExemplarLibrary, ExtractionEnv, ExtractionOutcome, ExtractorConfig, HashingEmbedder, HttpClient, RawPoc,
    ScriptedClient, TextClient,
};
use crate::fragmenter::{ScoringConfig, Scorer};
use crate::harness::{BackendSpec, Executor, HarnessError, Limits, RiskRules};
use crate::repository::{
    corpus_stats, run_sync, AdapterRegistry, Corpus, CorpusRecord, FixtureUpstream, PipelineStage, RefreshPolicy, ReportStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Collect,
    Fragment,
    Extract,
    Adapt,
    Export,
    Regress,
    Cross,
    Stats,
    StrategyReport,
    Exec,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Fragment => "fragment",
            Stage::Extract => "extract",
            Stage::Adapt => "adapt",
            Stage::Export => "export",
            Stage::Regress => "regress",
            Stage::Cross => "cross",
            Stage::Stats => "stats",
            Stage::StrategyReport => "strategy-report",
            Stage::Exec => "exec",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} failed: {reason}")]
    Stage { stage: Stage, reason: String },
}

impl PipelineError {
    fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, reason: e.to_string() }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

/// A directory of payloads read through one source adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    #[serde(default = "default_adapter")]
    pub adapter: String,
    pub dir: PathBuf,
}

fn default_adapter() -> String {
    "fixture".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectSection {
    pub sources: Vec<SourceSpec>,
    pub refresh: RefreshPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FragmenterSection {
    /// Scoring config file; the built-in defaults otherwise.
    pub scoring: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorSection {
    #[serde(flatten)]
    pub config: ExtractorConfig,
    /// Seed exemplars used when the corpus has no library yet.
    pub seed_library: Option<PathBuf>,
    /// Extract from reports that are neither confirmed nor fixed.
    pub include_unacknowledged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientSpec {
    /// Canned responses keyed on request content.
    Scripted { script: PathBuf },
    /// JSON over HTTP; the bearer token comes from the environment.
    Http {
        endpoint: String,
        model: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterSection {
    #[serde(flatten)]
    pub config: AdaptConfig,
    /// Extra knowledge-base rule files, consulted after the built-in ones.
    pub kb: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessSection {
    pub limits: Limits,
    pub risk_rules: Option<PathBuf>,
    #[serde(rename = "backend")]
    pub backends: Vec<BackendSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategySection {
    /// TOML file of `[[case]]` raw PoCs.
    pub sample: Option<PathBuf>,
    pub backend: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_dir: Option<PathBuf>,
    pub collect: CollectSection,
    pub fragmenter: FragmenterSection,
    pub extractor: ExtractorSection,
    pub client: Option<ClientSpec>,
    pub adapter: AdapterSection,
    pub harness: HarnessSection,
    pub strategy: StrategySection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn referenced_files(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = Vec::new();
        v.extend(self.collect.sources.iter().map(|s| s.dir.clone()));
        v.extend(self.fragmenter.scoring.clone());
        v.extend(self.extractor.seed_library.clone());
        if let Some(ClientSpec::Scripted { script }) = &self.client {
            v.push(script.clone());
        }
        v.extend(self.adapter.kb.iter().cloned());
        v.extend(self.harness.risk_rules.clone());
        v.extend(self.harness.backends.iter().filter_map(|b| b.program.clone()));
        v.extend(self.strategy.sample.clone());
        v
    }

    /// Checks ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let Err(m) = self.adapter.config.validate() {
            return bad(m);
        }
        if let Err(m) = self.extractor.config.validate() {
            return bad(m);
        }
        if let Err(m) = self.collect.refresh.validate() {
            return bad(m);
        }
        for p in self.referenced_files() {
            if !self.resolve(&p).exists() {
                return bad(format!("referenced path {} does not exist", p.display()));
            }
        }
        let mut names = BTreeSet::new();
        for b in &self.harness.backends {
            if !names.insert(b.name.as_str()) {
                return bad(format!("duplicate backend name `{}`", b.name));
            }
        }
        if let Some(b) = &self.strategy.backend {
            if !names.contains(b.as_str()) {
                return bad(format!("strategy backend `{b}` is not configured"));
            }
        }
        Ok(())
    }

    pub fn corpus(&self, override_dir: Option<&Path>) -> Result<Corpus, PipelineError> {
        let dir = match (override_dir, &self.corpus_dir) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(d)) => self.resolve(d),
            (None, None) => return Err(PipelineError::Config("no corpus directory: set corpus_dir or pass --corpus-dir".into())),
        };
        Corpus::open(dir).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn scorer(&self) -> Result<Scorer, PipelineError> {
        let cfg = match &self.fragmenter.scoring {
            Some(p) => ScoringConfig::load(&self.resolve(p)).map_err(|e| PipelineError::Config(e.to_string()))?,
            None => ScoringConfig::default(),
        };
        cfg.compile().map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn client(&self) -> Result<Box<dyn TextClient>, PipelineError> {
        match &self.client {
            None => Err(PipelineError::Config("no [client] configured".into())),
            Some(ClientSpec::Scripted { script }) => {
                Ok(Box::new(ScriptedClient::load(&self.resolve(script)).map_err(|e| PipelineError::Config(e.to_string()))?))
            }
            Some(ClientSpec::Http { endpoint, model, timeout_secs }) => {
                Ok(Box::new(HttpClient::new(endpoint.clone(), model.clone(), Duration::from_secs(*timeout_secs))))
            }
        }
    }

    pub fn risk_rules(&self) -> Result<RiskRules, PipelineError> {
        match &self.harness.risk_rules {
            Some(p) => RiskRules::load(&self.resolve(p)).map_err(|e| PipelineError::Config(e.to_string())),
            None => Ok(RiskRules::default()),
        }
    }

    pub fn backend(&self, name: &str) -> Result<&BackendSpec, PipelineError> {
        self.harness.backends.iter().find(|b| b.name == name).ok_or_else(|| PipelineError::Config(format!("unknown backend `{name}`")))
    }

    /// First configured backend serving `dbms`.
    pub fn backend_for(&self, dbms: &str) -> Option<&BackendSpec> {
        self.harness.backends.iter().find(|b| b.dbms.eq_ignore_ascii_case(dbms))
    }

    pub fn executor(&self, spec: &BackendSpec) -> Result<Executor, HarnessError> {
        let rules = self.risk_rules().map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.executor(&self.base_dir, self.harness.limits, rules)
    }

    pub fn knowledge_base(&self, spec: &BackendSpec) -> Result<KnowledgeBase, PipelineError> {
        let dialect = spec.dbms.parse().unwrap_or(crate::sql::Dialect::Generic);
        let mut kb = KnowledgeBase::defaults(dialect);
        for p in &self.adapter.kb {
            let path = self.resolve(p);
            kb.extend(KnowledgeBase::load(&path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?);
        }
        Ok(kb)
    }
}

/// Which records a stage touches.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    /// Restrict to these report ids.
    pub ids: Option<BTreeSet<String>>,
    /// Re-run records that are already past the stage.
    pub force: bool,
}

impl Selection {
    fn wants(&self, id: &str) -> bool {
        self.ids.as_ref().is_none_or(|s| s.contains(id))
    }
}

/// What a stage did, in both human and record form.
#[derive(Debug, Clone, Default, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub processed: usize,
    pub skipped: usize,
    /// Records that failed, with the reason.
    pub failed: Vec<(String, String)>,
    pub rows: Vec<Value>,
    #[serde(skip)]
    pub summary: String,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        StageReport { stage: stage.to_string(), ..Default::default() }
    }

    /// 0 when everything succeeded, 4 when some records failed.
    pub fn exit_code(&self) -> i32 {
        if self.failed.is_empty() {
            0
        } else {
            4
        }
    }
}

fn load_records(corpus: &Corpus, stage: Stage) -> Result<Vec<CorpusRecord>, PipelineError> {
    corpus.load_all().map_err(|e| PipelineError::stage(stage, e))
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let fmt_row = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i + 1 == cells.len() {
                s.push_str(c);
            } else {
                s.push_str(&format!("{c:<width$}  ", width = w[i]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = fmt_row(header.to_vec());
    for r in rows {
        out.push_str(&fmt_row(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Pulls reports from configured sources (or `source`, a source name or a
/// directory of fixture payloads) and refreshes stale ones.
pub fn run_collect(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    source: Option<&str>,
    now: DateTime<Utc>,
    since: Option<DateTime<Utc>>,
) -> Result<StageReport, PipelineError> {
    let stage = Stage::Collect;
    let sources: Vec<SourceSpec> = match source {
        Some(s) => match cfg.collect.sources.iter().find(|x| x.name == s) {
            Some(x) => vec![x.clone()],
            None if Path::new(s).is_dir() => vec![SourceSpec { name: s.to_string(), adapter: default_adapter(), dir: PathBuf::from(s) }],
            None => return Err(PipelineError::Config(format!("`{s}` is neither a configured source nor a directory"))),
        },
        None => cfg.collect.sources.clone(),
    };
    if sources.is_empty() {
        return Err(PipelineError::Config("no sources configured; pass --source <dir>".into()));
    }
    let registry = AdapterRegistry::default();
    let mut writer = corpus.writer().map_err(|e| PipelineError::stage(stage, e))?;
    let mut rep = StageReport::new(stage);
    let mut rows = Vec::new();
    for s in &sources {
        let adapter = registry.get(&s.adapter).map_err(|e| PipelineError::Config(e.to_string()))?;
        let upstream = FixtureUpstream::load(&cfg.resolve(&s.dir), adapter).map_err(|e| PipelineError::stage(stage, e))?;
        let r = run_sync(&mut writer, &upstream, &registry, &cfg.collect.refresh, now, since).map_err(|e| PipelineError::stage(stage, e))?;
        rep.processed += r.inserted.len() + r.recollected.len();
        rep.skipped += r.probed_unchanged.len();
        if r.quarantined > 0 {
            rep.failed.push((s.name.clone(), format!("{} malformed payloads quarantined", r.quarantined)));
        }
        rows.push(vec![
            s.name.clone(),
            r.inserted.len().to_string(),
            r.recollected.len().to_string(),
            r.probed_unchanged.len().to_string(),
            r.withdrawn.len().to_string(),
            r.quarantined.to_string(),
        ]);
        rep.rows.push(json!({ "source": s.name, "sync": r }));
    }
    writer.commit().map_err(|e| PipelineError::stage(stage, e))?;
    rep.summary = table(&["Source", "Inserted", "Recollected", "Unchanged", "Withdrawn", "Quarantined"], &rows);
    Ok(rep)
}

/// Runs syntax-aware fragment recovery over collected records.
pub fn run_fragment(cfg: &PipelineConfig, corpus: &Corpus, sel: &Selection) -> Result<StageReport, PipelineError> {
    let stage = Stage::Fragment;
    let scorer = cfg.scorer()?;
    let records = load_records(corpus, stage)?;
    let mut writer = corpus.writer().map_err(|e| PipelineError::stage(stage, e))?;
    let mut rep = StageReport::new(stage);
    let mut rows = Vec::new();
    for mut r in records.into_iter().filter(|r| sel.wants(&r.report.id)) {
        if r.pipeline_stage != PipelineStage::Collected && !sel.force {
            rep.skipped += 1;
            continue;
        }
        let n = match scorer.process_report(&r.report.body) {
            Some(frags) => {
                let n = frags.len();
                r.set_fragments(frags);
                n
            }
            None => {
                r.fragments = None;
                r.mark_non_extractable("no_fragments", vec![]);
                0
            }
        };
        writer.put(&r).map_err(|e| PipelineError::stage(stage, e))?;
        rep.processed += 1;
        rows.push(vec![r.report.id.clone(), n.to_string(), r.pipeline_stage.to_string()]);
        rep.rows.push(json!({ "id": r.report.id, "fragments": n, "stage": r.pipeline_stage }));
    }
    writer.commit().map_err(|e| PipelineError::stage(stage, e))?;
    rep.summary = table(&["Report", "Fragments", "Stage"], &rows);
    Ok(rep)
}

fn open_library(cfg: &PipelineConfig, corpus: &Corpus, embedder: &HashingEmbedder) -> Result<ExemplarLibrary, PipelineError> {
    let path = corpus.exemplar_path();
    if path.exists() {
        return ExemplarLibrary::load(&path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())));
    }
    let ec = &cfg.extractor.config;
    match &cfg.extractor.seed_library {
        Some(p) => {
            let p = cfg.resolve(p);
            let text = std::fs::read_to_string(&p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            ExemplarLibrary::from_seed_toml(&text, embedder, ec.library_cap).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(ExemplarLibrary::new(ec.embedding_dim, ec.library_cap)),
    }
}

/// Extracts raw PoCs from fragmented records. Extraction runs on `jobs`
/// workers against a snapshot of the exemplar library; promotions and
/// recency updates are then applied in report-id order, so the result does
/// not depend on scheduling.
pub fn run_extract(cfg: &PipelineConfig, corpus: &Corpus, sel: &Selection, jobs: usize) -> Result<StageReport, PipelineError> {
    let stage = Stage::Extract;
    let client = cfg.client()?;
    let embedder = HashingEmbedder::new(cfg.extractor.config.embedding_dim);
    let mut library = open_library(cfg, corpus, &embedder)?;
    let scorer = cfg.scorer()?;
    let subjects: BTreeSet<String> = scorer.config().subject_keywords.iter().map(|s| s.to_ascii_uppercase()).collect();
    let records = load_records(corpus, stage)?;
    let mut rep = StageReport::new(stage);

    let mut todo = Vec::new();
    for r in records.into_iter().filter(|r| sel.wants(&r.report.id)) {
        let eligible_stage = match r.pipeline_stage {
            PipelineStage::Fragmented => true,
            PipelineStage::Collected => false,
            _ => sel.force && r.fragments.as_ref().is_some_and(|f| !f.is_empty()),
        };
        if !eligible_stage || !(cfg.extractor.include_unacknowledged || r.report.status.is_acknowledged()) {
            rep.skipped += 1;
            continue;
        }
        let mut r = r;
        if r.pipeline_stage != PipelineStage::Fragmented {
            let frags = r.fragments.take().unwrap_or_default();
            r.set_fragments(frags);
        }
        todo.push(r);
    }

    let env = ExtractionEnv { client: client.as_ref(), library: &library, embedder: &embedder, subjects: &subjects, cfg: &cfg.extractor.config };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| PipelineError::stage(stage, e))?;
    let runs: Vec<_> = pool.install(|| todo.par_iter().map(|r| extract_raw_poc(r, &env)).collect());

    let mut writer = corpus.writer().map_err(|e| PipelineError::stage(stage, e))?;
    let mut rows = Vec::new();
    let mut promoted = 0;
    for (mut r, run) in todo.into_iter().zip(runs) {
        let run = match run {
            Ok(run) => run,
            Err(e) => {
                log::error!("{}: {e}", r.report.id);
                rep.failed.push((r.report.id.clone(), e.to_string()));
                continue;
            }
        };
        library.touch(run.retrieved.iter().map(String::as_str));
        if let Some(ex) = promotion_candidate(&run, &r, &embedder) {
            if let Some(evicted) = library.insert(ex) {
                log::info!("exemplar library full, evicted {evicted}");
            }
            promoted += 1;
        }
        let (outcome, detail) = match run.outcome {
            ExtractionOutcome::Extracted { poc } => {
                let n = poc.statements.len();
                r.set_raw_poc(poc);
                ("extracted".to_string(), format!("{n} statements"))
            }
            ExtractionOutcome::NonExtractable { reason, details } => {
                r.mark_non_extractable(reason.clone(), details);
                ("non_extractable".to_string(), reason)
            }
        };
        writer.put(&r).map_err(|e| PipelineError::stage(stage, e))?;
        rep.processed += 1;
        rows.push(vec![r.report.id.clone(), outcome.clone(), run.rounds.to_string(), detail.clone()]);
        rep.rows.push(json!({ "id": r.report.id, "outcome": outcome, "rounds": run.rounds, "detail": detail }));
    }
    if rep.processed > 0 || !corpus.exemplar_path().exists() {
        library.save(&corpus.exemplar_path()).map_err(|e| PipelineError::stage(stage, e))?;
    }
    writer.commit().map_err(|e| PipelineError::stage(stage, e))?;
    rep.summary = table(&["Report", "Outcome", "Rounds", "Detail"], &rows);
    rep.summary.push_str(&format!("promoted exemplars: {promoted}, library size: {}\n", library.len()));
    Ok(rep)
}

/// Adapts extracted raw PoCs. Records are grouped by backend; each group
/// runs on its own thread against its own backend instance.
pub fn run_adapt(cfg: &PipelineConfig, corpus: &Corpus, sel: &Selection, backend: Option<&str>) -> Result<StageReport, PipelineError> {
    let stage = Stage::Adapt;
    let client = cfg.client()?;
    let forced = backend.map(|b| cfg.backend(b)).transpose()?;
    let records = load_records(corpus, stage)?;
    let mut rep = StageReport::new(stage);
    let mut groups: BTreeMap<String, Vec<CorpusRecord>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| sel.wants(&r.report.id)) {
        let ready = match r.pipeline_stage {
            PipelineStage::Extracted => true,
            PipelineStage::Adapted | PipelineStage::AdaptationFailed => sel.force,
            _ => false,
        };
        if !ready || r.raw_poc.is_none() {
            rep.skipped += 1;
            continue;
        }
        match forced.or_else(|| cfg.backend_for(&r.report.dbms)) {
            Some(b) => groups.entry(b.name.clone()).or_default().push(r),
            None => rep.failed.push((r.report.id.clone(), format!("no backend configured for dbms `{}`", r.report.dbms))),
        }
    }

    type GroupResult = Result<Vec<(CorpusRecord, AdaptOutcome)>, String>;
    let client = client.as_ref();
    let results: Vec<(String, GroupResult)> = std::thread::scope(|scope| {
        let handles: Vec<_> = groups
            .into_iter()
            .map(|(name, recs)| {
                scope.spawn(move || -> (String, GroupResult) {
                    let run = || -> GroupResult {
                        let spec = cfg.backend(&name).map_err(|e| e.to_string())?;
                        let kb = cfg.knowledge_base(spec).map_err(|e| e.to_string())?;
                        let mut ex = cfg.executor(spec).map_err(|e| e.to_string())?;
                        let mut out = Vec::new();
                        for r in recs {
                            let raw = r.raw_poc.as_ref().expect("filtered above");
                            let o = adapt(raw, &mut ex, client, &kb, &cfg.adapter.config).map_err(|e| format!("{}: {e}", r.report.id))?;
                            out.push((r, o));
                        }
                        Ok(out)
                    };
                    (name.clone(), run())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("adapt worker panicked")).collect()
    });

    let mut done: Vec<(CorpusRecord, AdaptOutcome)> = Vec::new();
    for (name, res) in results {
        match res {
            Ok(v) => done.extend(v),
            Err(e) => rep.failed.push((name, e)),
        }
    }
    done.sort_by(|a, b| a.0.report.id.cmp(&b.0.report.id));
    let mut writer = corpus.writer().map_err(|e| PipelineError::stage(stage, e))?;
    let mut rows = Vec::new();
    for (mut r, o) in done {
        let row = match o {
            AdaptOutcome::Adapted { test_case } => {
                let row = json!({
                    "id": r.report.id, "outcome": "adapted", "backend": test_case.backend_id,
                    "iterations": test_case.iterations, "repairs": test_case.adaptation_log.len(),
                    "expectation": test_case.expectation, "risk": test_case.risk_tier.value,
                });
                rows.push(vec![
                    r.report.id.clone(),
                    "adapted".into(),
                    test_case.iterations.to_string(),
                    test_case.adaptation_log.len().to_string(),
                    match &test_case.expectation {
                        crate::adapter::Expectation::ExpectBug(s) => format!("expect_bug({s})"),
                        crate::adapter::Expectation::ExpectClean => "expect_clean".into(),
                    },
                ]);
                r.set_test_case(test_case);
                row
            }
            AdaptOutcome::Failed { reason, log, last_outcome } => {
                let mut details: Vec<String> = log.iter().flat_map(|s| s.violations.iter().map(move |v| format!("iteration {}: {v}", s.iteration))).collect();
                if let Some(o) = &last_outcome {
                    details.push(format!("last outcome: {}", o.symptom()));
                }
                rows.push(vec![r.report.id.clone(), "adaptation_failed".into(), log.len().to_string(), log.len().to_string(), reason.clone()]);
                let row = json!({ "id": r.report.id, "outcome": "adaptation_failed", "reason": reason, "repairs": log.len() });
                r.mark_adaptation_failed(reason, details);
                row
            }
        };
        writer.put(&r).map_err(|e| PipelineError::stage(stage, e))?;
        rep.processed += 1;
        rep.rows.push(row);
    }
    writer.commit().map_err(|e| PipelineError::stage(stage, e))?;
    rep.summary = table(&["Report", "Outcome", "Iterations", "Repairs", "Expectation"], &rows);
    Ok(rep)
}

/// Writes fuzzing seeds for one DBMS.
pub fn run_export(corpus: &Corpus, target_dbms: &str, out_dir: &Path, filter: &SeedFilter) -> Result<StageReport, PipelineError> {
    let stage = Stage::Export;
    let records = load_records(corpus, stage)?;
    let seeds = export_seeds(&records, target_dbms, out_dir, filter).map_err(|e| PipelineError::stage(stage, e))?;
    let mut rep = StageReport::new(stage);
    rep.processed = seeds.files.len();
    let rows: Vec<Vec<String>> = seeds.manifest.iter().map(|(f, m)| vec![f.clone(), m.origin_report_id.clone()]).collect();
    rep.rows = seeds.manifest.iter().map(|(f, m)| json!({ "file": f, "origin_report_id": m.origin_report_id, "expectation": m.expectation })).collect();
    rep.summary = table(&["Seed", "Origin"], &rows);
    rep.summary.push_str(&format!("{} seeds written to {}\n", seeds.files.len(), out_dir.display()));
    Ok(rep)
}

fn replay_cases(records: &[CorpusRecord], sel: &Selection, keep: impl Fn(&CorpusRecord) -> bool) -> Vec<ReplayCase> {
    records.iter().filter(|r| sel.wants(&r.report.id) && keep(r)).filter_map(ReplayCase::from_record).collect()
}

fn target(cfg: &PipelineConfig, spec: &BackendSpec) -> Result<ReplayTarget, PipelineError> {
    let executor = cfg.executor(spec).map_err(|e| PipelineError::Config(format!("backend {}: {e}", spec.name)))?;
    Ok(ReplayTarget { executor, dbms: spec.dbms.clone(), latest: spec.latest, fixed: spec.fixed })
}

fn findings_report(stage: Stage, findings: Vec<crate::campaigns::ReplayFinding>, method: &str, out: Option<&Path>) -> Result<StageReport, PipelineError> {
    if let Some(p) = out {
        let f = std::fs::File::create(p).map_err(|e| PipelineError::stage(stage, e))?;
        write_findings_jsonl(&findings, std::io::BufWriter::new(f)).map_err(|e| PipelineError::stage(stage, e))?;
    }
    let mut rep = StageReport::new(stage);
    rep.processed = findings.len();
    rep.summary = render_findings_table(&findings, method);
    let groups = dedupe_findings(&findings);
    rep.summary.push_str(&format!("{} findings, {} distinct signatures\n", findings.len(), groups.len()));
    rep.rows = findings.iter().map(|f| serde_json::to_value(f).expect("finding serializes")).collect();
    Ok(rep)
}

/// Replays fixed bugs of `dbms` on its configured backends, or on the
/// named ones.
pub fn run_regress(
    cfg: &PipelineConfig,
    corpus: &Corpus,
    sel: &Selection,
    dbms: &str,
    backends: &[String],
    out: Option<&Path>,
) -> Result<StageReport, PipelineError> {
    let stage = Stage::Regress;
    let specs: Vec<&BackendSpec> = if backends.is_empty() {
        // Only releases that say something about the fix take part by default.
        cfg.harness.backends.iter().filter(|b| b.dbms.eq_ignore_ascii_case(dbms) && (b.latest || b.fixed)).collect()
    } else {
        backends.iter().map(|n| cfg.backend(n)).collect::<Result<_, _>>()?
    };
    if specs.is_empty() {
        return Err(PipelineError::Config(format!("no backends for `{dbms}`")));
    }
    let records = load_records(corpus, stage)?;
    let cases = replay_cases(&records, sel, |r| r.report.dbms.eq_ignore_ascii_case(dbms) && r.report.status == ReportStatus::Fixed);
    let mut targets = specs.into_iter().map(|s| target(cfg, s)).collect::<Result<Vec<_>, _>>()?;
    let findings = regression_replay(&cases, &mut targets).map_err(|e| PipelineError::stage(stage, e))?;
    findings_report(stage, findings, "regression", out)
}

/// Replays cases from `from_dbms` on one backend of another DBMS.
pub fn run_cross(cfg: &PipelineConfig, corpus: &Corpus, sel: &Selection, from_dbms: &str, backend: &str, out: Option<&Path>) -> Result<StageReport, PipelineError> {
    let stage = Stage::Cross;
    let spec = cfg.backend(backend)?;
    if spec.dbms.eq_ignore_ascii_case(from_dbms) {
        return Err(PipelineError::Config(format!("cross replay needs a backend of another DBMS than `{from_dbms}`")));
    }
    let records = load_records(corpus, stage)?;
    let cases = replay_cases(&records, sel, |r| r.report.dbms.eq_ignore_ascii_case(from_dbms));
    let mut t = target(cfg, spec)?;
    let findings = cross_replay(&cases, &mut t).map_err(|e: CampaignError| PipelineError::stage(stage, e))?;
    findings_report(stage, findings, "cross-dbms", out)
}

pub fn run_stats(corpus: &Corpus) -> Result<StageReport, PipelineError> {
    let stage = Stage::Stats;
    let records = load_records(corpus, stage)?;
    let stats = corpus_stats(&records);
    let mut rep = StageReport::new(stage);
    rep.processed = records.len();
    rep.summary = stats.render_table();
    rep.rows = vec![serde_json::to_value(&stats).expect("stats serialize")];
    Ok(rep)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleCase {
    report_id: String,
    statements: Vec<String>,
    #[serde(default)]
    expected: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SampleFile {
    #[serde(rename = "case", default)]
    cases: Vec<SampleCase>,
}

/// Parses a strategy sample file.
pub fn load_sample(path: &Path) -> Result<Vec<RawPoc>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let f: SampleFile = toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    Ok(f.cases
        .into_iter()
        .map(|c| {
            let mut p = RawPoc::verbatim(&c.report_id, c.statements);
            p.expected_behavior = c.expected;
            p
        })
        .collect())
}

/// Compares the F, S and F+S strategies on the configured sample.
pub fn run_strategy_report(cfg: &PipelineConfig, sample: Option<&Path>, backend: Option<&str>) -> Result<StageReport, PipelineError> {
    let stage = Stage::StrategyReport;
    let sample = match (sample, &cfg.strategy.sample) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => return Err(PipelineError::Config("no strategy sample: set [strategy] sample or pass --sample".into())),
    };
    let name = backend.or(cfg.strategy.backend.as_deref()).ok_or_else(|| PipelineError::Config("no strategy backend".into()))?;
    let spec = cfg.backend(name)?;
    let cases = load_sample(&sample)?;
    let client = cfg.client()?;
    let kb = cfg.knowledge_base(spec)?;
    let mut reports = Vec::new();
    for mode in [StrategyMode::Feedback, StrategyMode::Semantic, StrategyMode::Combined] {
        // A fresh backend per mode keeps the modes independent.
        let mut ex = cfg.executor(spec).map_err(|e| PipelineError::Config(e.to_string()))?;
        reports.push(strategy_report(&cases, mode, &mut ex, client.as_ref(), &kb, &cfg.adapter.config).map_err(|e| PipelineError::stage(stage, e))?);
    }
    let mut rep = StageReport::new(stage);
    rep.processed = cases.len();
    rep.summary = render_strategy_table(&reports);
    rep.rows = reports.iter().map(|r| serde_json::to_value(r).expect("report serializes")).collect();
    Ok(rep)
}

/// Runs one script on a backend with the usual risk-based cleanup.
pub fn run_exec(cfg: &PipelineConfig, backend: &str, script: &str) -> Result<StageReport, PipelineError> {
    let stage = Stage::Exec;
    let spec = cfg.backend(backend)?;
    let mut ex = cfg.executor(spec).map_err(|e| PipelineError::Config(e.to_string()))?;
    let stmts = crate::sql::split_statements(script);
    let e = ex.execute(&stmts).map_err(|e| PipelineError::stage(stage, e))?;
    let mut rep = StageReport::new(stage);
    rep.processed = stmts.len();
    rep.summary = format!("outcome: {}\nrisk: {:?}\ncleanup: {}\n", e.outcome.symptom(), e.risk.value, e.cleanup);
    if !e.outcome.is_clean() {
        rep.summary.push_str(&format!("{}\n", e.outcome.feedback()));
    }
    rep.rows = vec![serde_json::to_value(&e).expect("execution serializes")];
    Ok(rep)
}
