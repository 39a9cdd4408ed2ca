//! Normalized bug reports and their derived artifacts, persisted as a
//! directory of JSON records.

pub mod adapters;
pub mod corpus;
pub mod sync;
pub mod types;

pub use adapters::{AdapterRegistry, FixtureAdapter, HttpFetchAdapter, MailingListAdapter, SourceAdapter};
pub use corpus::{corpus_stats, ingest_report, store_report, Corpus, CorpusStats, CorpusWriter, DbmsStats, IngestChange, IngestOutcome};
pub use sync::{detect_change, plan_sync, run_sync, FixtureUpstream, RefreshPolicy, SyncPlan, SyncReport, Upstream, UpstreamSnapshot};
pub use types::{BugReport, CorpusRecord, PipelineStage, ReportSource, ReportStatus, StageNote};

#[derive(Debug, thiserror::Error)]
pub enum RepositoryError {
    #[error("unknown source adapter `{0}`")]
    UnknownAdapter(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("corpus is locked by another writer ({0})")]
    Locked(String),
    #[error("fetch failed: {0}")]
    Fetch(String),
    #[error("corrupt record {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
