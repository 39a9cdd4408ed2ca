//! Uses the corpus for testing: fuzzing seeds, regression replay across
//! versions and cross-DBMS replay.

mod replay;
mod seeds;
mod signature;

pub use replay::{
    cross_replay, dedupe_findings, dialect_compatible, regression_replay, render_findings_table, symptom_matches, write_findings_jsonl, FindingGroup,
    ReplayCase, ReplayFinding, ReplayTarget, Verdict,
};
pub use seeds::{export_seeds, seed_filename, select_seeds, ManifestEntry, SeedCorpus, SeedFilter, ALL_DBMS, MANIFEST_FILE};
pub use signature::{normalize_frame, signature, SIGNATURE_FRAMES};

use crate::harness::HarnessError;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("no adapted test cases for `{0}`")]
    EmptySelection(String),
    #[error("replay needs at least one backend")]
    NoBackends,
    #[error("cross replay needs a different DBMS than the origin `{0}`")]
    SameDbms(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
