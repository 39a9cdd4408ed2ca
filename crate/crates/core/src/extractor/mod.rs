//! Turns PoC-related fragments into a raw PoC with a text-generation
//! client, a retrieval-augmented exemplar library and self-examination.

pub mod client;
pub mod embed;
pub mod envelope;
pub mod extract;
pub mod library;
pub mod prompt;

pub use client::{HttpClient, Message, ScriptedClient, TextClient, API_KEY_ENV};
pub use embed::{Embedder, HashingEmbedder};
pub use envelope::{parse_envelope, Envelope};
pub use extract::{
    compute_provenance, extract_raw_poc, mine_expected_behavior, promotion_candidate, self_examine, ExpectedSource, ExtractError,
    ExtractionEnv, ExtractionOutcome, ExtractionRun, ExtractorConfig, Provenance, RawPoc, RejectKind, Verdict,
};
pub use library::{Exemplar, ExemplarLibrary, Polarity, RetrievalContext};
pub use prompt::{build_prompt, PromptBundle, PromptError};
