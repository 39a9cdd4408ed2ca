//! Exemplar library with hybrid retrieval and least-recently-retrieved
//! eviction.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, keyword_overlap, keywords, Embedder};
use super::extract::{Provenance, RawPoc};
use crate::repository::corpus::{to_pretty_json, write_if_changed};

/// Reciprocal-rank-fusion constant.
pub const RRF_K: f64 = 60.0;
pub const DEFAULT_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub report_summary: String,
    pub fragments_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_poc: Option<RawPoc>,
    pub reasoning_trace: Vec<String>,
    pub polarity: Polarity,
    pub dense_vector: Vec<f32>,
    pub keywords: BTreeMap<String, usize>,
    /// Logical time of the last retrieval (or insertion).
    #[serde(default)]
    pub last_retrieved: u64,
}

/// What retrieval compares against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetrievalContext {
    pub summary: String,
    pub fragments: String,
}

impl RetrievalContext {
    pub fn text(&self) -> String {
        format!("{}\n{}", self.summary, self.fragments)
    }
}

const DIGEST_LIMIT: usize = 2000;

pub fn digest(text: &str) -> String {
    match text.char_indices().nth(DIGEST_LIMIT) {
        Some((pos, _)) => text[..pos].to_string(),
        None => text.to_string(),
    }
}

impl Exemplar {
    pub fn new(
        id: impl Into<String>,
        polarity: Polarity,
        report_summary: impl Into<String>,
        fragments: &str,
        raw_poc: Option<RawPoc>,
        reasoning_trace: Vec<String>,
        embedder: &dyn Embedder,
    ) -> Exemplar {
        let ctx = RetrievalContext { summary: report_summary.into(), fragments: digest(fragments) };
        let text = ctx.text();
        Exemplar {
            id: id.into(),
            report_summary: ctx.summary,
            fragments_digest: ctx.fragments,
            raw_poc,
            reasoning_trace,
            polarity,
            dense_vector: embedder.embed(&text),
            keywords: keywords(&text),
            last_retrieved: 0,
        }
    }

    pub fn context(&self) -> RetrievalContext {
        RetrievalContext { summary: self.report_summary.clone(), fragments: self.fragments_digest.clone() }
    }

    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if self.dense_vector.len() != dim {
            return Err(format!("exemplar {} has vector length {} (library uses {dim})", self.id, self.dense_vector.len()));
        }
        match self.polarity {
            Polarity::Positive if self.raw_poc.as_ref().is_none_or(|p| p.statements.is_empty()) => {
                Err(format!("positive exemplar {} has no statements", self.id))
            }
            Polarity::Negative if !self.reasoning_trace.iter().any(|s| s.to_ascii_lowercase().contains("non-extractable")) => {
                Err(format!("negative exemplar {} does not state why it is non-extractable", self.id))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarLibrary {
    pub dim: usize,
    pub cap: usize,
    pub tick: u64,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, thiserror::Error)]
pub enum LibraryError {
    #[error("library file: {0}")]
    Io(#[from] std::io::Error),
    #[error("library format: {0}")]
    Format(String),
    #[error("invalid exemplar: {0}")]
    Invalid(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedEntry {
    id: String,
    polarity: Polarity,
    report_summary: String,
    fragments: String,
    #[serde(default)]
    statements: Vec<String>,
    #[serde(default)]
    expected: Option<String>,
    reasoning_trace: Vec<String>,
}

#[derive(Deserialize)]
struct SeedFile {
    exemplar: Vec<SeedEntry>,
}

fn rank_positions(order: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; order.len()];
    for (rank, &i) in order.iter().enumerate() {
        pos[i] = rank + 1;
    }
    pos
}

impl ExemplarLibrary {
    pub fn new(dim: usize, cap: usize) -> Self {
        assert!(cap > 0, "library cap must be positive");
        ExemplarLibrary { dim, cap, tick: 0, exemplars: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Exemplar> {
        self.exemplars.iter().find(|e| e.id == id)
    }

    /// Loads hand-written seed exemplars from TOML.
    ///
    /// ```toml
    /// [[exemplar]]
    /// id = "seed-01"
    /// polarity = "positive"
    /// report_summary = "..."
    /// fragments = "..."
    /// statements = ["CREATE TABLE t (a INT)", "SELECT * FROM t"]
    /// reasoning_trace = ["...", "..."]
    /// ```
    pub fn from_seed_toml(text: &str, embedder: &dyn Embedder, cap: usize) -> Result<Self, LibraryError> {
        let seeds: SeedFile = toml::from_str(text).map_err(|e| LibraryError::Format(e.to_string()))?;
        let mut lib = ExemplarLibrary::new(embedder.dim(), cap);
        for s in seeds.exemplar {
            let poc = (!s.statements.is_empty()).then(|| RawPoc {
                provenance: (0..s.statements.len()).map(|i| (i, Provenance::Fragment(0))).collect(),
                statements: s.statements,
                report_id: s.id.clone(),
                expected_behavior: s.expected,
                expected_source: None,
            });
            let ex = Exemplar::new(s.id, s.polarity, s.report_summary, &s.fragments, poc, s.reasoning_trace, embedder);
            ex.validate(lib.dim).map_err(LibraryError::Invalid)?;
            lib.insert(ex);
        }
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self, LibraryError> {
        let lib: ExemplarLibrary = serde_json::from_slice(&std::fs::read(path)?).map_err(|e| LibraryError::Format(e.to_string()))?;
        for e in &lib.exemplars {
            e.validate(lib.dim).map_err(LibraryError::Invalid)?;
        }
        Ok(lib)
    }

    pub fn save(&self, path: &Path) -> Result<(), LibraryError> {
        write_if_changed(path, to_pretty_json(self).as_bytes())?;
        Ok(())
    }

    /// Fused ranking of every exemplar, best first, as indices.
    fn fused_order(&self, ctx: &RetrievalContext, embedder: &dyn Embedder) -> Vec<usize> {
        let n = self.exemplars.len();
        let text = ctx.text();
        let qv = embedder.embed(&text);
        let qk = keywords(&text);
        let dense: Vec<f64> = self.exemplars.iter().map(|e| cosine(&qv, &e.dense_vector)).collect();
        let lexical: Vec<f64> = self.exemplars.iter().map(|e| keyword_overlap(&qk, &e.keywords)).collect();
        let by = |scores: &[f64]| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| self.exemplars[a].id.cmp(&self.exemplars[b].id)));
            rank_positions(&order)
        };
        let (rd, rk) = (by(&dense), by(&lexical));
        let fused: Vec<f64> = (0..n).map(|i| 1.0 / (RRF_K + rd[i] as f64) + 1.0 / (RRF_K + rk[i] as f64)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| match fused[b].total_cmp(&fused[a]) {
            Ordering::Equal => self.exemplars[a].id.cmp(&self.exemplars[b].id),
            o => o,
        });
        order
    }

    /// Top `k` by fused rank, plus the best-ranked negative when none made
    /// the cut. Does not update recency; see [`ExemplarLibrary::touch`].
    pub fn retrieve(&self, ctx: &RetrievalContext, k: usize, embedder: &dyn Embedder) -> Vec<Exemplar> {
        let order = self.fused_order(ctx, embedder);
        let mut picked: Vec<usize> = order.iter().copied().take(k.max(1)).collect();
        if !picked.iter().any(|&i| self.exemplars[i].polarity == Polarity::Negative) {
            if let Some(&neg) = order.iter().find(|&&i| self.exemplars[i].polarity == Polarity::Negative) {
                picked.push(neg);
            }
        }
        picked.into_iter().map(|i| self.exemplars[i].clone()).collect()
    }

    /// Records a retrieval of `ids` at the next logical tick.
    pub fn touch<'a>(&mut self, ids: impl IntoIterator<Item = &'a str>) {
        self.tick += 1;
        let tick = self.tick;
        for id in ids {
            if let Some(e) = self.exemplars.iter_mut().find(|e| e.id == id) {
                e.last_retrieved = tick;
            }
        }
    }

    /// Inserts or replaces an exemplar. Returns the id evicted to stay
    /// within the cap, if any.
    pub fn insert(&mut self, mut ex: Exemplar) -> Option<String> {
        self.tick += 1;
        ex.last_retrieved = self.tick;
        if let Some(slot) = self.exemplars.iter_mut().find(|e| e.id == ex.id) {
            *slot = ex;
            return None;
        }
        self.exemplars.push(ex);
        if self.exemplars.len() <= self.cap {
            return None;
        }
        let victim = self
            .exemplars
            .iter()
            .enumerate()
            .min_by_key(|(i, e)| (e.last_retrieved, *i))
            .map(|(i, _)| i)
            .expect("library is non-empty");
        Some(self.exemplars.remove(victim).id)
    }
}
