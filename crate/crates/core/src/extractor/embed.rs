//! Dense vectors and keyword bags for exemplar retrieval.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::sql;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f32>;
}

/// Signed feature hashing over lower-cased word unigrams and bigrams,
/// L2-normalized. Deterministic across platforms and runs.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(128)
    }
}

fn fnv(s: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(s.as_bytes());
    h.finish()
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|w| !w.is_empty()).map(|w| w.to_lowercase()).collect()
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        let ws = words(text);
        let mut add = |feature: &str, weight: f32| {
            let h = fnv(feature);
            let idx = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign * weight;
        };
        for w in &ws {
            add(w, 1.0);
        }
        for pair in ws.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "with", "this", "that", "from", "are", "was", "were", "when", "then", "than", "but", "not", "have",
    "has", "had", "you", "your", "our", "can", "will", "would", "should", "could", "there", "here", "into", "after", "before",
    "what", "which", "while", "also", "only", "just", "how", "why", "its", "it's", "all", "any", "some", "one", "two", "use",
    "used", "using", "get", "got", "see", "run", "ran", "bug", "report", "repeat", "description",
];

const SYMPTOMS: &[&str] = &[
    "crash", "crashes", "crashed", "segfault", "segmentation", "fault", "assertion", "assert", "abort", "aborted", "signal",
    "sigsegv", "sigabrt", "hang", "hangs", "timeout", "deadlock", "overflow", "underflow", "leak", "wrong", "incorrect",
    "corrupt", "corruption", "lost", "connection", "malformed", "panic", "error", "failed", "failure",
];

/// Lexical cue weight: error codes count most, then SQL keywords and
/// symptom words, then everything else.
pub fn keyword_weight(token: &str) -> f64 {
    if token.starts_with("error:") {
        3.0
    } else if SYMPTOMS.contains(&token) || is_sql_word(token) {
        2.0
    } else {
        1.0
    }
}

fn is_sql_word(token: &str) -> bool {
    let up = token.to_ascii_uppercase();
    sql::BASE_SUBJECT_KEYWORDS.contains(&up.as_str()) || sql::KEY_OPERATIONS.iter().any(|k| k.split(' ').any(|p| p == up))
}

/// Token multiset used by the keyword retriever. `ERROR 1418` and
/// `ERROR 1418 (HY000)` both yield the cue `error:1418`.
pub fn keywords(text: &str) -> BTreeMap<String, usize> {
    let ws = words(text);
    let mut bag = BTreeMap::new();
    for (i, w) in ws.iter().enumerate() {
        if w == "error" {
            if let Some(code) = ws.get(i + 1).filter(|c| c.len() >= 3 && c.chars().all(|ch| ch.is_ascii_digit())) {
                *bag.entry(format!("error:{code}")).or_insert(0) += 1;
            }
        }
        let numeric = w.chars().all(|c| c.is_ascii_digit());
        if w.chars().count() < 3 || STOPWORDS.contains(&w.as_str()) || numeric && w.len() < 3 {
            continue;
        }
        *bag.entry(w.clone()).or_insert(0) += 1;
    }
    bag
}

/// Weighted multiset overlap: Σ weight(t) · min(tf_a(t), tf_b(t)).
pub fn keyword_overlap(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> f64 {
    a.iter().filter_map(|(t, &n)| b.get(t).map(|&m| keyword_weight(t) * n.min(m) as f64)).sum()
}
