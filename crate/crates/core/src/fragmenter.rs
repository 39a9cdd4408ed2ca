//! Finds the parts of a bug report that carry SQL.
//!
//! The scan walks the body once, top to bottom. At each line it tries, in
//! order: a formatted block opened on that line, a statement ending on that
//! line (recovered by walking backwards to its leading keyword), and finally
//! a keyword score for the line alone.
//!
//! The result list is the captures in scan order. When a backtracked
//! statement swallows lines that were already captured by scoring, those
//! scored captures are dropped so fragments never overlap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::sql;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureStage {
    FormattedBlock,
    BacktrackedStatement,
    ScoredLine,
}

impl CaptureStage {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureStage::FormattedBlock => "formatted_block",
            CaptureStage::BacktrackedStatement => "backtracked_statement",
            CaptureStage::ScoredLine => "scored_line",
        }
    }
}

impl fmt::Display for CaptureStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A contiguous run of body lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub start_index: usize,
    pub lines: Vec<String>,
    pub capture_stage: CaptureStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Fragment {
    /// Index one past the last line.
    pub fn end_index(&self) -> usize {
        self.start_index + self.lines.len()
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

/// A start/end delimiter pair for formatted blocks. `open` matches a line
/// whose trimmed text starts with it; `close` must equal the trimmed line.
/// Both comparisons ignore ASCII case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTag {
    pub open: String,
    pub close: String,
}

impl BlockTag {
    fn opens(&self, line: &str) -> bool {
        let t = line.trim();
        t.len() >= self.open.len() && t.is_char_boundary(self.open.len()) && t[..self.open.len()].eq_ignore_ascii_case(&self.open)
    }

    fn closes(&self, line: &str) -> bool {
        line.trim().eq_ignore_ascii_case(&self.close)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub keyword_weights: BTreeMap<String, f64>,
    /// Regex → penalty subtracted once when the pattern matches.
    pub penalty_patterns: BTreeMap<String, f64>,
    pub theta_score: f64,
    pub subject_keywords: Vec<String>,
    pub block_tags: Vec<BlockTag>,
    /// Lines the backward walk may cover, terminator line included.
    pub backtrack_window: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let weights = [
            ("SELECT", 3.0),
            ("INSERT", 3.0),
            ("UPDATE", 3.0),
            ("DELETE", 3.0),
            ("CREATE", 3.0),
            ("DROP", 3.0),
            ("ALTER", 3.0),
            ("FROM", 2.0),
            ("WHERE", 2.0),
            ("SET", 2.0),
            ("INTO", 2.0),
            ("VALUES", 2.0),
            ("TABLE", 2.0),
            ("JOIN", 2.0),
            ("GROUP", 1.0),
            ("ORDER", 1.0),
            ("BY", 1.0),
            ("COUNT", 1.0),
            ("INDEX", 1.0),
            ("VIEW", 1.0),
            ("TRIGGER", 1.0),
            ("PROCEDURE", 1.0),
            ("FUNCTION", 1.0),
            ("HAVING", 1.0),
            ("UNION", 1.0),
            ("DISTINCT", 1.0),
        ];
        let penalties = [
            (r"0x[0-9a-fA-F]+", 5.0),
            (r"^\s*#\d+\s", 5.0),
            (r"[\w/.-]+\.(?:cc|cpp|c|h|hpp|ic|rs|java|py|go):\d+", 4.0),
            (r"\b(?:SIGSEGV|SIGABRT|SIGBUS)\b|\bsignal \d+\b", 3.0),
            (r"^\s*(?:at|in)\s+[\w:<>~]+\s*\(", 3.0),
        ];
        ScoringConfig {
            keyword_weights: weights.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            penalty_patterns: penalties.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            theta_score: 4.0,
            subject_keywords: sql::BASE_SUBJECT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            block_tags: vec![
                BlockTag { open: "```".into(), close: "```".into() },
                BlockTag { open: "<pre".into(), close: "</pre>".into() },
            ],
            backtrack_window: 64,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid scoring config: {0}")]
    Invalid(String),
    #[error("cannot read scoring config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scoring config: {0}")]
    Parse(#[from] toml::de::Error),
}

impl ScoringConfig {
    pub fn load(path: &Path) -> Result<ScoringConfig, ConfigError> {
        let cfg: ScoringConfig = toml::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.compile().map(|_| ())
    }

    pub fn compile(&self) -> Result<Scorer, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.theta_score > 0.0 && self.theta_score.is_finite()) {
            return bad(format!("theta_score must be positive, got {}", self.theta_score));
        }
        if self.subject_keywords.is_empty() {
            return bad("subject_keywords must not be empty".into());
        }
        if self.backtrack_window == 0 {
            return bad("backtrack_window must be at least 1".into());
        }
        let mut words = BTreeMap::new();
        let mut symbols = Vec::new();
        for (k, &w) in &self.keyword_weights {
            if !w.is_finite() {
                return bad(format!("weight for `{k}` is not finite"));
            }
            if k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                words.insert(k.to_ascii_uppercase(), w);
            } else {
                symbols.push((k.clone(), w));
            }
        }
        let mut penalties = Vec::new();
        for (p, &w) in &self.penalty_patterns {
            if !w.is_finite() {
                return bad(format!("penalty for `{p}` is not finite"));
            }
            let re = Regex::new(p).map_err(|e| ConfigError::Invalid(format!("penalty pattern `{p}`: {e}")))?;
            penalties.push((re, w));
        }
        Ok(Scorer {
            cfg: self.clone(),
            words,
            symbols,
            penalties,
            subjects: self.subject_keywords.iter().map(|s| s.to_ascii_uppercase()).collect(),
        })
    }
}

/// A validated [`ScoringConfig`] with its patterns compiled.
#[derive(Debug, Clone)]
pub struct Scorer {
    cfg: ScoringConfig,
    words: BTreeMap<String, f64>,
    symbols: Vec<(String, f64)>,
    penalties: Vec<(Regex, f64)>,
    subjects: BTreeSet<String>,
}

fn words_of(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).filter(|w| !w.is_empty())
}

impl Scorer {
    pub fn config(&self) -> &ScoringConfig {
        &self.cfg
    }

    /// Sum of distinct matched keyword weights minus matched penalties.
    pub fn score_line(&self, line: &str) -> f64 {
        let mut seen = BTreeSet::new();
        let mut score = 0.0;
        for w in words_of(line) {
            let up = w.to_ascii_uppercase();
            if let Some(&weight) = self.words.get(&up) {
                if seen.insert(up) {
                    score += weight;
                }
            }
        }
        for (sym, w) in &self.symbols {
            if line.contains(sym.as_str()) {
                score += w;
            }
        }
        for (re, w) in &self.penalties {
            if re.is_match(line) {
                score -= w;
            }
        }
        score
    }

    /// A line that can start a statement: its first word (after any client
    /// prompt) is a subject keyword, or it contains a subject keyword written
    /// in capitals as a whole word, as prose-embedded SQL usually is.
    pub fn is_sql_subject(&self, line: &str) -> bool {
        let stripped = sql::strip_prompt(line);
        if let Some(first) = words_of(stripped).next() {
            if self.subjects.contains(&first.to_ascii_uppercase()) {
                return true;
            }
        }
        words_of(line).any(|w| w.bytes().all(|b| b.is_ascii_uppercase()) && self.subjects.contains(w))
    }

    fn block_tag(&self, line: &str) -> Option<&BlockTag> {
        self.cfg.block_tags.iter().find(|t| t.opens(line))
    }

    /// If `body[i]` opens a block, pairs it with the nearest closing tag.
    /// Returns the interior (possibly empty) and the closing line's index.
    pub fn capture_formatted_block(&self, body: &[String], i: usize) -> Option<(Fragment, usize)> {
        let tag = self.block_tag(body.get(i)?)?;
        let j = (i + 1..body.len()).find(|&j| tag.closes(&body[j]))?;
        let frag = Fragment {
            start_index: i + 1,
            lines: body[i + 1..j].to_vec(),
            capture_stage: CaptureStage::FormattedBlock,
            score: None,
        };
        Some((frag, j))
    }

    /// Walks back from terminator line `i` (no further than `floor`) to the
    /// first line that starts a statement with the parenthesis balance
    /// closed.
    pub fn backtrack_statement(&self, body: &[String], i: usize, floor: usize) -> Option<Fragment> {
        if !sql::has_terminator(body.get(i)?) {
            return None;
        }
        let lowest = floor.max((i + 1).saturating_sub(self.cfg.backtrack_window));
        let mut b: i64 = 0;
        let mut j = i;
        loop {
            // Log and stack-trace lines (net negative score) never belong to
            // a statement, so the walk cannot start at or cross one.
            if self.score_line(&body[j]) < 0.0 {
                return None;
            }
            b += paren_delta(&body[j]);
            if self.is_sql_subject(&body[j]) && b <= 0 {
                return Some(Fragment {
                    start_index: j,
                    lines: body[j..=i].to_vec(),
                    capture_stage: CaptureStage::BacktrackedStatement,
                    score: None,
                });
            }
            if j == lowest {
                return None;
            }
            j -= 1;
        }
    }

    /// Runs the full scan. `None` when nothing was found.
    pub fn process_report(&self, body: &[String]) -> Option<Vec<Fragment>> {
        let mut out: Vec<Fragment> = Vec::new();
        // Lines below this index are owned by a block or statement capture.
        let mut floor = 0;
        let mut i = 0;
        while i < body.len() {
            if self.block_tag(&body[i]).is_some() {
                if let Some((frag, j)) = self.capture_formatted_block(body, i) {
                    if !frag.lines.is_empty() {
                        out.push(frag);
                    }
                    floor = j + 1;
                    i = j + 1;
                    continue;
                }
            } else if sql::has_terminator(&body[i]) {
                if let Some(frag) = self.backtrack_statement(body, i, floor) {
                    out.retain(|f| f.end_index() <= frag.start_index);
                    out.push(frag);
                    floor = i + 1;
                }
            } else {
                let s = self.score_line(&body[i]);
                if s >= self.cfg.theta_score {
                    out.push(Fragment { start_index: i, lines: vec![body[i].clone()], capture_stage: CaptureStage::ScoredLine, score: Some(s) });
                }
            }
            i += 1;
        }
        if out.is_empty() {
            None
        } else {
            Some(out)
        }
    }
}

/// `)` count minus `(` count on a raw line.
pub fn paren_delta(line: &str) -> i64 {
    line.chars().map(|c| match c {
        ')' => 1,
        '(' => -1,
        _ => 0,
    }).sum()
}

pub fn score_line(line: &str, cfg: &ScoringConfig) -> Result<f64, ConfigError> {
    Ok(cfg.compile()?.score_line(line))
}

pub fn process_report(body: &[String], cfg: &ScoringConfig) -> Result<Option<Vec<Fragment>>, ConfigError> {
    Ok(cfg.compile()?.process_report(body))
}

/// Human-readable listing used by the `fragment --report` debug command.
pub fn render_fragments(fragments: &[Fragment]) -> String {
    let mut out = String::new();
    for (n, f) in fragments.iter().enumerate() {
        let score = f.score.map(|s| format!(" score={s}")).unwrap_or_default();
        out.push_str(&format!("#{n} {} lines {}..{}{score}\n", f.capture_stage, f.start_index, f.end_index()));
        for (k, l) in f.lines.iter().enumerate() {
            out.push_str(&format!("  {:>4} | {l}\n", f.start_index + k));
        }
    }
    out
}
