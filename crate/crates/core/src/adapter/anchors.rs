//! Semantic anchors of a PoC and the constraints an adapted PoC must keep.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::sql::{self, Dialect, QueryPattern};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnchorProfile {
    pub data_dependencies: BTreeSet<String>,
    pub key_operations: BTreeMap<String, usize>,
    pub query_patterns: BTreeSet<QueryPattern>,
}

pub fn capture_anchors(statements: &[String], dialect: Dialect) -> AnchorProfile {
    let routines = sql::defined_routines(statements, dialect);
    let mut p = AnchorProfile::default();
    for s in statements {
        let info = sql::analyze(sql::strip_prompt(s), dialect, &routines);
        p.data_dependencies.extend(info.dependencies());
        for op in info.key_operations {
            *p.key_operations.entry(op).or_insert(0) += 1;
        }
        p.query_patterns.extend(info.patterns);
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMatch {
    pub required: BTreeSet<String>,
    pub present: BTreeSet<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyCoverage {
    pub required: BTreeMap<String, usize>,
    pub present: BTreeMap<String, usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteBound {
    pub distance: f64,
    pub beta: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub anchor_match: AnchorMatch,
    pub key_coverage: KeyCoverage,
    pub rewrite_bound: RewriteBound,
    pub overall: bool,
}

impl ConstraintReport {
    /// Human-readable names of the failed constraints.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.anchor_match.pass {
            let missing: Vec<&str> = self.anchor_match.required.difference(&self.anchor_match.present).map(String::as_str).collect();
            v.push(format!("anchor_match: missing data dependencies {}", missing.join(", ")));
        }
        if !self.key_coverage.pass {
            let missing: Vec<String> = self
                .key_coverage
                .required
                .iter()
                .filter(|(k, n)| self.key_coverage.present.get(*k).copied().unwrap_or(0) < **n)
                .map(|(k, n)| format!("{k} x{n}"))
                .collect();
            v.push(format!("key_coverage: missing key operations {}", missing.join(", ")));
        }
        if !self.rewrite_bound.pass {
            v.push(format!("rewrite_bound: edit distance {:.2} exceeds {:.2}", self.rewrite_bound.distance, self.rewrite_bound.beta));
        }
        v
    }
}

/// Normalized token-level edit distance in [0, 1].
pub fn rewrite_distance(a: &[String], b: &[String]) -> f64 {
    let ta = sql::edit_tokens(a);
    let tb = sql::edit_tokens(b);
    let longest = ta.len().max(tb.len());
    if longest == 0 {
        return 0.0;
    }
    strsim::generic_levenshtein(&ta, &tb) as f64 / longest as f64
}

/// Checks `adapted` against the anchors of `raw`. Renamed identifiers
/// satisfy anchor matching only through the explicit `renames` table.
pub fn check_constraints(
    raw: &[String],
    adapted: &[String],
    profile: &AnchorProfile,
    beta: f64,
    renames: &[(String, String)],
    dialect: Dialect,
) -> ConstraintReport {
    let got = capture_anchors(adapted, dialect);
    let rename = |n: &String| -> String {
        renames.iter().rev().find(|(old, _)| old.eq_ignore_ascii_case(n)).map(|(_, new)| new.to_lowercase()).unwrap_or_else(|| n.clone())
    };
    let required: BTreeSet<String> = profile.data_dependencies.iter().map(rename).collect();
    let anchor_pass = required.is_subset(&got.data_dependencies);
    let key_pass = profile.key_operations.iter().all(|(k, n)| got.key_operations.get(k).copied().unwrap_or(0) >= *n);
    let distance = rewrite_distance(raw, adapted);
    let rewrite_pass = distance <= beta;
    ConstraintReport {
        anchor_match: AnchorMatch { required, present: got.data_dependencies, pass: anchor_pass },
        key_coverage: KeyCoverage { required: profile.key_operations.clone(), present: got.key_operations, pass: key_pass },
        rewrite_bound: RewriteBound { distance, beta, pass: rewrite_pass },
        overall: anchor_pass && key_pass && rewrite_pass,
    }
}
