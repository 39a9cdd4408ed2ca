//! Fuzzing seed export: one `.sql` file per test case plus `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CampaignError;
use crate::adapter::Expectation;
use crate::harness::RiskLevel;
use crate::repository::corpus::{sha_hex, to_pretty_json, write_if_changed};
use crate::repository::CorpusRecord;
use crate::sql;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Target name that exports every DBMS's cases into one corpus.
pub const ALL_DBMS: &str = "all";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedFilter {
    /// Keep only `bug` or only `clean` expectations.
    pub expectation: Option<String>,
    /// Keep only these report ids.
    pub report_ids: Option<BTreeSet<String>>,
    /// Drop cases whose risk tier is above this level.
    pub max_risk: Option<RiskLevel>,
}

impl SeedFilter {
    pub fn all() -> Self {
        SeedFilter::default()
    }

    fn keeps(&self, r: &CorpusRecord) -> bool {
        let Some(tc) = &r.test_case else { return false };
        let exp_ok = match self.expectation.as_deref() {
            None => true,
            Some("bug") => matches!(tc.expectation, Expectation::ExpectBug(_)),
            Some("clean") => tc.expectation == Expectation::ExpectClean,
            Some(_) => false,
        };
        exp_ok && self.report_ids.as_ref().is_none_or(|ids| ids.contains(&r.report.id)) && self.max_risk.is_none_or(|m| tc.risk_tier.value <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub origin_report_id: String,
    pub expectation: Expectation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCorpus {
    pub target_dbms: String,
    pub files: Vec<(String, String)>,
    pub manifest: BTreeMap<String, ManifestEntry>,
}

fn slug(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// `<16 hex of the script hash>-<origin id slug>.sql`
pub fn seed_filename(origin_id: &str, sql_text: &str) -> String {
    format!("{}-{}.sql", &sha_hex(sql_text.as_bytes())[..16], slug(origin_id))
}

/// Selects adapted cases for `target_dbms` and renders them.
pub fn select_seeds(records: &[CorpusRecord], target_dbms: &str, filter: &SeedFilter) -> Result<SeedCorpus, CampaignError> {
    let mut files = Vec::new();
    let mut manifest = BTreeMap::new();
    let mut chosen: Vec<&CorpusRecord> =
        records.iter().filter(|r| (target_dbms == ALL_DBMS || r.report.dbms.eq_ignore_ascii_case(target_dbms)) && filter.keeps(r)).collect();
    chosen.sort_by(|a, b| a.report.id.cmp(&b.report.id));
    for r in chosen {
        let tc = r.test_case.as_ref().expect("filter keeps only adapted records");
        let text = tc.script();
        if sql::split_statements(&text).is_empty() {
            log::warn!("{}: test case renders to no statements, skipped", r.report.id);
            continue;
        }
        let name = seed_filename(&r.report.id, &text);
        manifest.insert(name.clone(), ManifestEntry { origin_report_id: r.report.id.clone(), expectation: tc.expectation.clone() });
        files.push((name, text));
    }
    if files.is_empty() {
        return Err(CampaignError::EmptySelection(target_dbms.to_string()));
    }
    files.sort();
    Ok(SeedCorpus { target_dbms: target_dbms.to_string(), files, manifest })
}

/// Writes the seed corpus. Stale `.sql` files from earlier exports are
/// removed so the directory always matches the manifest.
pub fn export_seeds(records: &[CorpusRecord], target_dbms: &str, out_dir: &Path, filter: &SeedFilter) -> Result<SeedCorpus, CampaignError> {
    let seeds = select_seeds(records, target_dbms, filter)?;
    fs::create_dir_all(out_dir)?;
    for entry in fs::read_dir(out_dir)? {
        let p = entry?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if name.ends_with(".sql") && !seeds.manifest.contains_key(&name) {
            fs::remove_file(&p)?;
        }
    }
    for (name, text) in &seeds.files {
        write_if_changed(&out_dir.join(name), text.as_bytes())?;
    }
    write_if_changed(&out_dir.join(MANIFEST_FILE), to_pretty_json(&seeds.manifest).as_bytes())?;
    Ok(seeds)
}
