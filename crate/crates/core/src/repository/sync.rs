//! Incremental re-collection against an upstream source.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::adapters::{AdapterRegistry, SourceAdapter};
use super::corpus::{ingest_report, CorpusWriter, IngestChange};
use super::types::{BugReport, CorpusRecord, ReportStatus};
use super::RepositoryError;

/// Age-based probe intervals. Older reports change less often, so they are
/// probed less often.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefreshPolicy {
    pub young_days: i64,
    pub young_interval_hours: i64,
    pub mature_days: i64,
    pub mature_interval_hours: i64,
    pub old_interval_hours: i64,
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        RefreshPolicy {
            young_days: 30,
            young_interval_hours: 6,
            mature_days: 365,
            mature_interval_hours: 7 * 24,
            old_interval_hours: 90 * 24,
        }
    }
}

impl RefreshPolicy {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.young_days > 0
            && self.mature_days >= self.young_days
            && self.young_interval_hours > 0
            && self.mature_interval_hours >= self.young_interval_hours
            && self.old_interval_hours >= self.mature_interval_hours;
        if ok {
            Ok(())
        } else {
            Err("refresh policy must have positive, non-decreasing thresholds and intervals".into())
        }
    }

    pub fn interval(&self, age: Duration) -> Duration {
        if age < Duration::days(self.young_days) {
            Duration::hours(self.young_interval_hours)
        } else if age <= Duration::days(self.mature_days) {
            Duration::hours(self.mature_interval_hours)
        } else {
            Duration::hours(self.old_interval_hours)
        }
    }
}

mod duration_secs {
    use chrono::Duration;
    use serde::Serializer;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, Duration>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (k, v.num_seconds())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SyncPlan {
    pub probe_ids: Vec<String>,
    #[serde(with = "duration_secs")]
    pub refresh_interval: BTreeMap<String, Duration>,
}

/// Records whose last collection is at least one refresh interval old.
pub fn plan_sync(now: DateTime<Utc>, records: &[CorpusRecord], policy: &RefreshPolicy) -> SyncPlan {
    let mut plan = SyncPlan::default();
    for r in records {
        let interval = policy.interval(now - r.report.created_at);
        if now - r.report.last_collected_at >= interval {
            plan.probe_ids.push(r.report.id.clone());
            plan.refresh_interval.insert(r.report.id.clone(), interval);
        }
    }
    plan.probe_ids.sort();
    plan
}

/// The cheap upstream view used to decide whether a full fetch is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpstreamSnapshot {
    pub status: ReportStatus,
    pub last_modified: DateTime<Utc>,
}

pub fn detect_change(snapshot: &UpstreamSnapshot, local: &BugReport) -> bool {
    snapshot.status != local.status || snapshot.last_modified != local.last_modified
}

/// A source that can list, snapshot and fetch reports.
pub trait Upstream {
    fn adapter_id(&self) -> &str;
    /// Ids modified at or after `since` (all ids when `None`).
    fn discover(&self, since: Option<DateTime<Utc>>) -> Result<Vec<String>, RepositoryError>;
    /// `None` means the report no longer exists upstream.
    fn snapshot(&self, id: &str) -> Result<Option<UpstreamSnapshot>, RepositoryError>;
    fn fetch(&self, id: &str) -> Result<Option<Vec<u8>>, RepositoryError>;
    /// Payloads seen while listing that could not be parsed, with the error.
    fn rejected(&self) -> Vec<(Vec<u8>, String)> {
        vec![]
    }
}

/// Upstream backed by a directory of payload files.
pub struct FixtureUpstream {
    adapter_id: String,
    entries: BTreeMap<String, (UpstreamSnapshot, Vec<u8>)>,
    rejected: Vec<(Vec<u8>, String)>,
}

impl FixtureUpstream {
    /// Loads every regular file in `dir` and indexes it by parsed id. Files
    /// that fail to parse are kept aside for the sync to quarantine.
    pub fn load(dir: &Path, adapter: &dyn SourceAdapter) -> Result<FixtureUpstream, RepositoryError> {
        let mut paths: Vec<_> = fs::read_dir(dir)?.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_file()).collect();
        paths.sort();
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        let mut entries = BTreeMap::new();
        let mut rejected = Vec::new();
        for p in paths {
            let raw = fs::read(&p)?;
            match adapter.parse(&raw, epoch) {
                Ok(r) => {
                    entries.insert(r.id.clone(), (UpstreamSnapshot { status: r.status, last_modified: r.last_modified }, raw));
                }
                Err(e) => {
                    log::warn!("{}: {e}", p.display());
                    rejected.push((raw, format!("{}: {e}", p.file_name().unwrap_or_default().to_string_lossy())));
                }
            }
        }
        Ok(FixtureUpstream { adapter_id: adapter.id().to_string(), entries, rejected })
    }

    pub fn from_payloads(adapter: &dyn SourceAdapter, payloads: Vec<Vec<u8>>) -> Result<FixtureUpstream, RepositoryError> {
        let mut entries = BTreeMap::new();
        for raw in payloads {
            let r = adapter.parse(&raw, DateTime::<Utc>::UNIX_EPOCH).map_err(RepositoryError::MalformedPayload)?;
            entries.insert(r.id.clone(), (UpstreamSnapshot { status: r.status, last_modified: r.last_modified }, raw));
        }
        Ok(FixtureUpstream { adapter_id: adapter.id().to_string(), entries, rejected: vec![] })
    }
}

impl Upstream for FixtureUpstream {
    fn adapter_id(&self) -> &str {
        &self.adapter_id
    }

    fn discover(&self, since: Option<DateTime<Utc>>) -> Result<Vec<String>, RepositoryError> {
        Ok(self
            .entries
            .iter()
            .filter(|(_, (s, _))| since.is_none_or(|t| s.last_modified >= t))
            .map(|(id, _)| id.clone())
            .collect())
    }

    fn snapshot(&self, id: &str) -> Result<Option<UpstreamSnapshot>, RepositoryError> {
        Ok(self.entries.get(id).map(|(s, _)| s.clone()))
    }

    fn fetch(&self, id: &str) -> Result<Option<Vec<u8>>, RepositoryError> {
        Ok(self.entries.get(id).map(|(_, raw)| raw.clone()))
    }

    fn rejected(&self) -> Vec<(Vec<u8>, String)> {
        self.rejected.clone()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SyncReport {
    pub inserted: Vec<String>,
    pub recollected: Vec<String>,
    pub probed_unchanged: Vec<String>,
    pub withdrawn: Vec<String>,
    pub quarantined: usize,
}

/// One synchronization pass: pull newly discovered reports, then probe the
/// stale ones and re-collect those that changed. Reports that vanished
/// upstream are kept with status `other`.
pub fn run_sync(
    writer: &mut CorpusWriter<'_>,
    upstream: &dyn Upstream,
    registry: &AdapterRegistry,
    policy: &RefreshPolicy,
    now: DateTime<Utc>,
    since: Option<DateTime<Utc>>,
) -> Result<SyncReport, RepositoryError> {
    let mut report = SyncReport::default();
    let adapter = upstream.adapter_id().to_string();

    for (raw, error) in upstream.rejected() {
        writer.quarantine(&adapter, &raw, &error)?;
        report.quarantined += 1;
    }
    for id in upstream.discover(since)? {
        if writer.contains(&id) {
            continue;
        }
        let Some(raw) = upstream.fetch(&id)? else { continue };
        match ingest_report(writer, registry, &adapter, &raw, now) {
            Ok(o) if o.change == IngestChange::Inserted => report.inserted.push(o.report.id),
            Ok(_) => {}
            Err(RepositoryError::MalformedPayload(_)) => report.quarantined += 1,
            Err(e) => return Err(e),
        }
    }

    let records: Vec<CorpusRecord> =
        writer.ids().iter().filter_map(|id| writer.get(id).transpose()).collect::<Result<_, _>>()?;
    let plan = plan_sync(now, &records, policy);
    for id in plan.probe_ids {
        let Some(mut record) = writer.get(&id)? else { continue };
        match upstream.snapshot(&id)? {
            None => {
                record.report.status = ReportStatus::Other;
                touch(&mut record, now);
                writer.put(&record)?;
                report.withdrawn.push(id);
            }
            Some(snap) if detect_change(&snap, &record.report) => {
                let Some(raw) = upstream.fetch(&id)? else { continue };
                match ingest_report(writer, registry, &adapter, &raw, now) {
                    Ok(_) => report.recollected.push(id),
                    Err(RepositoryError::MalformedPayload(_)) => report.quarantined += 1,
                    Err(e) => return Err(e),
                }
            }
            Some(_) => {
                touch(&mut record, now);
                writer.put(&record)?;
                report.probed_unchanged.push(id);
            }
        }
    }
    Ok(report)
}

fn touch(record: &mut CorpusRecord, now: DateTime<Utc>) {
    record.report.last_collected_at = record.report.last_collected_at.max(now);
}
