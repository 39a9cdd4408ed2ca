//! On-disk corpus.
//!
//! ```text
//! <root>/
//!   index.json              sorted list of {id, dbms, path, stage}
//!   <dbms>/<slug>.json      one CorpusRecord per file
//!   quarantine/<hash>.json  malformed payloads with their parse error
//!   exemplars/library.json  extraction exemplar library
//!   .lock                   held by the single writer
//! ```
//!
//! Records are pretty-printed JSON with a trailing newline. Field order is
//! fixed by the types, so equal records serialize to equal bytes.

use std::collections::BTreeMap;
use std::fs::{self, File, TryLockError};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adapters::AdapterRegistry;
use super::types::{BugReport, CorpusRecord, PipelineStage};
use super::RepositoryError;

pub const INDEX_FILE: &str = "index.json";
pub const QUARANTINE_DIR: &str = "quarantine";
pub const EXEMPLAR_DIR: &str = "exemplars";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    dbms: String,
    path: String,
    stage: PipelineStage,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    records: Vec<IndexEntry>,
}

pub(crate) fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// Directory name for a DBMS.
pub fn dbms_dir(dbms: &str) -> String {
    let s = sanitize(&dbms.to_ascii_lowercase());
    if s.is_empty() || s.starts_with('.') || s == QUARANTINE_DIR || s == EXEMPLAR_DIR {
        format!("dbms-{s}")
    } else {
        s
    }
}

/// File stem for a record id. The DBMS prefix is dropped since the record
/// already lives under its DBMS directory; ids that do not survive
/// sanitization unchanged get a short hash suffix so stems stay unique.
pub fn record_slug(id: &str, dbms: &str) -> String {
    let local = id.strip_prefix(&format!("{}#", dbms.to_ascii_lowercase())).unwrap_or(id);
    let clean = sanitize(local);
    if clean == local && !clean.is_empty() && !clean.starts_with('.') {
        clean
    } else {
        format!("{clean}-{}", &sha_hex(id.as_bytes())[..8])
    }
}

pub(crate) fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("corpus types always serialize");
    s.push('\n');
    s
}

/// Writes `bytes` to `path` via a temp file and rename, skipping the write
/// entirely when the file already holds those bytes.
pub(crate) fn write_if_changed(path: &Path, bytes: &[u8]) -> io::Result<bool> {
    if let Ok(existing) = fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(true)
}

/// Read handle on a corpus directory. Any number may coexist; writes go
/// through [`Corpus::writer`].
#[derive(Debug, Clone)]
pub struct Corpus {
    root: PathBuf,
}

impl Corpus {
    /// Opens (creating if needed) the corpus rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Corpus, RepositoryError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Corpus { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn exemplar_path(&self) -> PathBuf {
        self.root.join(EXEMPLAR_DIR).join("library.json")
    }

    fn relative_path(report: &BugReport) -> String {
        format!("{}/{}.json", dbms_dir(&report.dbms), record_slug(&report.id, &report.dbms))
    }

    fn read_index(&self) -> Result<Index, RepositoryError> {
        let path = self.root.join(INDEX_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| RepositoryError::Corrupt { path: path.display().to_string(), reason: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Index::default()),
            Err(e) => Err(e.into()),
        }
    }

    fn read_record(&self, rel: &str) -> Result<CorpusRecord, RepositoryError> {
        let path = self.root.join(rel);
        let bytes = fs::read(&path)?;
        serde_json::from_slice(&bytes).map_err(|e| RepositoryError::Corrupt { path: path.display().to_string(), reason: e.to_string() })
    }

    /// All records, sorted by id.
    pub fn load_all(&self) -> Result<Vec<CorpusRecord>, RepositoryError> {
        self.read_index()?.records.iter().map(|e| self.read_record(&e.path)).collect()
    }

    pub fn get(&self, id: &str) -> Result<Option<CorpusRecord>, RepositoryError> {
        let index = self.read_index()?;
        match index.records.iter().find(|e| e.id == id) {
            Some(e) => self.read_record(&e.path).map(Some),
            None => Ok(None),
        }
    }

    pub fn ids(&self) -> Result<Vec<String>, RepositoryError> {
        Ok(self.read_index()?.records.into_iter().map(|e| e.id).collect())
    }

    /// Takes the single-writer lock. Fails immediately if another writer
    /// holds it.
    pub fn writer(&self) -> Result<CorpusWriter<'_>, RepositoryError> {
        let lock = File::options().create(true).truncate(false).write(true).open(self.root.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(RepositoryError::Locked(self.root.display().to_string())),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }
        let index = self.read_index()?;
        let entries = index.records.into_iter().map(|e| (e.id.clone(), e)).collect();
        Ok(CorpusWriter { corpus: self, _lock: lock, entries, dirty: false })
    }
}

/// Exclusive write access. The index is flushed on [`CorpusWriter::commit`]
/// or, best effort, on drop.
pub struct CorpusWriter<'a> {
    corpus: &'a Corpus,
    _lock: File,
    entries: BTreeMap<String, IndexEntry>,
    dirty: bool,
}

impl CorpusWriter<'_> {
    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    pub fn get(&self, id: &str) -> Result<Option<CorpusRecord>, RepositoryError> {
        match self.entries.get(id) {
            Some(e) => self.corpus.read_record(&e.path).map(Some),
            None => Ok(None),
        }
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    /// Persists one record. Returns whether anything on disk changed.
    pub fn put(&mut self, record: &CorpusRecord) -> Result<bool, RepositoryError> {
        let rel = Corpus::relative_path(&record.report);
        let changed = write_if_changed(&self.corpus.root.join(&rel), to_pretty_json(record).as_bytes())?;
        let entry = IndexEntry {
            id: record.report.id.clone(),
            dbms: record.report.dbms.clone(),
            path: rel,
            stage: record.pipeline_stage,
        };
        if let Some(old) = self.entries.get(&entry.id) {
            if old.path != entry.path {
                // The DBMS changed under the same id; drop the stale file.
                let _ = fs::remove_file(self.corpus.root.join(&old.path));
            }
        }
        if self.entries.get(&entry.id) != Some(&entry) {
            self.entries.insert(entry.id.clone(), entry);
            self.dirty = true;
        }
        Ok(changed)
    }

    /// Stores a payload that failed to parse, next to its error.
    pub fn quarantine(&mut self, adapter_id: &str, raw: &[u8], error: &str) -> Result<PathBuf, RepositoryError> {
        #[derive(Serialize)]
        struct Quarantined<'a> {
            adapter: &'a str,
            error: &'a str,
            payload: String,
        }
        let digest = sha_hex(raw);
        let path = self.corpus.root.join(QUARANTINE_DIR).join(format!("{}.json", &digest[..16]));
        let q = Quarantined { adapter: adapter_id, error, payload: String::from_utf8_lossy(raw).into_owned() };
        write_if_changed(&path, to_pretty_json(&q).as_bytes())?;
        Ok(path)
    }

    fn flush(&mut self) -> Result<(), RepositoryError> {
        let path = self.corpus.root.join(INDEX_FILE);
        if !self.dirty && path.exists() {
            return Ok(());
        }
        let index = Index { records: self.entries.values().cloned().collect() };
        write_if_changed(&path, to_pretty_json(&index).as_bytes())?;
        self.dirty = false;
        Ok(())
    }

    pub fn commit(mut self) -> Result<(), RepositoryError> {
        self.flush()
    }
}

impl Drop for CorpusWriter<'_> {
    fn drop(&mut self) {
        if self.dirty {
            if let Err(e) = self.flush() {
                log::error!("failed to flush corpus index: {e}");
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestChange {
    Inserted,
    Unchanged,
    /// Content differed from the stored record; derived artifacts were reset.
    Recollected,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub report: BugReport,
    pub change: IngestChange,
}

/// Parses `raw` with the named adapter and stores the result. Malformed
/// payloads are quarantined before the error is returned.
pub fn ingest_report(
    writer: &mut CorpusWriter<'_>,
    registry: &AdapterRegistry,
    adapter_id: &str,
    raw: &[u8],
    now: DateTime<Utc>,
) -> Result<IngestOutcome, RepositoryError> {
    let adapter = registry.get(adapter_id)?;
    let report = match adapter.parse(raw, now) {
        Ok(r) => r,
        Err(e) => {
            let path = writer.quarantine(adapter_id, raw, &e)?;
            log::warn!("quarantined payload at {}: {e}", path.display());
            return Err(RepositoryError::MalformedPayload(e));
        }
    };
    store_report(writer, report)
}

/// Stores an already-normalized report with the same change semantics as
/// [`ingest_report`].
pub fn store_report(writer: &mut CorpusWriter<'_>, mut report: BugReport) -> Result<IngestOutcome, RepositoryError> {
    match writer.get(&report.id)? {
        Some(existing) if existing.report.same_content(&report) => {
            Ok(IngestOutcome { report: existing.report, change: IngestChange::Unchanged })
        }
        Some(existing) => {
            report.last_collected_at = report.last_collected_at.max(existing.report.last_collected_at);
            writer.put(&CorpusRecord::new(report.clone()))?;
            Ok(IngestOutcome { report, change: IngestChange::Recollected })
        }
        None => {
            writer.put(&CorpusRecord::new(report.clone()))?;
            Ok(IngestOutcome { report, change: IngestChange::Inserted })
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DbmsStats {
    pub reports: usize,
    pub raw_pocs: usize,
    pub cves: usize,
    pub test_cases: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub reports: usize,
    pub raw_pocs: usize,
    pub cves: usize,
    pub test_cases: usize,
    pub per_dbms: BTreeMap<String, DbmsStats>,
    pub per_stage: BTreeMap<String, usize>,
}

pub fn corpus_stats(records: &[CorpusRecord]) -> CorpusStats {
    let mut s = CorpusStats::default();
    for r in records {
        let row = s.per_dbms.entry(r.report.dbms.clone()).or_default();
        let (poc, tc, cves) = (r.raw_poc.is_some() as usize, r.test_case.is_some() as usize, r.report.cve_ids.len());
        row.reports += 1;
        row.raw_pocs += poc;
        row.test_cases += tc;
        row.cves += cves;
        s.reports += 1;
        s.raw_pocs += poc;
        s.test_cases += tc;
        s.cves += cves;
        *s.per_stage.entry(r.pipeline_stage.as_str().to_string()).or_default() += 1;
    }
    s
}

impl CorpusStats {
    /// Plain-text table with one column per DBMS and a total column.
    pub fn render_table(&self) -> String {
        let mut header = vec!["".to_string()];
        header.extend(self.per_dbms.keys().cloned());
        header.push("Total".into());
        let row = |name: &str, f: &dyn Fn(&DbmsStats) -> usize, total: usize| {
            let mut r = vec![name.to_string()];
            r.extend(self.per_dbms.values().map(|d| f(d).to_string()));
            r.push(total.to_string());
            r
        };
        let rows = vec![
            header,
            row("Collected Reports", &|d| d.reports, self.reports),
            row("Extracted Raw PoCs", &|d| d.raw_pocs, self.raw_pocs),
            row("CVEs", &|d| d.cves, self.cves),
            row("Test Cases", &|d| d.test_cases, self.test_cases),
        ];
        let widths: Vec<usize> = (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_stable_and_distinct() {
        assert_eq!(record_slug("mysql#102205", "mysql"), "102205");
        assert_eq!(record_slug("mysql#a/b", "mysql"), record_slug("mysql#a/b", "mysql"));
        assert_ne!(record_slug("mysql#a/b", "mysql"), record_slug("mysql#a_b", "mysql"));
        assert_eq!(dbms_dir("quarantine"), "dbms-quarantine");
    }

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let c = Corpus::open(dir.path()).unwrap();
        let w = c.writer().unwrap();
        assert!(matches!(c.writer(), Err(RepositoryError::Locked(_))));
        drop(w);
        assert!(c.writer().is_ok());
    }

    #[test]
    fn empty_stats_render_zero_table() {
        let s = corpus_stats(&[]);
        assert_eq!(s.reports, 0);
        let t = s.render_table();
        let line = t.lines().find(|l| l.starts_with("Collected Reports")).unwrap();
        assert_eq!(line.split_whitespace().last(), Some("0"));
    }
}
