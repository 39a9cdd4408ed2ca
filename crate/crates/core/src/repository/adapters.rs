//! Source adapters: turn source-specific payload bytes into [`BugReport`]s.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::Deserialize;

use super::types::{BugReport, ReportSource, ReportStatus};
use super::RepositoryError;

/// Plug-in interface for report sources.
pub trait SourceAdapter: Send + Sync {
    fn id(&self) -> &str;

    /// Parses one payload. `now` becomes the report's collection time.
    fn parse(&self, raw: &[u8], now: DateTime<Utc>) -> Result<BugReport, String>;
}

/// Splits a body into lines without any other whitespace normalization.
/// A trailing `\r` is dropped so CRLF payloads match LF ones.
pub fn split_body(body: &str) -> Vec<String> {
    if body.is_empty() {
        return Vec::new();
    }
    let body = body.strip_suffix('\n').unwrap_or(body);
    body.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l).to_string()).collect()
}

fn qualify_id(id: &str, dbms: &str) -> String {
    if id.contains('#') || id.contains('-') && id.chars().next().is_some_and(char::is_alphabetic) {
        id.to_string()
    } else {
        format!("{}#{}", dbms.to_ascii_lowercase(), id.trim_start_matches('#'))
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = DateTime::parse_from_rfc2822(s) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
        return Some(t.and_utc());
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0)).map(|t| t.and_utc())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BodyField {
    Text(String),
    Lines(Vec<String>),
}

#[derive(Deserialize)]
struct FixturePayload {
    id: String,
    #[serde(default)]
    source: Option<ReportSource>,
    title: String,
    #[serde(default)]
    status: String,
    dbms: String,
    #[serde(default)]
    versions: Vec<String>,
    created_at: String,
    #[serde(default)]
    last_modified: Option<String>,
    #[serde(default)]
    body: Option<BodyField>,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    cve_ids: Vec<String>,
}

/// JSON payloads in the shape of the shipped fixtures.
///
/// ```json
/// {"id": "102205", "dbms": "mysql", "title": "...", "status": "Verified",
///  "created_at": "2021-01-12T10:00:00Z", "body": "line 1\nline 2"}
/// ```
#[derive(Debug, Default, Clone, Copy)]
pub struct FixtureAdapter;

impl SourceAdapter for FixtureAdapter {
    fn id(&self) -> &str {
        "fixture"
    }

    fn parse(&self, raw: &[u8], now: DateTime<Utc>) -> Result<BugReport, String> {
        let p: FixturePayload = serde_json::from_slice(raw).map_err(|e| e.to_string())?;
        let created_at = parse_timestamp(&p.created_at).ok_or_else(|| format!("bad created_at `{}`", p.created_at))?;
        let last_modified = match &p.last_modified {
            Some(s) => parse_timestamp(s).ok_or_else(|| format!("bad last_modified `{s}`"))?,
            None => created_at,
        };
        let body = match p.body {
            None => Vec::new(),
            Some(BodyField::Text(t)) => split_body(&t),
            Some(BodyField::Lines(l)) => l,
        };
        let dbms = p.dbms.to_ascii_lowercase();
        Ok(BugReport {
            id: qualify_id(&p.id, &dbms),
            source: p.source.unwrap_or(ReportSource::Fixture),
            title: p.title,
            status: ReportStatus::parse_lenient(&p.status),
            dbms,
            versions: p.versions,
            created_at,
            last_modified,
            body,
            labels: p.labels,
            cve_ids: p.cve_ids,
            last_collected_at: now.max(created_at),
        })
    }
}

/// RFC 822-style messages from a bug mailing list. Tracker metadata rides
/// in `X-Bug-*` headers; the message body is the report body.
#[derive(Debug, Default, Clone, Copy)]
pub struct MailingListAdapter;

impl SourceAdapter for MailingListAdapter {
    fn id(&self) -> &str {
        "mailing-list"
    }

    fn parse(&self, raw: &[u8], now: DateTime<Utc>) -> Result<BugReport, String> {
        let text = std::str::from_utf8(raw).map_err(|e| e.to_string())?;
        let (head, body) = match text.find("\n\n") {
            Some(pos) => (&text[..pos], &text[pos + 2..]),
            None => (text, ""),
        };
        let mut headers: BTreeMap<String, String> = BTreeMap::new();
        let mut last: Option<String> = None;
        for line in head.lines() {
            if line.starts_with([' ', '\t']) {
                if let Some(k) = &last {
                    let v = headers.get_mut(k).unwrap();
                    v.push(' ');
                    v.push_str(line.trim());
                }
                continue;
            }
            let (k, v) = line.split_once(':').ok_or_else(|| format!("malformed header line `{line}`"))?;
            let key = k.trim().to_ascii_lowercase();
            headers.insert(key.clone(), v.trim().to_string());
            last = Some(key);
        }
        let get = |k: &str| headers.get(k).cloned();
        let dbms = get("x-dbms").ok_or("missing X-DBMS header")?.to_ascii_lowercase();
        let bug_id = get("x-bug-id").ok_or("missing X-Bug-Id header")?;
        let date = get("date").ok_or("missing Date header")?;
        let created_at = parse_timestamp(&date).ok_or_else(|| format!("bad Date `{date}`"))?;
        let last_modified = get("x-bug-last-modified").and_then(|s| parse_timestamp(&s)).unwrap_or(created_at);
        Ok(BugReport {
            id: qualify_id(&bug_id, &dbms),
            source: ReportSource::MailingList,
            title: get("subject").unwrap_or_default(),
            status: get("x-bug-status").map_or(ReportStatus::Reported, |s| ReportStatus::parse_lenient(&s)),
            dbms,
            versions: get("x-version").map(|v| v.split(',').map(|s| s.trim().to_string()).collect()).unwrap_or_default(),
            created_at,
            last_modified,
            body: split_body(body),
            labels: get("x-bug-labels").map(|v| v.split(',').map(|s| s.trim().to_string()).collect()).unwrap_or_default(),
            cve_ids: Vec::new(),
            last_collected_at: now.max(created_at),
        })
    }
}

/// Fetches payloads over HTTP and hands them to a wrapped adapter. Vendor
/// specific URL schemes and pagination are left to callers.
pub struct HttpFetchAdapter<A> {
    inner: A,
    id: String,
}

impl<A: SourceAdapter> HttpFetchAdapter<A> {
    pub fn new(inner: A) -> Self {
        let id = format!("http+{}", inner.id());
        HttpFetchAdapter { inner, id }
    }

    pub fn fetch(&self, url: &str) -> Result<Vec<u8>, RepositoryError> {
        let mut resp = ureq::get(url).call().map_err(|e| RepositoryError::Fetch(format!("{url}: {e}")))?;
        resp.body_mut().read_to_vec().map_err(|e| RepositoryError::Fetch(format!("{url}: {e}")))
    }

    pub fn fetch_report(&self, url: &str, now: DateTime<Utc>) -> Result<BugReport, RepositoryError> {
        let raw = self.fetch(url)?;
        self.parse(&raw, now).map_err(RepositoryError::MalformedPayload)
    }
}

impl<A: SourceAdapter> SourceAdapter for HttpFetchAdapter<A> {
    fn id(&self) -> &str {
        &self.id
    }

    fn parse(&self, raw: &[u8], now: DateTime<Utc>) -> Result<BugReport, String> {
        self.inner.parse(raw, now)
    }
}

/// Named adapters.
pub struct AdapterRegistry {
    adapters: BTreeMap<String, Box<dyn SourceAdapter>>,
}

impl Default for AdapterRegistry {
    fn default() -> Self {
        let mut r = AdapterRegistry { adapters: BTreeMap::new() };
        r.register(Box::new(FixtureAdapter));
        r.register(Box::new(MailingListAdapter));
        r
    }
}

impl AdapterRegistry {
    pub fn register(&mut self, adapter: Box<dyn SourceAdapter>) {
        self.adapters.insert(adapter.id().to_string(), adapter);
    }

    pub fn get(&self, id: &str) -> Result<&dyn SourceAdapter, RepositoryError> {
        self.adapters.get(id).map(|b| b.as_ref()).ok_or_else(|| RepositoryError::UnknownAdapter(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }
}
