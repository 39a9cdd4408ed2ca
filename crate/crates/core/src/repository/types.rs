use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::adapter::TestCase;
use crate::extractor::RawPoc;
use crate::fragmenter::Fragment;

/// Where a report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReportSource {
    VendorTracker,
    MailingList,
    #[default]
    Fixture,
}

/// Triage status. Anything a tracker reports that is not one of the first
/// four maps to `Other`, including withdrawn and deleted reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStatus {
    Reported,
    Confirmed,
    Fixed,
    Closed,
    Other,
}

impl ReportStatus {
    /// Lenient mapping from tracker vocabulary.
    pub fn parse_lenient(s: &str) -> ReportStatus {
        match s.trim().to_ascii_lowercase().as_str() {
            "reported" | "open" | "new" | "open/new" | "submitted" | "unconfirmed" => ReportStatus::Reported,
            "confirmed" | "verified" | "acknowledged" | "in progress" | "in review" | "analyzing" => {
                ReportStatus::Confirmed
            }
            "fixed" | "resolved" | "patch queued" | "patch pending" => ReportStatus::Fixed,
            "closed" | "won't fix" | "wontfix" | "not a bug" | "duplicate" => ReportStatus::Closed,
            _ => ReportStatus::Other,
        }
    }

    /// Reports eligible for extraction by default.
    pub fn is_acknowledged(self) -> bool {
        matches!(self, ReportStatus::Confirmed | ReportStatus::Fixed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReportStatus::Reported => "reported",
            ReportStatus::Confirmed => "confirmed",
            ReportStatus::Fixed => "fixed",
            ReportStatus::Closed => "closed",
            ReportStatus::Other => "other",
        }
    }
}

impl fmt::Display for ReportStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A normalized bug report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    /// Source-qualified id, e.g. `mysql#102205`.
    pub id: String,
    pub source: ReportSource,
    pub title: String,
    pub status: ReportStatus,
    pub dbms: String,
    #[serde(default)]
    pub versions: Vec<String>,
    pub created_at: DateTime<Utc>,
    pub last_modified: DateTime<Utc>,
    /// Verbatim report lines.
    #[serde(default)]
    pub body: Vec<String>,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub cve_ids: Vec<String>,
    pub last_collected_at: DateTime<Utc>,
}

impl BugReport {
    /// Equality on everything except the collection timestamp.
    pub fn same_content(&self, other: &BugReport) -> bool {
        let mut a = self.clone();
        a.last_collected_at = other.last_collected_at;
        &a == other
    }

    /// Title plus labels and status, used as the report summary in prompts.
    pub fn summary(&self) -> String {
        let mut s = format!("[{}] {} (status: {}, dbms: {}", self.id, self.title, self.status, self.dbms);
        if !self.versions.is_empty() {
            s.push_str(&format!(", versions: {}", self.versions.join(", ")));
        }
        s.push(')');
        if !self.labels.is_empty() {
            s.push_str(&format!(" labels: {}", self.labels.join(", ")));
        }
        s
    }
}

/// Pipeline position of a corpus record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Collected,
    Fragmented,
    Extracted,
    NonExtractable,
    Adapted,
    AdaptationFailed,
}

impl PipelineStage {
    /// Position in the stage lattice; terminal failures sit beside the
    /// success they failed to reach.
    pub fn rank(self) -> u8 {
        match self {
            PipelineStage::Collected => 0,
            PipelineStage::Fragmented => 1,
            PipelineStage::Extracted | PipelineStage::NonExtractable => 2,
            PipelineStage::Adapted | PipelineStage::AdaptationFailed => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStage::Collected => "collected",
            PipelineStage::Fragmented => "fragmented",
            PipelineStage::Extracted => "extracted",
            PipelineStage::NonExtractable => "non_extractable",
            PipelineStage::Adapted => "adapted",
            PipelineStage::AdaptationFailed => "adaptation_failed",
        }
    }
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineStage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "collected" => PipelineStage::Collected,
            "fragmented" => PipelineStage::Fragmented,
            "extracted" => PipelineStage::Extracted,
            "non_extractable" => PipelineStage::NonExtractable,
            "adapted" => PipelineStage::Adapted,
            "adaptation_failed" => PipelineStage::AdaptationFailed,
            other => return Err(format!("unknown stage `{other}`")),
        })
    }
}

/// Why a record stopped short of the next stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageNote {
    pub stage: PipelineStage,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

/// A report plus everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub report: BugReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragments: Option<Vec<Fragment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_poc: Option<RawPoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_case: Option<TestCase>,
    pub pipeline_stage: PipelineStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<StageNote>,
}

impl CorpusRecord {
    pub fn new(report: BugReport) -> Self {
        CorpusRecord { report, fragments: None, raw_poc: None, test_case: None, pipeline_stage: PipelineStage::Collected, note: None }
    }

    /// Checks that the populated derived fields are exactly those implied by
    /// the stage.
    pub fn lattice_ok(&self) -> bool {
        use PipelineStage::*;
        let (f, r, t) = (self.fragments.is_some(), self.raw_poc.is_some(), self.test_case.is_some());
        match self.pipeline_stage {
            Collected => !f && !r && !t,
            Fragmented | NonExtractable => f && !r && !t,
            Extracted | AdaptationFailed => f && r && !t,
            Adapted => f && r && t,
        }
    }

    pub fn set_fragments(&mut self, fragments: Vec<Fragment>) {
        self.fragments = Some(fragments);
        self.raw_poc = None;
        self.test_case = None;
        self.note = None;
        self.pipeline_stage = PipelineStage::Fragmented;
    }

    pub fn mark_non_extractable(&mut self, reason: impl Into<String>, details: Vec<String>) {
        if self.fragments.is_none() {
            self.fragments = Some(Vec::new());
        }
        self.raw_poc = None;
        self.test_case = None;
        self.pipeline_stage = PipelineStage::NonExtractable;
        self.note = Some(StageNote { stage: PipelineStage::NonExtractable, reason: reason.into(), details });
    }

    pub fn set_raw_poc(&mut self, poc: RawPoc) {
        self.raw_poc = Some(poc);
        self.test_case = None;
        self.note = None;
        self.pipeline_stage = PipelineStage::Extracted;
    }

    pub fn set_test_case(&mut self, tc: TestCase) {
        self.test_case = Some(tc);
        self.note = None;
        self.pipeline_stage = PipelineStage::Adapted;
    }

    pub fn mark_adaptation_failed(&mut self, reason: impl Into<String>, details: Vec<String>) {
        self.test_case = None;
        self.pipeline_stage = PipelineStage::AdaptationFailed;
        self.note = Some(StageNote { stage: PipelineStage::AdaptationFailed, reason: reason.into(), details });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_status_maps_to_other() {
        assert_eq!(ReportStatus::parse_lenient("Verified"), ReportStatus::Confirmed);
        assert_eq!(ReportStatus::parse_lenient("Closed"), ReportStatus::Closed);
        assert_eq!(ReportStatus::parse_lenient("withdrawn"), ReportStatus::Other);
        assert_eq!(ReportStatus::parse_lenient(""), ReportStatus::Other);
    }

    #[test]
    fn stage_ranks_never_regress_along_the_happy_path() {
        use PipelineStage::*;
        let path = [Collected, Fragmented, Extracted, Adapted];
        assert!(path.windows(2).all(|w| w[0].rank() < w[1].rank()));
        assert_eq!(NonExtractable.rank(), Extracted.rank());
        for s in [Collected, Fragmented, Extracted, NonExtractable, Adapted, AdaptationFailed] {
            assert_eq!(s.as_str().parse::<PipelineStage>().unwrap(), s);
        }
    }
}
