//! Feedback-driven repair of raw PoCs under semantic constraints.

mod adapt;
mod anchors;
mod classify;
mod kb;
mod strategy;

pub use adapt::{
    adapt, repair_messages, repair_step, AdaptConfig, AdaptError, AdaptOutcome, AdaptationStep, Expectation, RepairCandidate, RepairError,
    RepairRequest, TestCase, REPAIR_MARKER,
};
pub use anchors::{capture_anchors, check_constraints, rewrite_distance, AnchorMatch, AnchorProfile, ConstraintReport, KeyCoverage, RewriteBound};
pub use classify::{classify_execution, error_matches, normalize_text, ExecutionClass, ExecutionClassValue};
pub use kb::{diagnose, Diagnosis, DiagnosisCategory, KbError, KbRule, KnowledgeBase};
pub use strategy::{render_strategy_table, strategy_report, CaseResult, StrategyMode, StrategyReport};
