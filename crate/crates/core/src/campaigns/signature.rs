use std::sync::OnceLock;

use regex::Regex;

use crate::harness::{ExecutionOutcome, OutcomeKind};

/// Frames kept in a crash signature.
pub const SIGNATURE_FRAMES: usize = 3;

fn frame_noise() -> &'static [Regex; 4] {
    static RE: OnceLock<[Regex; 4]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"^\s*#?\d+\s+").unwrap(),
            Regex::new(r"0x[0-9a-fA-F]+(\s+in\s+)?").unwrap(),
            Regex::new(r"\s*\(.*$").unwrap(),
            Regex::new(r"\s+(at|from)\s+\S+$|\+\d+$").unwrap(),
        ]
    })
}

/// Reduces a stack frame to its function name: frame numbers, addresses,
/// argument lists, offsets and source locations are dropped.
pub fn normalize_frame(frame: &str) -> String {
    let mut f = frame.trim().to_string();
    for re in frame_noise() {
        f = re.replace_all(&f, "").into_owned();
    }
    f.trim().to_string()
}

fn message_span(message: &str) -> String {
    static QUOTED: OnceLock<Regex> = OnceLock::new();
    let quoted = QUOTED.get_or_init(|| Regex::new(r#"'[^']*'|"[^"]*"|`[^`]*`"#).unwrap());
    let stripped = quoted.replace_all(message, " ");
    stripped
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !w.chars().all(|c| c.is_ascii_digit()))
        .take(4)
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deduplication key of an outcome.
pub fn signature(outcome: &ExecutionOutcome) -> String {
    match &outcome.kind {
        OutcomeKind::Crash { crash, .. } => {
            let frames: Vec<String> = crash.frames.iter().map(|f| normalize_frame(f)).filter(|f| !f.is_empty()).take(SIGNATURE_FRAMES).collect();
            if frames.is_empty() {
                format!("crash:{}", crash.signal.as_deref().unwrap_or("unknown"))
            } else {
                frames.join(" | ")
            }
        }
        OutcomeKind::Error { error, .. } => format!("E{}:{}", error.code, message_span(&error.message)),
        OutcomeKind::Timeout { .. } => "timeout".into(),
        OutcomeKind::ConnectionLost { .. } => "connection_lost".into(),
        OutcomeKind::Clean => "clean".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{CrashInfo, ErrorInfo, StatementResult, StatementStatus};

    fn crash(frames: &[&str]) -> ExecutionOutcome {
        let c = CrashInfo { signal: Some("SIGSEGV".into()), frames: frames.iter().map(|s| s.to_string()).collect() };
        ExecutionOutcome::from_results(vec![StatementResult { index: 0, status: StatementStatus::Crash(c) }], 1, 0, "b", "1")
    }

    #[test]
    fn frames_normalize() {
        assert_eq!(normalize_frame("#3  0x000055d1 in alloc_root (mem_root=0x7f, length=8) at my_alloc.c:200"), "alloc_root");
        assert_eq!(normalize_frame("Item_func_repeat::val_str(String*)+0x1a"), "Item_func_repeat::val_str");
        let a = crash(&["#0 0x1 in alloc_root (a=1)", "#1 0x2 in f (b)", "#2 0x3 in g ()", "#3 0x4 in h ()"]);
        let b = crash(&["#0 0x9 in alloc_root (a=2)", "#1 0x8 in f (c)", "#2 0x7 in g ()", "#3 0x6 in other ()"]);
        assert_eq!(signature(&a), signature(&b));
        assert_eq!(signature(&a), "alloc_root | f | g");
        assert_eq!(signature(&crash(&[])), "crash:SIGSEGV");
    }

    #[test]
    fn error_signature() {
        let e = ExecutionOutcome::from_results(
            vec![StatementResult { index: 0, status: StatementStatus::Error(ErrorInfo { code: "1146".into(), message: "Table 'test.t1' doesn't exist".into() }) }],
            1,
            0,
            "b",
            "1",
        );
        assert_eq!(signature(&e), "E1146:table doesn t exist");
    }
}
