mod common;

use bugrepo::fragmenter::{process_report, render_fragments, CaptureStage, ScoringConfig};
use common::lines;

fn run(body: &[&str]) -> Vec<bugrepo::fragmenter::Fragment> {
    process_report(&lines(body), &ScoringConfig::default()).unwrap().unwrap_or_default()
}

#[test]
fn crash_log_with_echoed_query_is_not_a_statement() {
    let frags = run(&[
        "How to repeat:",
        "SELECT a FROM t1 WHERE b > 2;",
        "Result:",
        "#0 0x55d1c2 in JOIN::exec() at sql/sql_select.cc:1412",
        "Query (0x7f3a10): SELECT * FROM t1 WHERE a = 1",
        "mysqld got signal 11 ;",
    ]);
    assert_eq!(frags.len(), 1, "{}", render_fragments(&frags));
    assert_eq!(frags[0].lines, lines(&["SELECT a FROM t1 WHERE b > 2;"]));
}

#[test]
fn statement_walk_stops_at_trace_lines() {
    // The terminator sits below a frame line; walking through it would glue
    // the frame onto the statement.
    let frags = run(&["SELECT a,", "#1 0x7a22 in open_tables (thd=0x1) at sql/sql_base.cc:4402", "  b FROM t;"]);
    assert!(frags.iter().all(|f| f.capture_stage != CaptureStage::BacktrackedStatement), "{}", render_fragments(&frags));
}

#[test]
fn hex_literals_do_not_block_statements() {
    let frags = run(&["INSERT INTO t VALUES (0x41, 'a');"]);
    assert_eq!(frags.len(), 1);
    assert_eq!(frags[0].capture_stage, CaptureStage::BacktrackedStatement);
}

#[test]
fn prose_with_two_statements_gives_two_fragments() {
    let frags = run(&[
        "Description:",
        "First I ran SET GLOBAL min_examined_row_limit =100; in a new session.",
        "Then SELECT count(*) FROM table_name WHERE a > 1; returns 0.",
        "Thanks.",
    ]);
    assert_eq!(frags.len(), 2, "{}", render_fragments(&frags));
    assert!(frags.iter().all(|f| matches!(f.capture_stage, CaptureStage::BacktrackedStatement | CaptureStage::ScoredLine)));
}

#[test]
fn multi_line_ddl_with_quoted_terminators() {
    let body = [
        "Schema:",
        "CREATE TABLE t (",
        "  a INT NOT NULL,",
        "  b VARCHAR(32) COMMENT 'free text; may hold (parens)',",
        "  PRIMARY KEY (a)",
        ") ENGINE=InnoDB;",
    ];
    let frags = run(&body);
    assert_eq!(frags.len(), 1, "{}", render_fragments(&frags));
    assert_eq!((frags[0].start_index, frags[0].lines.len()), (1, 5));
}

#[test]
fn pre_and_code_tags_from_fixture_config() {
    let cfg = ScoringConfig::load(&common::fixtures().join("scoring.toml")).unwrap();
    let body = lines(&["<pre>", "SELECT 1;", "</pre>", "{code}", "SELECT 2;", "{code}"]);
    let frags = process_report(&body, &cfg).unwrap().unwrap();
    let blocks: Vec<_> = frags.iter().filter(|f| f.capture_stage == CaptureStage::FormattedBlock).map(|f| f.lines.clone()).collect();
    assert_eq!(blocks, vec![lines(&["SELECT 1;"]), lines(&["SELECT 2;"])]);
}

#[test]
fn fixture_suite_by_kind() {
    let scorer = ScoringConfig::default().compile().unwrap();
    for case in common::fragmenter_cases() {
        let frags = scorer.process_report(&case.body).unwrap_or_default();
        match case.kind.as_str() {
            "fenced" => assert!(frags.iter().any(|f| Some(&f.lines) == case.block.as_ref()), "{}", case.id),
            "ddl" => {
                let create = &case.statements[0];
                assert!(
                    frags.iter().any(|f| f.capture_stage == CaptureStage::BacktrackedStatement && &f.text() == create),
                    "{}: {}",
                    case.id,
                    render_fragments(&frags)
                );
            }
            _ => {}
        }
        for f in &frags {
            assert!(f.lines.iter().all(|l| !case.trace.contains(l)), "{} captured a trace line", case.id);
        }
    }
}
