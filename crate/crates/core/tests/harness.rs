mod common;

use bugrepo::harness::{
    Backend, CleanupAction, Executor, FakeProgram, HarnessError, LifecycleAction, LifecycleState, Limits, OutcomeKind, ScriptedFake,
    StatementStatus,
};

fn program(name: &str) -> FakeProgram {
    FakeProgram::load(&common::fixtures().join("backends").join(name)).unwrap()
}

fn stmts(s: &[&str]) -> Vec<String> {
    s.iter().map(|s| s.to_string()).collect()
}

#[test]
fn positional_rule_stops_the_script() {
    let mut p = program("mysql-8.0.toml");
    p.rules.insert(
        0,
        toml::from_str("position = 2\nresult = { kind = \"error\", code = \"1418\", message = \"positional\" }").unwrap(),
    );
    let mut ex = Executor::new(Box::new(ScriptedFake::provisioned(p).unwrap()));
    let run = ex.execute(&stmts(&["CREATE TABLE t (a INT);", "INSERT INTO t VALUES (1);", "SELECT a FROM t;", "SELECT 2;"])).unwrap();
    match &run.outcome.kind {
        OutcomeKind::Error { index, error } => assert_eq!((*index, error.code.as_str()), (2, "1418")),
        other => panic!("{other:?}"),
    }
    assert_eq!(run.outcome.statements.len(), 3, "statements after the error must not run");
}

#[test]
fn errors_continue_when_not_stopping() {
    let mut p = program("mysql-8.0.toml");
    p.rules.insert(0, toml::from_str("position = 0\nresult = { kind = \"error\", code = \"1\", message = \"x\" }").unwrap());
    let mut ex = Executor::new(Box::new(ScriptedFake::provisioned(p).unwrap())).with_limits(Limits { stop_on_error: false, ..Limits::default() });
    let run = ex.execute(&stmts(&["SELECT 1;", "SELECT 2;"])).unwrap();
    assert!(matches!(run.outcome.kind, OutcomeKind::Error { index: 0, .. }));
    assert_eq!(run.outcome.statements[1].status, StatementStatus::Ok);
}

#[test]
fn empty_script_is_clean() {
    let mut ex = Executor::new(Box::new(ScriptedFake::provisioned(program("postgres-15.toml")).unwrap()));
    let run = ex.execute(&[]).unwrap();
    assert_eq!(run.outcome.kind, OutcomeKind::Clean);
    assert!(run.outcome.statements.is_empty());
    assert_eq!(run.cleanup, CleanupAction::CleanDatabase);
}

#[test]
fn lifecycle_and_cleanup() {
    let mut fake = ScriptedFake::new(program("mysql-8.0.toml")).unwrap();
    assert_eq!(fake.state(), LifecycleState::Absent);
    assert!(matches!(fake.run_script(&stmts(&["SELECT 1;"]), &Limits::default()), Err(HarnessError::BackendUnhealthy { .. })));
    fake.lifecycle(LifecycleAction::Provision).unwrap();
    assert_eq!(fake.lifecycle(LifecycleAction::HealthCheck).unwrap(), LifecycleState::Healthy);

    fake.run_script(&stmts(&["CREATE TABLE t1 (a INT);", "CREATE VIEW v1 AS SELECT a FROM t1;"]), &Limits::default()).unwrap();
    assert_eq!(fake.user_objects().unwrap().len(), 2);
    fake.cleanup(CleanupAction::CleanDatabase).unwrap();
    assert!(fake.user_objects().unwrap().is_empty());

    fake.run_script(&stmts(&["SET GLOBAL log_bin_trust_function_creators = 1;"]), &Limits::default()).unwrap();
    assert_ne!(fake.snapshot(), fake.initial_state());
    fake.cleanup(CleanupAction::RestartAndVerify).unwrap();
    assert_eq!(fake.snapshot(), fake.initial_state());

    fake.lifecycle(LifecycleAction::Teardown).unwrap();
    assert_eq!(fake.state(), LifecycleState::Absent);
    assert!(fake.lifecycle(LifecycleAction::HealthCheck).is_err());
}

#[test]
fn crash_escalates_cleanup_to_restart() {
    let mut ex = Executor::new(Box::new(ScriptedFake::provisioned(program("mysql-8.0.toml")).unwrap()));
    let run = ex
        .execute(&stmts(&[
            "CREATE TABLE t5 (a INT);",
            "SELECT * FROM (SELECT a, SUM(a) OVER (ORDER BY a) AS s FROM t5) AS dt LIMIT 1;",
            "SELECT 1;",
        ]))
        .unwrap();
    assert!(matches!(run.outcome.kind, OutcomeKind::Crash { index: 1, .. }), "{:?}", run.outcome.kind);
    assert!(run.cleanup >= CleanupAction::RestartAndVerify);
    assert_eq!(ex.backend.state(), LifecycleState::Healthy);
}

#[test]
fn dry_run_reports_syntax_only() {
    let mut fake = ScriptedFake::provisioned(program("mysql-8.0.toml")).unwrap();
    let res = fake.dry_run(&stmts(&["SELECT 1;", "SELEC 1;", "CREATE FUNCTION f() RETURNS INT RETURN 1;"])).unwrap();
    assert!(res[0].is_none() && res[1].is_some() && res[2].is_none(), "{res:?}");
    assert!(fake.user_objects().unwrap().is_empty());
}
