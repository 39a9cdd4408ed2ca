#!/usr/bin/env python3
"""Writes fixtures/reports/*.json and fixtures/client/script.toml.

Each report carries the canned model answers that go with it, so the
extraction and repair rules stay in step with the report text.
Run from the repository root.
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"


def env_statements(stmts, expected=None):
    lines = ["```envelope", "STATEMENTS:"] + stmts
    if expected:
        lines.append(f"EXPECTED: {expected}")
    lines.append("```")
    return "\n".join(lines)


def env_tag(tag):
    return f"```envelope\n{tag}\n```"


REPORTS = [
    {
        "id": "102205", "dbms": "mysql", "status": "Verified",
        "title": "Malformed packet when a stored function runs over a ROLLUP result",
        "created_at": "2021-01-12T10:00:00Z", "last_modified": "2021-02-03T08:30:00Z",
        "versions": ["8.0.23"], "labels": ["Server: SP"],
        "body": [
            "Description:",
            "With binary logging enabled, calling a stored function on a grouped result with ROLLUP makes the client report a malformed packet.",
            "The same query without the function returns the expected rows.",
            "",
            "How to repeat:",
            "CREATE TABLE t1 (c1 VARCHAR(32));",
            "INSERT INTO t1 VALUES ('a'), ('b');",
            "CREATE FUNCTION f1(p VARCHAR(32)) RETURNS VARCHAR(32) RETURN CONCAT(p, '');",
            "SELECT f1(c1) FROM t1 GROUP BY c1 WITH ROLLUP;",
            "",
            "The last statement fails with:",
            "ERROR 2027 (HY000): Malformed packet",
            "",
            "Suggested fix: none yet.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t1 (c1 VARCHAR(32));",
            "INSERT INTO t1 VALUES ('a'), ('b');",
            "CREATE FUNCTION f1(p VARCHAR(32)) RETURNS VARCHAR(32) RETURN CONCAT(p, '');",
            "SELECT f1(c1) FROM t1 GROUP BY c1 WITH ROLLUP;",
        ], "ERROR 2027 (HY000): Malformed packet")],
        "repair": [(["(rule mysql-1418)"], env_statements([
            "set global log_bin_trust_function_creators=1;",
            "CREATE TABLE t1 (c1 VARCHAR(32));",
            "INSERT INTO t1 VALUES ('a'), ('b');",
            "CREATE FUNCTION f1(p VARCHAR(32)) RETURNS VARCHAR(32) RETURN CONCAT(p, '');",
            "SELECT f1(c1) FROM t1 GROUP BY c1 WITH ROLLUP;",
        ]))],
    },
    {
        "id": "99001", "dbms": "mysql", "status": "Verified",
        "title": "min_examined_row_limit ignored by the slow query log",
        "created_at": "2020-06-01T09:00:00Z",
        "versions": ["8.0.20"], "labels": ["Server: Logging"],
        "body": [
            "Description:",
            "The slow query log does not honour min_examined_row_limit for simple aggregate queries.",
            "To reproduce, first set min_examined_row_limit =100 in the session, then run SELECT count(*) FROM table_name against any table with a few rows.",
            "The query is written to the slow log even though it examines fewer rows than the limit.",
        ],
        "extract": [env_statements([
            "SET min_examined_row_limit = 100;",
            "SELECT COUNT(*) FROM table_name;",
        ])],
        "repair": [(["(rule mysql-1146)"], env_statements([
            "CREATE TABLE table_name (id INT);",
            "SET min_examined_row_limit = 100;",
            "SELECT COUNT(*) FROM table_name;",
        ]))],
    },
    {
        "id": "103500", "dbms": "mysql", "status": "Fixed",
        "title": "Prefix index range scan misses rows with multi-byte collation",
        "created_at": "2021-04-20T14:00:00Z", "last_modified": "2021-07-01T12:00:00Z",
        "versions": ["8.0.24"], "labels": ["Server: InnoDB"],
        "body": [
            "Description:",
            "A range scan on a prefix index returns fewer rows than a full scan when the column uses a multi-byte collation.",
            "",
            "How to repeat:",
            "```sql",
            "CREATE TABLE t2 (id INT PRIMARY KEY, name VARCHAR(64), KEY k_name (name(4)));",
            "INSERT INTO t2 VALUES (1, 'abcdef'), (2, 'abcxyz'), (3, 'zzz');",
            "SELECT id FROM t2 WHERE name LIKE 'abc%' ORDER BY id;",
            "SELECT id FROM t2 IGNORE INDEX (k_name) WHERE name LIKE 'abc%' ORDER BY id;",
            "```",
            "The first query returns one row, the second returns two.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t2 (id INT PRIMARY KEY, name VARCHAR(64), KEY k_name (name(4)));",
            "INSERT INTO t2 VALUES (1, 'abcdef'), (2, 'abcxyz'), (3, 'zzz');",
            "SELECT id FROM t2 WHERE name LIKE 'abc%' ORDER BY id;",
            "SELECT id FROM t2 IGNORE INDEX (k_name) WHERE name LIKE 'abc%' ORDER BY id;",
        ])],
        "repair": [],
    },
    {
        "id": "104210", "dbms": "mysql", "status": "Verified",
        "title": "NOT IN subquery with NULL returns a row",
        "created_at": "2021-08-02T11:00:00Z",
        "versions": ["8.0.26"], "labels": ["Server: Optimizer"],
        "body": [
            "Description:",
            "NOT IN over a subquery that yields NULL returns a row after the upgrade to 8.0.26.",
            "",
            "How to repeat:",
            "mysql> CREATE TABLE t3 (a INT, b INT);",
            "mysql> INSERT INTO t3 VALUES (1, NULL), (2, 2);",
            "mysql> SELECT a FROM t3 WHERE a NOT IN (SELECT b FROM t3;",
            "+------+",
            "| a    |",
            "+------+",
            "|    1 |",
            "+------+",
            "Expected an empty result.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t3 (a INT, b INT);",
            "INSERT INTO t3 VALUES (1, NULL), (2, 2);",
            "SELECT a FROM t3 WHERE a NOT IN (SELECT b FROM t3;",
        ])],
        "repair": [(["(rule mysql-1064)"], env_statements([
            "CREATE TABLE t3 (a INT, b INT);",
            "INSERT INTO t3 VALUES (1, NULL), (2, 2);",
            "SELECT a FROM t3 WHERE a NOT IN (SELECT b FROM t3);",
        ]))],
    },
    {
        "id": "105777", "dbms": "mysql", "status": "Verified",
        "title": "Server does not start after in-place upgrade with lower_case_table_names=1",
        "created_at": "2021-11-05T16:00:00Z",
        "versions": ["8.0.27"], "labels": ["Server: Installing"],
        "body": [
            "Description:",
            "After an in-place upgrade from 5.7.35 to 8.0.27 the server refuses to start when the data directory was initialised with lower_case_table_names=1.",
            "",
            "How to repeat:",
            "On the old server:",
            "mysql> SELECT @@GLOBAL.lower_case_table_names;",
            "Then stop it, install 8.0.27 and start it on the same data directory. The error log shows:",
            "[ERROR] [MY-011087] [Server] Different lower_case_table_names settings for server ('0') and data dictionary ('1').",
            "[ERROR] [MY-010020] [Server] Data Dictionary initialization failed.",
        ],
        "extract": [env_tag("NON_EXTRACTABLE: the failure happens at server start-up after an upgrade and depends on the data directory, not on SQL")],
        "repair": [],
    },
    {
        "id": "106120", "dbms": "mysql", "status": "Verified",
        "title": "Assertion in Rdb_key_def::pack_record with an index on a virtual column",
        "created_at": "2022-01-10T10:00:00Z",
        "versions": ["8.0.28"], "labels": ["Server: RocksDB"],
        "body": [
            "Description:",
            "Inserting into a RocksDB table with a secondary index on a generated column hits an assertion.",
            "",
            "How to repeat:",
            "CREATE TABLE t4 (a INT PRIMARY KEY, b INT AS (a * 2) VIRTUAL, KEY kb (b)) ENGINE=ROCKSDB;",
            "INSERT INTO t4 (a) VALUES (1), (2);",
            "SELECT b FROM t4 FORCE INDEX (kb) WHERE b > 1;",
            "",
            "Assertion failure: rdb_datadic.cc:1203 thread 140 in Rdb_key_def::pack_record",
        ],
        "extract": [env_statements([
            "CREATE TABLE t4 (a INT PRIMARY KEY, b INT AS (a * 2) VIRTUAL, KEY kb (b)) ENGINE=ROCKSDB;",
            "INSERT INTO t4 (a) VALUES (1), (2);",
            "SELECT b FROM t4 FORCE INDEX (kb) WHERE b > 1;",
        ])],
        # The canned repair drops the generated column and the index, so
        # the constraint gate turns it down every time.
        "repair": [([], env_statements([
            "CREATE TABLE t4 (a INT PRIMARY KEY) ENGINE=InnoDB;",
            "INSERT INTO t4 (a) VALUES (1), (2);",
            "SELECT a FROM t4 WHERE a > 1;",
        ]))],
    },
    {
        "id": "107300", "dbms": "mysql", "status": "Verified",
        "title": "Crash in Window::reset_round with a window function in a derived table",
        "created_at": "2022-05-16T08:00:00Z",
        "versions": ["8.0.29"], "labels": ["Server: Optimizer"], "cve_ids": ["CVE-2099-7300"],
        "body": [
            "Description:",
            "The server crashes when a window function is used inside a derived table and the outer query has a LIMIT.",
            "",
            "How to repeat:",
            "CREATE TABLE t5 (a INT, b INT);",
            "INSERT INTO t5 VALUES (1, 1), (2, 2), (3, 3);",
            "SELECT * FROM (SELECT a, SUM(b) OVER (ORDER BY a) AS s FROM t5) AS dt LIMIT 1;",
            "",
            "mysqld got signal 11 ;",
            "#0 0x55d1c2 in Window::reset_round() sql/window.cc:1412",
            "#1 0x55d3a0 in Item_sum::clear() sql/item_sum.cc:612",
            "#2 0x55d5f1 in JOIN::exec() sql/sql_executor.cc:221",
        ],
        "extract": [env_statements([
            "CREATE TABLE t5 (a INT, b INT);",
            "INSERT INTO t5 VALUES (1, 1), (2, 2), (3, 3);",
            "SELECT * FROM (SELECT a, SUM(b) OVER (ORDER BY a) AS s FROM t5) AS dt LIMIT 1;",
        ])],
        "repair": [],
    },
    {
        "id": "MDEV-26001", "dbms": "mariadb", "status": "Confirmed",
        "title": "Crash in String::append on REPEAT over JSON_NORMALIZE",
        "created_at": "2021-07-01T09:00:00Z",
        "versions": ["10.7.0"], "labels": ["crash", "json"], "cve_ids": ["CVE-2099-26001"],
        "body": [
            "The server crashes when REPEAT() is applied to the result of JSON_NORMALIZE().",
            "",
            "{code:sql}",
            "SELECT REPEAT(JSON_NORMALIZE('{\"a\": [1, 2, {\"b\": 3}]}'), 2);",
            "{code}",
            "",
            "mysqld got signal 11 ;",
            "sql/sql_string.cc:830(String::append(char const*, unsigned long))",
            "sql/item_strfunc.cc:1402(Item_func_repeat::val_str(String*))",
        ],
        "extract": [env_statements([
            "SELECT REPEAT(JSON_NORMALIZE('{\"a\": [1, 2, {\"b\": 3}]}'), 2);",
        ])],
        "repair": [],
    },
    {
        "id": "MDEV-27050", "dbms": "mariadb", "status": "Confirmed",
        "title": "Crash on INSERT when a trigger writes into a view re-created as a table",
        "created_at": "2021-11-20T13:00:00Z",
        "versions": ["10.6.5"], "labels": ["crash", "triggers"],
        "body": [
            "The server crashes on INSERT when a trigger writes into a view that was dropped and re-created as a table.",
            "",
            "{code:sql}",
            "CREATE TABLE t1 (a INT);",
            "CREATE TABLE t2 (a INT);",
            "CREATE VIEW v1 AS SELECT a FROM t2;",
            "CREATE TRIGGER trg AFTER INSERT ON t1 FOR EACH ROW INSERT INTO v1 VALUES (NEW.a);",
            "DROP VIEW v1;",
            "CREATE TABLE v1 (a INT);",
            "INSERT INTO t1 VALUES (1);",
            "{code}",
            "",
            "The last INSERT crashes the server (signal 11) in open_tables.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t1 (a INT);",
            "CREATE TABLE t2 (a INT);",
            "CREATE VIEW v1 AS SELECT a FROM t2;",
            "CREATE TRIGGER trg AFTER INSERT ON t1 FOR EACH ROW INSERT INTO v1 VALUES (NEW.a);",
            "DROP VIEW v1;",
            "CREATE TABLE v1 (a INT);",
            "INSERT INTO t1 VALUES (1);",
        ])],
        "repair": [],
    },
    {
        "id": "MDEV-28100", "dbms": "mariadb", "status": "Fixed",
        "title": "NEXTVAL returns a value below MINVALUE after ALTER SEQUENCE RESTART",
        "created_at": "2022-03-22T10:00:00Z", "last_modified": "2022-05-10T10:00:00Z",
        "versions": ["10.8.2"], "labels": ["sequences"],
        "body": [
            "NEXTVAL on a cycling sequence returns a value below MINVALUE after ALTER SEQUENCE ... RESTART.",
            "",
            "{code:sql}",
            "CREATE SEQUENCE s1 START WITH 1 MINVALUE 1 MAXVALUE 3 CYCLE;",
            "ALTER SEQUENCE s1 RESTART WITH 3;",
            "SELECT NEXTVAL(s1), NEXTVAL(s1);",
            "{code}",
            "",
            "The second value is 0; it should be 1.",
        ],
        "extract": [env_statements([
            "CREATE SEQUENCE s1 START WITH 1 MINVALUE 1 MAXVALUE 3 CYCLE;",
            "ALTER SEQUENCE s1 RESTART WITH 3;",
            "SELECT NEXTVAL(s1), NEXTVAL(s1);",
        ])],
        "repair": [],
    },
    {
        "id": "MDEV-29010", "dbms": "mariadb", "status": "Confirmed",
        "title": "Crash in Window_funcs_sort::setup with a named window and COUNT(DISTINCT)",
        "created_at": "2022-08-30T15:00:00Z",
        "versions": ["10.9.2"], "labels": ["crash", "window functions"],
        "body": [
            "Crash in Window_funcs_sort::setup with a named window and a DISTINCT aggregate.",
            "Table t6 has two INT columns a and b, filled with (1, 1) and (1, 2).",
            "",
            "{code:sql}",
            "SELECT a, COUNT(DISTINCT b) OVER w FROM t6 WINDOW w AS (PARTITION BY a);",
            "{code}",
            "",
            "mysqld got signal 11 ;",
        ],
        # Round one only sees the query; the table shape is on a nearby line.
        "extract": [
            (["excludes:Nearby report lines:"], env_tag("INSUFFICIENT_CONTEXT: the definition of t6 is not in the fragments")),
            (["Nearby report lines:"], env_statements([
                "CREATE TABLE t6 (a INT, b INT);",
                "INSERT INTO t6 VALUES (1, 1), (1, 2);",
                "SELECT a, COUNT(DISTINCT b) OVER w FROM t6 WINDOW w AS (PARTITION BY a);",
            ])),
        ],
        "repair": [],
    },
    {
        "id": "MDEV-30500", "dbms": "mariadb", "status": "Confirmed",
        "title": "Duplicated rows from GROUP BY over a USING join after upgrade",
        "created_at": "2023-01-25T09:00:00Z",
        "versions": ["10.6.12"], "labels": ["optimizer"],
        "body": [
            "A report query over our customer data set returns duplicated groups after upgrading to 10.6.12.",
            "",
            "{code:sql}",
            "SELECT c_id, SUM(o_total) FROM orders JOIN customers USING (c_id) GROUP BY c_id HAVING SUM(o_total) > 1000;",
            "{code}",
            "",
            "The data set is about 2 GB and cannot be attached.",
        ],
        "extract": [env_statements([
            "SELECT c_id, SUM(o_total) FROM orders JOIN customers USING (c_id) GROUP BY c_id HAVING SUM(o_total) > 1000;",
        ])],
        "repair": [([], env_tag("NON_EXTRACTABLE: the tables come from a private data set whose shape and contents are not in the report"))],
    },
    {
        "id": "17001", "dbms": "postgres", "status": "Confirmed",
        "title": "DISTINCT ON with a descending sort key returns the wrong row",
        "created_at": "2021-05-03T12:00:00Z",
        "versions": ["13.2"], "labels": ["planner"],
        "body": [
            "BUG #17001: DISTINCT ON with ORDER BY ... DESC returns the wrong row per group",
            "",
            "CREATE TABLE t7 (g int, v int);",
            "INSERT INTO t7 VALUES (1, 3), (1, 1), (2, 2);",
            "SELECT DISTINCT ON (g) g, v FROM t7 ORDER BY g, v DESC;",
            "",
            "Expected (1,3),(2,2). Got (1,1),(2,2).",
        ],
        # The first answer is malformed; the format reminder gets a good one.
        "extract": [
            (["excludes:did not follow the required format"], "Here is the PoC:\nCREATE TABLE t7 (g int, v int);"),
            (["did not follow the required format"], env_statements([
                "CREATE TABLE t7 (g int, v int);",
                "INSERT INTO t7 VALUES (1, 3), (1, 1), (2, 2);",
                "SELECT DISTINCT ON (g) g, v FROM t7 ORDER BY g, v DESC;",
            ])),
        ],
        "repair": [],
    },
    {
        "id": "17245", "dbms": "postgres", "status": "Confirmed",
        "title": "Planner much slower after upgrade to 14.1",
        "created_at": "2021-10-25T07:00:00Z",
        "versions": ["14.1"], "labels": ["performance"],
        "body": [
            "BUG #17245: planner much slower after upgrade to 14.1",
            "After moving from 13.4 to 14.1 our reporting workload takes three times longer.",
            "We cannot share the schema or the statements, they belong to a customer.",
            "The plans are attached privately to the ticket.",
        ],
        "extract": [],
        "repair": [],
    },
    {
        "id": "17380", "dbms": "postgres", "status": "Confirmed",
        "title": "unrecognized node type with LATERAL over a set-returning function",
        "created_at": "2022-01-28T18:00:00Z",
        "versions": ["14.1"], "labels": ["executor"],
        "body": [
            "BUG #17380: error with a lateral join on a function scan",
            "Table t8 has one integer column n.",
            "",
            "SELECT * FROM t8, LATERAL generate_series(1, t8.n) AS g(i) WHERE g.i > t8.n - 1;",
            "",
            "Fails with:",
            "ERROR:  unrecognized node type: 0",
        ],
        "extract": [env_statements([
            "SELECT * FROM t8, LATERAL generate_series(1, t8.n) AS g(i) WHERE g.i > t8.n - 1;",
        ], "ERROR:  unrecognized node type: 0")],
        "repair": [(["(rule pg-42P01)"], env_statements([
            "CREATE TABLE t8 (n int);",
            "SELECT * FROM t8, LATERAL generate_series(1, t8.n) AS g(i) WHERE g.i > t8.n - 1;",
        ]))],
    },
    {
        "id": "17422", "dbms": "postgres", "status": "Confirmed",
        "title": "pg_hint_plan Leading hint ignored for partitions",
        "created_at": "2022-02-28T09:00:00Z",
        "versions": ["14.2"], "labels": ["extensions"],
        "body": [
            "BUG #17422: Leading hint ignored when the table is partitioned",
            "",
            "CREATE EXTENSION pg_hint_plan;",
            "CREATE TABLE p (id int, v int) PARTITION BY RANGE (id);",
            "CREATE TABLE p1 PARTITION OF p FOR VALUES FROM (0) TO (100);",
            "SELECT * FROM p WHERE id < 10;",
            "",
            "The plan does not follow the hint.",
        ],
        "extract": [env_statements([
            "CREATE EXTENSION pg_hint_plan;",
            "CREATE TABLE p (id int, v int) PARTITION BY RANGE (id);",
            "CREATE TABLE p1 PARTITION OF p FOR VALUES FROM (0) TO (100);",
            "SELECT * FROM p WHERE id < 10;",
        ])],
        # Accepted every time, but the extension is never available.
        "repair": [([], env_statements([
            "CREATE EXTENSION IF NOT EXISTS pg_hint_plan;",
            "CREATE TABLE p (id int, v int) PARTITION BY RANGE (id);",
            "CREATE TABLE p1 PARTITION OF p FOR VALUES FROM (0) TO (100);",
            "SELECT * FROM p WHERE id < 10;",
        ]))],
    },
    {
        "id": "7400", "dbms": "monetdb", "status": "Fixed",
        "title": "Crash in rel_groupby_ops when ANY is used over a grouped subquery",
        "created_at": "2023-06-12T10:00:00Z", "last_modified": "2023-07-01T10:00:00Z",
        "versions": ["11.43.5"], "labels": ["crash"],
        "body": [
            "Crash in rel_groupby_ops when ANY is used over a grouped subquery.",
            "",
            "CREATE TABLE t9 (a INT, b INT);",
            "INSERT INTO t9 VALUES (1, 2), (2, 3);",
            "SELECT a FROM t9 GROUP BY a HAVING a = ANY (SELECT b FROM t9 GROUP BY b);",
            "",
            "mserver5 receives SIGSEGV:",
            "#0 0x00007f3a in rel_groupby_ops (sql=0x55, rel=0x66) at rel_select.c:4021",
            "#1 0x00007f3b in exp_any (sql=0x55) at rel_exp.c:88",
            "#2 0x00007f3c in rel_select (sql=0x55) at rel_select.c:5110",
        ],
        "extract": [env_statements([
            "CREATE TABLE t9 (a INT, b INT);",
            "INSERT INTO t9 VALUES (1, 2), (2, 3);",
            "SELECT a FROM t9 GROUP BY a HAVING a = ANY (SELECT b FROM t9 GROUP BY b);",
        ])],
        "repair": [],
    },
    {
        "id": "7411", "dbms": "monetdb", "status": "Fixed",
        "title": "Wrong result for COALESCE over a LEFT JOIN",
        "created_at": "2023-07-04T10:00:00Z", "last_modified": "2023-08-15T10:00:00Z",
        "versions": ["11.45.7"], "labels": ["wrong result"],
        "body": [
            "COALESCE over the nullable side of a LEFT JOIN returns NULL instead of the default.",
            "",
            "CREATE TABLE t10 (a INT);",
            "CREATE TABLE t11 (a INT, c VARCHAR(8));",
            "INSERT INTO t10 VALUES (1), (2);",
            "INSERT INTO t11 VALUES (1, 'x');",
            "SELECT t10.a, COALESCE(t11.c, 'none') FROM t10 LEFT JOIN t11 ON t10.a = t11.a;",
            "",
            "Row 2 shows NULL instead of 'none'.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t10 (a INT);",
            "CREATE TABLE t11 (a INT, c VARCHAR(8));",
            "INSERT INTO t10 VALUES (1), (2);",
            "INSERT INTO t11 VALUES (1, 'x');",
            "SELECT t10.a, COALESCE(t11.c, 'none') FROM t10 LEFT JOIN t11 ON t10.a = t11.a;",
        ])],
        "repair": [],
    },
    {
        "id": "7420", "dbms": "monetdb", "status": "Confirmed",
        "title": "AVG over DECIMAL rounds half-way values down",
        "created_at": "2023-09-02T10:00:00Z",
        "versions": ["11.47.3"], "labels": ["wrong result"],
        "body": [
            "AVG over a DECIMAL(10,2) column rounds half-way values down.",
            "",
            "CREATE TABLE t12 (d DECIMAL(10,2);",
            "INSERT INTO t12 VALUES (1.25), (1.26);",
            "SELECT AVG(d) FROM t12;",
            "",
            "Returns 1.25, expected 1.26.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t12 (d DECIMAL(10,2);",
            "INSERT INTO t12 VALUES (1.25), (1.26);",
            "SELECT AVG(d) FROM t12;",
        ])],
        "repair": [(["(rule monet-syntax)"], env_statements([
            "CREATE TABLE t12 (d DECIMAL(10,2));",
            "INSERT INTO t12 VALUES (1.25), (1.26);",
            "SELECT AVG(d) FROM t12;",
        ]))],
    },
    {
        "id": "7433", "dbms": "monetdb", "status": "Confirmed",
        "title": "Assertion in BATsubcross for a multi-row scalar subquery in UPDATE",
        "created_at": "2023-10-11T10:00:00Z",
        "versions": ["11.47.3"], "labels": ["crash"],
        "body": [
            "UPDATE with a scalar subquery that returns more than one row aborts the server.",
            "t14 is any table with an INT column a.",
            "",
            "CREATE TABLE t13 (a INT, b INT);",
            "INSERT INTO t13 VALUES (1, 1);",
            "INSERT INTO t14 VALUES (1), (2);",
            "UPDATE t13 SET b = (SELECT a FROM t14) WHERE a > 0;",
            "",
            "mserver5: gdk_join.c:123: BATsubcross: Assertion `cnt <= 1' failed.",
        ],
        "extract": [env_statements([
            "CREATE TABLE t13 (a INT, b INT);",
            "INSERT INTO t13 VALUES (1, 1);",
            "INSERT INTO t14 VALUES (1), (2);",
            "UPDATE t13 SET b = (SELECT a FROM t14) WHERE a > 0;",
        ])],
        "repair": [(["(rule monet-42S02)"], env_statements([
            "CREATE TABLE t13 (a INT, b INT);",
            "CREATE TABLE t14 (a INT);",
            "INSERT INTO t13 VALUES (1, 1);",
            "INSERT INTO t14 VALUES (1), (2);",
            "UPDATE t13 SET b = (SELECT a FROM t14) WHERE a > 0;",
        ]))],
    },
]


def qualified(r):
    rid = r["id"]
    if "-" in rid and rid[0].isalpha():
        return rid
    return f"{r['dbms']}#{rid}"


def toml_str(s):
    return json.dumps(s, ensure_ascii=False)


def toml_multiline(s):
    assert "'''" not in s
    return "'''\n" + s + "\n'''"


def rule(name, contains, excludes, response):
    out = ["[[rule]]", f"name = {toml_str(name)}"]
    out.append("contains = [" + ", ".join(toml_str(c) for c in contains) + "]")
    if excludes:
        out.append("excludes = [" + ", ".join(toml_str(e) for e in excludes) + "]")
    out.append(f"response = {toml_multiline(response)}")
    return "\n".join(out)


def split_conditions(conds):
    contains = [c for c in conds if not c.startswith("excludes:")]
    excludes = [c[len("excludes:"):] for c in conds if c.startswith("excludes:")]
    return contains, excludes


# Strategy sample: twelve mysql PoCs run on fixtures/strategy/backend.toml.
# kinds: clean (runs as is), feedback (only a feedback-guided repair fixes
# it), retry (first repair over-simplifies, the constraint-aware retry is
# minimal), lossy (every repair over-simplifies), blind (any repair works).
STRATEGY = [
    ("strat#01", "clean", [
        "CREATE TABLE s1 (id INT PRIMARY KEY, v INT);",
        "CREATE TABLE s1b (id INT, w INT);",
        "INSERT INTO s1 VALUES (1, 10), (2, 20);",
        "SELECT s1.v, s1b.w FROM s1 LEFT JOIN s1b ON s1.id = s1b.id WHERE s1.v > 5;",
    ], None, None),
    ("strat#02", "clean", [
        "CREATE TABLE s2 (id INT, n INT);",
        "INSERT INTO s2 VALUES (1, 1), (2, 2);",
        "UPDATE s2 SET n = n + 1 WHERE id = 2;",
        "SELECT id, n FROM s2 ORDER BY n DESC;",
    ], None, None),
    ("strat#03", "clean", [
        "CREATE TABLE s3 (g INT, v INT);",
        "INSERT INTO s3 VALUES (1, 3), (1, 4), (2, 5);",
        "SELECT g, SUM(v) OVER (PARTITION BY g ORDER BY v) FROM s3;",
    ], None, None),
    ("strat#04", "feedback", [
        "CREATE TABLE s4 (id INT, v VARCHAR(8)) TYPE=MyISAM;",
        "INSERT INTO s4 VALUES (1, 'a'), (2, 'b');",
        "SELECT v FROM s4 WHERE id IN (SELECT id FROM s4 WHERE v > 'a');",
    ], [("TYPE=MyISAM", "ENGINE=MyISAM")], None),
    ("strat#05", "feedback", [
        "CREATE TABLE s5 (id INT, v INT);",
        "INSERT INTO s5 VALUES (1, 2);",
        "SET SESSION tx_isolation = 'READ-COMMITTED';",
        "SELECT v FROM s5 WHERE id = 1 FOR UPDATE;",
    ], [("tx_isolation", "transaction_isolation")], None),
    ("strat#06", "feedback", [
        "CREATE TABLE s6 (a INT, b INT);",
        "INSERT INTO s6 VALUES (1, 1), (2, 1), (2, 2);",
        "SELECT a, COUNT(b) FROM s6 GROUP BY a DESC HAVING COUNT(b) > 1;",
    ], [("GROUP BY a DESC", "GROUP BY a")], None),
    ("strat#07", "retry", [
        "CREATE TABLE s7 (id INT, pw VARCHAR(64), KEY k_pw (pw));",
        "CREATE TABLE s7_log (id INT, note VARCHAR(32));",
        "INSERT INTO s7 VALUES (1, PASSWORD('x'));",
        "SELECT s7.id, s7_log.note FROM s7 JOIN s7_log ON s7.id = s7_log.id WHERE s7.pw LIKE '*%';",
    ], [("PASSWORD('x')", "SHA2('x', 256)")], ["SELECT 1;"]),
    ("strat#08", "retry", [
        "CREATE TABLE s8 (id INT, secret BLOB);",
        "CREATE TABLE s8_keys (id INT, k VARCHAR(16));",
        "INSERT INTO s8 VALUES (1, ENCODE('abc', 'k1'));",
        "SELECT s8.id FROM s8 JOIN s8_keys ON s8.id = s8_keys.id WHERE s8.secret IS NOT NULL ORDER BY s8.id;",
    ], [("ENCODE('abc', 'k1')", "AES_ENCRYPT('abc', 'k1')")], ["CREATE TABLE s8 (id INT);", "SELECT id FROM s8;"]),
    ("strat#09", "retry", [
        "CREATE TABLE s9 (id INT, v INT);",
        "CREATE TABLE s9_hist (id INT, v INT);",
        "INSERT INTO s9 VALUES (1, 1), (2, 2);",
        "INSERT INTO s9_hist SELECT id, v FROM s9 WHERE v > 1;",
        "SELECT SQL_CACHE id, v FROM s9_hist UNION SELECT id, v FROM s9;",
    ], [("SQL_CACHE ", "")], ["SELECT 1;"]),
    ("strat#10", "lossy", [
        "CREATE TEMPORARY TABLE s10 (id INT, v INT) TYPE=HEAP;",
        "INSERT INTO s10 VALUES (1, 1), (2, 4);",
        "SELECT id FROM s10 WHERE v = (SELECT MAX(v) FROM s10);",
    ], None, ["SELECT 1;"]),
    ("strat#11", "lossy", [
        "CREATE TABLE s11 (u VARCHAR(16), pw VARCHAR(64));",
        "INSERT INTO s11 VALUES ('root', PASSWORD('secret'));",
        "SELECT u FROM s11 WHERE pw = PASSWORD('secret') AND u LIKE 'r%';",
    ], None, ["SELECT 'root';"]),
    ("strat#12", "blind", [
        "CREATE TABLE s12 (id INT, v INT);",
        "INSERT INTO s12 VALUES (1, 1);",
        "SET SESSION tx_isolation = 'SERIALIZABLE';",
        "SELECT v FROM s12 WHERE id = 1 LOCK IN SHARE MODE;",
    ], [("tx_isolation", "transaction_isolation")], None),
]


def apply_edits(stmts, edits):
    out = []
    for st in stmts:
        for old, new in edits:
            st = st.replace(old, new)
        out.append(st)
    return out


def strategy_rules():
    rules = []
    for cid, kind, stmts, edits, lossy in STRATEGY:
        if kind == "clean":
            continue
        target = f"Repair target: {cid}\n"
        fixed = env_statements(apply_edits(stmts, edits)) if edits else None
        lossy_env = env_statements(lossy) if lossy else None
        rejected = "Your previous repair was rejected"
        feedback = "Runtime feedback:"
        blind = "Make the script executable."
        if kind == "feedback":
            rules.append(rule(f"strategy {cid} feedback", [target, feedback], [], fixed))
            # Without the error message the model changes nothing.
            rules.append(rule(f"strategy {cid} blind", [target, blind], [], env_statements(stmts)))
        elif kind == "retry":
            rules.append(rule(f"strategy {cid} first", [target, feedback], [rejected], lossy_env))
            rules.append(rule(f"strategy {cid} retry", [target, rejected], [], fixed))
            rules.append(rule(f"strategy {cid} blind", [target, blind], [], lossy_env))
        elif kind == "lossy":
            rules.append(rule(f"strategy {cid} any", [target], [], lossy_env))
        elif kind == "blind":
            rules.append(rule(f"strategy {cid} any", [target], [], fixed))
    return rules


def write_strategy_sample():
    out = [
        "# Raw PoCs for the strategy comparison. Generated by scripts/gen_fixtures.py.",
        "# Expected rates come from scripts/strategy_oracle.py.",
        "",
    ]
    for cid, kind, stmts, _, _ in STRATEGY:
        out.append("[[case]]")
        out.append(f"report_id = {toml_str(cid)}")
        out.append(f"# {kind}")
        out.append("statements = [")
        for st in stmts:
            out.append(f"  {toml_str(st)},")
        out.append("]")
        out.append("")
    d = FIX / "strategy"
    d.mkdir(parents=True, exist_ok=True)
    (d / "sample.toml").write_text("\n".join(out))


def main():
    reports = FIX / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    for old in reports.glob("*.json"):
        old.unlink()
    rules = []
    for r in REPORTS:
        payload = {k: r[k] for k in ("id", "dbms", "title", "status", "created_at", "versions", "labels", "body")}
        if r.get("cve_ids"):
            payload["cve_ids"] = r["cve_ids"]
        if "last_modified" in r:
            payload["last_modified"] = r["last_modified"]
        qid = qualified(r)
        fname = qid.replace("#", "-").lower() + ".json"
        (reports / fname).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n")

        target = f"Target report: {qid}\n"
        for n, item in enumerate(r["extract"]):
            conds, resp = item if isinstance(item, tuple) else ([], item)
            contains, excludes = split_conditions(conds)
            rules.append(rule(f"extract {qid} #{n + 1}", [target] + contains, excludes, resp))
        marker = f"Repair target: {qid}\n"
        for n, (conds, resp) in enumerate(r["repair"]):
            contains, excludes = split_conditions(conds)
            rules.append(rule(f"repair {qid} #{n + 1}", [marker] + contains, excludes, resp))

    rules.extend(strategy_rules())
    write_strategy_sample()
    header = (
        "# Canned model answers for the fixture reports. Generated by\n"
        "# scripts/gen_fixtures.py; edit the generator, not this file.\n"
        "# A request with no matching rule gets the fallback.\n\n"
        f"fallback = {toml_multiline(env_tag('NON_EXTRACTABLE: no scripted answer'))}\n"
    )
    client = FIX / "client"
    client.mkdir(parents=True, exist_ok=True)
    (client / "script.toml").write_text(header + "\n" + "\n\n".join(rules) + "\n")


if __name__ == "__main__":
    main()
