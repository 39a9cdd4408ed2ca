#!/usr/bin/env python3
"""Writes fixtures/fragmenter/*.json: thirty synthetic reports with planted SQL.

  fenced-NN  a ``` block holding the PoC, surrounded by prose and a trace
  prose-NN   statements written inline in sentences, no terminator
  ddl-NN     a CREATE TABLE spread over several lines, then a query

Each file records what a correct fragmenter must find: `block` (exact
interior of the fenced block), `statements` (planted statements that must
appear inside some fragment) and `trace` (lines no fragment may contain).
Deterministic; run from the repository root.
"""

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures" / "fragmenter"

TABLES = ["t1", "orders", "items", "users", "events", "parts", "logs", "stock", "grades", "visits"]
COLS = ["a", "b", "c", "id", "qty", "price", "name", "ts", "flag", "score"]

INTROS = [
    "Description:",
    "The optimizer picks a wrong plan in the following situation.",
    "We hit this after upgrading the test servers last week.",
    "Found while running our nightly regression suite.",
    "This only happens with the default configuration.",
]
OUTROS = [
    "Expected result: the same rows as without the index.",
    "The result differs between runs.",
    "Suggested fix: none.",
    "Thanks for looking into this.",
    "Also reproducible on the previous minor release.",
]


def trace(rng):
    fn = rng.choice(["JOIN::exec", "Item_func::val_int", "handler::ha_rnd_next", "rel_select", "ExecScan"])
    frames = [
        f"#{i} 0x{rng.randrange(1 << 40):x} in {fn}_{i}() at sql/{rng.choice(['sql_select', 'item', 'handler'])}.cc:{rng.randrange(100, 9000)}"
        for i in range(rng.randrange(2, 5))
    ]
    # A crash log echoes the query; the address marks it as log output.
    frames.append(f"Query (0x{rng.randrange(1 << 32):x}): SELECT * FROM {rng.choice(TABLES)} WHERE a = 1")
    frames.append("mysqld got signal 11 ;")
    return frames


def table_ddl_one_line(rng, t):
    cols = rng.sample(COLS, 3)
    return f"CREATE TABLE {t} ({cols[0]} INT, {cols[1]} INT, {cols[2]} VARCHAR(20));", cols


def query(rng, t, cols):
    c0, c1 = cols[0], cols[1]
    return rng.choice([
        f"SELECT {c0}, COUNT(*) FROM {t} WHERE {c1} > {rng.randrange(10)} GROUP BY {c0};",
        f"SELECT {c0} FROM {t} WHERE {c1} IN (SELECT {c1} FROM {t} WHERE {c0} < {rng.randrange(50)});",
        f"UPDATE {t} SET {c1} = {c1} + 1 WHERE {c0} = {rng.randrange(5)};",
        f"DELETE FROM {t} WHERE {c0} BETWEEN 1 AND {rng.randrange(2, 9)};",
    ])


def fenced(rng, n):
    t = TABLES[n % len(TABLES)]
    ddl, cols = table_ddl_one_line(rng, t)
    ins = f"INSERT INTO {t} VALUES (1, 2, 'x'), (3, 4, 'y');"
    q = query(rng, t, cols)
    block = [ddl, ins, q]
    tr = trace(rng)
    body = [rng.choice(INTROS), "", "How to repeat:", "```sql", *block, "```", "", "Result:", *tr, "", rng.choice(OUTROS)]
    return {"kind": "fenced", "body": body, "block": block, "statements": block, "trace": tr}


def prose(rng, n):
    t = TABLES[n % len(TABLES)]
    c0, c1 = rng.sample(COLS, 2)
    v = rng.randrange(1, 500)
    setting = rng.choice(["min_examined_row_limit", "sort_buffer_size", "optimizer_search_depth", "join_buffer_size"])
    s1 = f"SET {setting} = {v}"
    s2 = rng.choice([
        f"SELECT count(*) FROM {t} WHERE {c0} > {v}",
        f"SELECT {c0}, {c1} FROM {t} ORDER BY {c1} LIMIT 10",
        f"SELECT DISTINCT {c0} FROM {t} JOIN {t}_b USING ({c1})",
    ])
    tr = trace(rng)
    template = rng.choice([
        "When I {s1} and then run {s2} the result is wrong.",
        "First {s1} in a fresh session, after that {s2} returns a wrong count.",
        "To reproduce: {s1}, then {s2} and compare with the expected rows.",
    ])
    body = [
        rng.choice(INTROS),
        template.format(s1=s1, s2=s2),
        "It looks related to the recent change in the range optimizer.",
        *tr,
        rng.choice(OUTROS),
    ]
    return {"kind": "prose", "body": body, "block": None, "statements": [s1, s2], "trace": tr}


def ddl(rng, n):
    t = TABLES[n % len(TABLES)]
    cols = rng.sample(COLS, 4)
    create = [
        f"CREATE TABLE {t} (",
        f"  {cols[0]} INT NOT NULL,",
        f"  {cols[1]} DECIMAL(10,2) DEFAULT '0.00',",
        f"  {cols[2]} VARCHAR(32) COMMENT 'free text; may hold (parens)',",
        f"  {cols[3]} INT,",
        f"  PRIMARY KEY ({cols[0]}),",
        f"  KEY k_{cols[1]} ({cols[1]}, {cols[3]})",
        ") ENGINE=InnoDB;",
    ]
    q = query(rng, t, [cols[0], cols[3]])
    tr = trace(rng)
    body = [rng.choice(INTROS), "", "Schema:", *create, "", "Then:", q, "", *tr, rng.choice(OUTROS)]
    return {"kind": "ddl", "body": body, "block": None, "statements": ["\n".join(create), q], "trace": tr}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for old in OUT.glob("*.json"):
        old.unlink()
    rng = random.Random(20240601)
    for kind, make in (("fenced", fenced), ("prose", prose), ("ddl", ddl)):
        for n in range(10):
            case = make(rng, n)
            case["id"] = f"{kind}-{n + 1:02d}"
            (OUT / f"{case['id']}.json").write_text(json.dumps(case, indent=2) + "\n")


if __name__ == "__main__":
    main()
