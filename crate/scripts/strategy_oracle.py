#!/usr/bin/env python3
"""Brute-force reference for the strategy comparison on the fixture sample.

Re-derives, without the Rust code, which sample cases end executable and
which keep their semantic anchors under each strategy:

  F    feedback repairs, adopted unconditionally, up to the budget
  S    one blind repair, adopted only if it keeps the anchors
  F+S  feedback repairs, adopted only if they keep the anchors

The backend is modelled by the regex rules of fixtures/strategy/backend.toml
(statements no rule matches succeed) and the model by the contains/excludes
rules of fixtures/client/script.toml. Prints one line per mode plus the
per-case table. Run from the repository root.
"""

import re
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
BETA = 0.4
MAX_ITERS = 5

FEEDBACK = "Runtime feedback:"
BLIND = "Make the script executable."
REJECTED = "Your previous repair was rejected"

TOKEN = re.compile(r"'(?:[^']|'')*'|\"[^\"]*\"|`[^`]*`|\d+(?:\.\d+)?|[A-Za-z_@][\w@$]*|<=|>=|<>|!=|\|\||[^\s\w]")
TABLE_AFTER = {"FROM", "JOIN", "INTO", "UPDATE", "TABLE"}
KEY_OPS = ["SELECT", "INSERT", "UPDATE", "DELETE", "CREATE", "JOIN", "WHERE", "UNION", "HAVING", "LIKE", "IN"]


def load(path):
    with open(ROOT / path, "rb") as f:
        return tomllib.load(f)


def tokens(stmts):
    out = []
    for s in stmts:
        for t in TOKEN.findall(s.rstrip().rstrip(";")):
            out.append(t.upper() if re.match(r"[A-Za-z_]", t) else t)
        out.append(";")
    return out


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def tables(stmts):
    found = set()
    for s in stmts:
        toks = tokens([s])
        for i, t in enumerate(toks[:-1]):
            nxt = toks[i + 1]
            if t in TABLE_AFTER and re.match(r"[A-Z_]", nxt) and nxt not in {"SELECT", "TABLE", "IF"}:
                found.add(nxt.lower())
    return found


def key_ops(stmts):
    counts = {}
    for s in stmts:
        for t in tokens([s]):
            if t in KEY_OPS:
                counts[t] = counts.get(t, 0) + 1
    return counts


def keeps_anchors(raw, cand):
    ta, tb = tokens(raw), tokens(cand)
    distance = levenshtein(ta, tb) / max(len(ta), len(tb), 1)
    need, got = key_ops(raw), key_ops(cand)
    ops_ok = all(got.get(k, 0) >= n for k, n in need.items())
    return tables(raw) <= tables(cand) and ops_ok and distance <= BETA


class Backend:
    def __init__(self, program):
        self.rules = [(re.compile(r["pattern"], re.I), r["result"]) for r in program.get("rule", [])]

    def runs_clean(self, stmts):
        for s in stmts:
            s = " ".join(s.split())
            for pat, result in self.rules:
                if pat.search(s):
                    if result["kind"] != "ok":
                        return False
                    break
        return True


class Model:
    def __init__(self, script):
        self.rules = script.get("rule", [])

    def repair(self, case_id, marker, rejected):
        request = f"Repair target: {case_id}\n{marker}\n" + (REJECTED if rejected else "")
        for r in self.rules:
            if all(c in request for c in r.get("contains", [])) and not any(e in request for e in r.get("excludes", [])):
                return parse_envelope(r["response"])
        return None

    def feedback(self, case_id, rejected):
        return self.repair(case_id, FEEDBACK, rejected)

    def blind(self, case_id):
        return self.repair(case_id, BLIND, False)


def parse_envelope(text):
    lines = text.strip().splitlines()
    body = lines[lines.index("```envelope") + 1:]
    body = body[: body.index("```")]
    if not body or body[0].strip() != "STATEMENTS:":
        return None
    return [l.strip() for l in body[1:] if l.strip() and not l.startswith(("EXPECTED:", "RENAME:"))]


def run_loop(case_id, raw, backend, model, gated):
    current = raw
    rejected = False
    for _ in range(MAX_ITERS):
        if backend.runs_clean(current):
            return True, current
        cand = model.feedback(case_id, rejected)
        if cand is None:
            continue
        if not gated or keeps_anchors(raw, cand):
            current, rejected = cand, False
        else:
            rejected = True
    return backend.runs_clean(current) and not gated, current


def mode_f(case_id, raw, backend, model):
    ok, final = run_loop(case_id, raw, backend, model, gated=False)
    return ok, keeps_anchors(raw, final)


def mode_fs(case_id, raw, backend, model):
    ok, final = run_loop(case_id, raw, backend, model, gated=True)
    return ok, keeps_anchors(raw, final)


def mode_s(case_id, raw, backend, model):
    if backend.runs_clean(raw):
        return True, True
    cand = model.blind(case_id)
    if cand is not None and keeps_anchors(raw, cand):
        return backend.runs_clean(cand), True
    return False, True


def main():
    sample = load("fixtures/strategy/sample.toml")["case"]
    backend = Backend(load("fixtures/strategy/backend.toml"))
    model = Model(load("fixtures/client/script.toml"))
    modes = [("F", mode_f), ("S", mode_s), ("F+S", mode_fs)]
    per_case = {}
    for name, fn in modes:
        per_case[name] = [fn(c["report_id"], [s.rstrip(";") for s in c["statements"]], backend, model) for c in sample]
    n = len(sample)
    for name, _ in modes:
        ex = sum(1 for e, _ in per_case[name] if e)
        rich = sum(1 for _, r in per_case[name] if r)
        print(f"{name:<4} executable {ex}/{n} = {ex / n:.4f}  richness {rich}/{n} = {rich / n:.4f}")
    print()
    print("case      " + "  ".join(f"{m:>5}" for m, _ in modes))
    for i, c in enumerate(sample):
        cells = []
        for name, _ in modes:
            e, r = per_case[name][i]
            cells.append(("E" if e else "-") + ("R" if r else "-"))
        print(f"{c['report_id']:<9} " + "  ".join(f"{x:>5}" for x in cells))
    return 0


if __name__ == "__main__":
    sys.exit(main())
