#!/usr/bin/env python3
"""Solve an LP file (the subset written by nl2milp) with scipy's HiGHS MILP
interface and write a solution file.

usage: scipy_lp_solver.py MODEL.lp SOLUTION.txt [--dialect plain|columnar]

Indicator rows are rewritten with big-M constants derived from variable
bounds; SOS1/SOS2 sets are rewritten with auxiliary binaries. Both need
finite bounds on the variables involved.
"""

import os
import sys

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np  # noqa: E402
from scipy.optimize import Bounds, LinearConstraint, milp  # noqa: E402

INF = float("inf")
SECTIONS = {
    "maximize": "obj", "maximise": "obj", "max": "obj",
    "minimize": "obj", "minimise": "obj", "min": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "generals": "gen", "general": "gen", "gen": "gen",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "sos": "sos", "end": "end",
}


class LpModel:
    def __init__(self):
        self.sense = 1.0
        self.names = []
        self.index = {}
        self.lower = []
        self.upper = []
        self.kind = []  # "c", "i", "b"
        self.obj = {}
        self.rows = []  # (terms, cmp, rhs)
        self.indicators = []  # (binary, value, terms, cmp, rhs)
        self.sos = []  # (kind, [(var, weight)])
        self.bounded = set()

    def var(self, name):
        if name not in self.index:
            self.index[name] = len(self.names)
            self.names.append(name)
            self.lower.append(0.0)
            self.upper.append(INF)
            self.kind.append("c")
        return self.index[name]


def fail(msg):
    sys.stderr.write("scipy_lp_solver: %s\n" % msg)
    sys.exit(2)


def number(tok):
    t = tok.lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return INF
    if t in ("-inf", "-infinity"):
        return -INF
    return float(tok)


def parse_terms(m, text):
    terms = {}
    sign, coef = 1.0, None
    for tok in text.split():
        if tok == "+":
            continue
        if tok == "-":
            sign = -sign
            continue
        try:
            coef = float(tok)
            continue
        except ValueError:
            pass
        j = m.var(tok)
        terms[j] = terms.get(j, 0.0) + sign * (1.0 if coef is None else coef)
        sign, coef = 1.0, None
    return terms


def parse_row(m, text):
    for op in ("<=", ">=", "=<", "=>", "="):
        if op in text:
            lhs, rhs = text.split(op, 1)
            cmp = {"<=": "<=", "=<": "<=", ">=": ">=", "=>": ">=", "=": "="}[op]
            return parse_terms(m, lhs), cmp, float(rhs)
    fail("row without comparison: %s" % text)


def statements(lines):
    out = []
    for line in lines:
        if out and ":" not in line:
            out[-1] += " " + line.strip()
        else:
            out.append(line.strip())
    return out


def parse_lp(text):
    m = LpModel()
    buckets = []
    for raw in text.splitlines():
        line = raw.split("\\")[0]
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in SECTIONS:
            if SECTIONS[key] == "obj":
                m.sense = -1.0 if key.startswith("max") else 1.0
            buckets.append((SECTIONS[key], []))
            continue
        if not buckets:
            fail("text before the first section")
        buckets[-1][1].append(line)
    for section, lines in buckets:
        if section == "obj":
            body = " ".join(l.strip() for l in lines)
            if ":" in body:
                body = body.split(":", 1)[1]
            m.obj = parse_terms(m, body)
        elif section == "st":
            for stmt in statements(lines):
                name, body = stmt.split(":", 1)
                if "->" in body:
                    cond, row = body.split("->", 1)
                    b, v = cond.split("=")
                    terms, cmp, rhs = parse_row(m, row)
                    m.indicators.append((m.var(b.strip()), int(v), terms, cmp, rhs))
                else:
                    m.rows.append(parse_row(m, body))
        elif section == "bounds":
            for line in lines:
                toks = line.split()
                if len(toks) == 2 and toks[1].lower() == "free":
                    j = m.var(toks[0])
                    m.lower[j], m.upper[j] = -INF, INF
                elif len(toks) == 5:
                    j = m.var(toks[2])
                    m.lower[j], m.upper[j] = number(toks[0]), number(toks[4])
                elif len(toks) == 3:
                    try:
                        v = number(toks[2])
                        name, op = toks[0], toks[1]
                    except ValueError:
                        v = number(toks[0])
                        name, op = toks[2], {"<=": ">=", ">=": "<="}[toks[1]]
                    j = m.var(name)
                    if op == ">=":
                        m.lower[j] = v
                    elif op == "<=":
                        m.upper[j] = v
                    else:
                        m.lower[j] = m.upper[j] = v
                else:
                    fail("bad bound: %s" % line)
                m.bounded.add(m.names[j])
        elif section in ("gen", "bin"):
            for line in lines:
                for name in line.split():
                    j = m.var(name)
                    m.kind[j] = "i" if section == "gen" else "b"
                    if section == "bin" and name not in m.bounded:
                        m.upper[j] = 1.0
        elif section == "sos":
            for stmt in statements(lines):
                _, rest = stmt.split(":", 1)
                kind, members = rest.split("::", 1)
                group = []
                for mem in members.split():
                    v, w = mem.rsplit(":", 1)
                    group.append((m.var(v), float(w)))
                group.sort(key=lambda p: p[1])
                m.sos.append((kind.strip(), group))
    # binaries listed before their bounds section still need [0, 1]
    for j, k in enumerate(m.kind):
        if k == "b" and m.names[j] not in m.bounded:
            m.upper[j] = min(m.upper[j], 1.0)
    return m


def activity_range(m, terms):
    lo = hi = 0.0
    for j, a in terms.items():
        if a >= 0:
            lo += a * m.lower[j]
            hi += a * m.upper[j]
        else:
            lo += a * m.upper[j]
            hi += a * m.lower[j]
    return lo, hi


def build(m, objective=True):
    """Return (c, A rows, row lower, row upper, lower, upper, integrality)."""
    n0 = len(m.names)
    lower, upper = list(m.lower), list(m.upper)
    integ = [0 if k == "c" else 1 for k in m.kind]
    rows, rlo, rhi = [], [], []

    def add(terms, lo, hi):
        rows.append(dict(terms))
        rlo.append(lo)
        rhi.append(hi)

    def new_binary():
        lower.append(0.0)
        upper.append(1.0)
        integ.append(1)
        return len(lower) - 1

    for terms, cmp, rhs in m.rows:
        add(terms, rhs if cmp != "<=" else -INF, rhs if cmp != ">=" else INF)

    for b, value, terms, cmp, rhs in m.indicators:
        lo, hi = activity_range(m, terms)
        ops = ["<=", ">="] if cmp == "=" else [cmp]
        for op in ops:
            big = hi - rhs if op == "<=" else rhs - lo
            if not np.isfinite(big):
                fail("indicator row needs finite bounds on its variables")
            big = max(big, 0.0)
            t = dict(terms)
            if op == "<=":
                # value 1: a.x + M b <= rhs + M ; value 0: a.x - M b <= rhs
                t[b] = t.get(b, 0.0) + (big if value == 1 else -big)
                add(t, -INF, rhs + big if value == 1 else rhs)
            else:
                # value 1: a.x - M b >= rhs - M ; value 0: a.x + M b >= rhs
                t[b] = t.get(b, 0.0) + (-big if value == 1 else big)
                add(t, rhs - big if value == 1 else rhs, INF)

    for kind, group in m.sos:
        zs = []
        if kind == "S1":
            zs = [new_binary() for _ in group]
            owners = [[k] for k in range(len(group))]
        else:
            segs = max(len(group) - 1, 1)
            zs = [new_binary() for _ in range(segs)]
            owners = [[s for s in (k - 1, k) if 0 <= s < segs] for k in range(len(group))]
        add({z: 1.0 for z in zs}, -INF, 1.0)
        for k, (j, _) in enumerate(group):
            if not (np.isfinite(m.lower[j]) and np.isfinite(m.upper[j])):
                fail("SOS member %s needs finite bounds" % m.names[j])
            up = {j: 1.0}
            for s in owners[k]:
                up[zs[s]] = up.get(zs[s], 0.0) - m.upper[j]
            add(up, -INF, 0.0)
            down = {j: 1.0}
            for s in owners[k]:
                down[zs[s]] = down.get(zs[s], 0.0) - m.lower[j]
            add(down, 0.0, INF)

    n = len(lower)
    c = np.zeros(n)
    if objective:
        for j, a in m.obj.items():
            c[j] = m.sense * a
    A = np.zeros((len(rows), n))
    for i, r in enumerate(rows):
        for j, a in r.items():
            A[i, j] += a
    return c, A, np.array(rlo), np.array(rhi), np.array(lower), np.array(upper), np.array(integ), n0


def run(m, objective=True):
    c, A, rlo, rhi, lo, hi, integ, n0 = build(m, objective)
    cons = [LinearConstraint(A, rlo, rhi)] if len(A) else []
    return milp(c, constraints=cons, bounds=Bounds(lo, hi), integrality=integ), n0


def main(argv):
    args = [a for a in argv[1:] if not a.startswith("--")]
    dialect = "plain"
    if "--dialect" in argv:
        dialect = argv[argv.index("--dialect") + 1]
        args = [a for a in args if a != dialect]
    if len(args) != 2:
        fail("usage: scipy_lp_solver.py MODEL.lp SOLUTION.txt [--dialect plain|columnar]")
    with open(args[0]) as f:
        m = parse_lp(f.read())

    res, n0 = run(m)
    status, x = "Optimal", None
    if res.status == 0 and res.x is not None:
        x = [float(v) for v in res.x[:n0]]
    else:
        probe, _ = run(m, objective=False)
        status = "Unbounded" if probe.status == 0 else "Infeasible"

    if x is not None:
        for j in range(n0):
            if m.kind[j] != "c" and abs(x[j] - round(x[j])) <= 1e-6:
                x[j] = float(round(x[j]))
            if x[j] == 0.0:
                x[j] = 0.0
        obj = sum(a * x[j] for j, a in sorted(m.obj.items()))
    else:
        x, obj = [0.0] * n0, 0.0

    with open(args[1], "w") as f:
        if dialect == "columnar":
            f.write("%s - objective value %.8f\n" % (status, obj))
            for j, name in enumerate(m.names):
                f.write("%7d %-24s %22s %22s\n" % (j, name, repr(x[j]), "0"))
        else:
            f.write("%s\nobj %r\n" % (status, obj))
            for j, name in enumerate(m.names):
                f.write("%s %r\n" % (name, x[j]))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
