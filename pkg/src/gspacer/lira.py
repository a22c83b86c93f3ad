"""Feasibility of conjunctions of linear constraints over mixed Int/Real.

This is the theory core of the bundled SMT server: a general simplex over
exact rationals for the relaxation, branch-and-bound for integrality, and a
complete Cooper-style elimination fallback for the rare conjunctions where
plain branch-and-bound would not terminate.  Everything is exact
(``fractions.Fraction``); no floating point anywhere.

A constraint is ``sum(coeffs) <= const`` (non-strict).  Strict inequalities
never reach this layer: over the integers they are tightened upstream, and
this package's own client never emits strict comparisons over reals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

INT = "Int"
REAL = "Real"

BB_NODE_CAP = 400


@dataclass
class Constraint:
    """sum(coeffs[v] * v) <= const, tagged with source literal ids."""

    coeffs: dict[str, Fraction]
    const: Fraction
    srcs: frozenset[int]


def make_constraint(
    coeffs: Mapping[str, Fraction | int],
    const: Fraction | int,
    src: int | frozenset[int] = frozenset(),
) -> Constraint:
    srcs = frozenset([src]) if isinstance(src, int) else frozenset(src)
    cs = {v: Fraction(c) for v, c in coeffs.items() if c != 0}
    return Constraint(cs, Fraction(const), srcs)


def tighten(c: Constraint, var_sorts: Mapping[str, str]) -> Constraint:
    """Canonicalize: integer primitive coefficients; floor pure-int bounds."""
    if not c.coeffs:
        return c
    denom = math.lcm(*[x.denominator for x in c.coeffs.values()])
    coeffs = {v: x * denom for v, x in c.coeffs.items()}
    const = c.const * denom
    g = math.gcd(*[abs(int(x)) for x in coeffs.values()])
    if g > 1:
        coeffs = {v: x / g for v, x in coeffs.items()}
        const = const / g
    if all(var_sorts.get(v, INT) == INT for v in coeffs):
        const = Fraction(math.floor(const))
    return Constraint(coeffs, const, c.srcs)


# ---------------------------------------------------------------------------
# General simplex (Dutertre / de Moura style) over exact rationals.


class _Simplex:
    def __init__(self) -> None:
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.rows: dict[int, dict[int, Fraction]] = {}  # basic -> linear form
        self.lo: list[Optional[Fraction]] = []
        self.hi: list[Optional[Fraction]] = []
        self.lo_src: list[frozenset[int]] = []
        self.hi_src: list[frozenset[int]] = []
        self.beta: list[Fraction] = []
        self.slack_of: dict[tuple, int] = {}
        self.conflict: Optional[frozenset[int]] = None

    def var(self, name: str) -> int:
        if name not in self.index:
            self.index[name] = len(self.names)
            self.names.append(name)
            self.lo.append(None)
            self.hi.append(None)
            self.lo_src.append(frozenset())
            self.hi_src.append(frozenset())
            self.beta.append(Fraction(0))
        return self.index[name]

    def add(self, con: Constraint) -> None:
        """Assert coeffs <= const as a bound on (a slack for) its term."""
        if self.conflict is not None:
            return
        if not con.coeffs:
            if con.const < 0:
                self.conflict = con.srcs
            return
        items = sorted(con.coeffs.items())
        denom = math.lcm(*[c.denominator for _, c in items])
        ints = [(v, int(c * denom)) for v, c in items]
        g = math.gcd(*[abs(c) for _, c in ints])
        ints = [(v, c // g) for v, c in ints]
        flip = ints[0][1] < 0
        if flip:
            ints = [(v, -c) for v, c in ints]
        bound = con.const * denom / g
        if len(ints) == 1 and ints[0][1] == 1:
            xi = self.var(ints[0][0])
        else:
            key = tuple(ints)
            if key in self.slack_of:
                xi = self.slack_of[key]
            else:
                xi = self.var(f".s{len(self.slack_of)}")
                self.slack_of[key] = xi
                row = {self.var(v): Fraction(c) for v, c in ints}
                self.rows[xi] = row
                self.beta[xi] = self._row_value(row)
        if flip:
            self._assert_lower(xi, -bound, con.srcs)
        else:
            self._assert_upper(xi, bound, con.srcs)

    def _row_value(self, row: dict[int, Fraction]) -> Fraction:
        return sum((c * self.beta[j] for j, c in row.items()), Fraction(0))

    def _assert_upper(self, i: int, b: Fraction, srcs: frozenset[int]) -> None:
        if self.hi[i] is not None and self.hi[i] <= b:
            return
        if self.lo[i] is not None and b < self.lo[i]:
            self.conflict = srcs | self.lo_src[i]
            return
        self.hi[i] = b
        self.hi_src[i] = srcs
        if i not in self.rows and self.beta[i] > b:
            self._update_nonbasic(i, b)

    def _assert_lower(self, i: int, b: Fraction, srcs: frozenset[int]) -> None:
        if self.lo[i] is not None and self.lo[i] >= b:
            return
        if self.hi[i] is not None and b > self.hi[i]:
            self.conflict = srcs | self.hi_src[i]
            return
        self.lo[i] = b
        self.lo_src[i] = srcs
        if i not in self.rows and self.beta[i] < b:
            self._update_nonbasic(i, b)

    def _update_nonbasic(self, i: int, v: Fraction) -> None:
        delta = v - self.beta[i]
        self.beta[i] = v
        for b, row in self.rows.items():
            c = row.get(i)
            if c:
                self.beta[b] += c * delta

    def _pivot(self, b: int, j: int) -> None:
        row = self.rows.pop(b)
        a = row[j]
        new = {b: Fraction(1) / a}
        for k, c in row.items():
            if k != j:
                val = -c / a
                if val != 0:
                    new[k] = val
        for orow in self.rows.values():
            c = orow.pop(j, None)
            if c:
                for k, ck in new.items():
                    nv = orow.get(k, Fraction(0)) + c * ck
                    if nv == 0:
                        orow.pop(k, None)
                    else:
                        orow[k] = nv
        self.rows[j] = new

    def check(self) -> tuple[str, Optional[frozenset[int]]]:
        if self.conflict is not None:
            return "unsat", self.conflict
        while True:
            cand = None
            for b in sorted(self.rows):
                if self.lo[b] is not None and self.beta[b] < self.lo[b]:
                    cand = (b, True)
                    break
                if self.hi[b] is not None and self.beta[b] > self.hi[b]:
                    cand = (b, False)
                    break
            if cand is None:
                return "sat", None
            b, increase = cand
            row = self.rows[b]
            target = self.lo[b] if increase else self.hi[b]
            assert target is not None
            pick = None
            for j in sorted(row):
                c = row[j]
                if increase:
                    ok = (c > 0 and (self.hi[j] is None or self.beta[j] < self.hi[j])) or (
                        c < 0 and (self.lo[j] is None or self.beta[j] > self.lo[j])
                    )
                else:
                    ok = (c > 0 and (self.lo[j] is None or self.beta[j] > self.lo[j])) or (
                        c < 0 and (self.hi[j] is None or self.beta[j] < self.hi[j])
                    )
                if ok:
                    pick = j
                    break
            if pick is None:
                core = set(self.lo_src[b] if increase else self.hi_src[b])
                for j, c in row.items():
                    if (c > 0) == increase:
                        core |= self.hi_src[j]
                    else:
                        core |= self.lo_src[j]
                return "unsat", frozenset(core)
            # Standard pivot-and-update: move beta so that b meets its bound.
            theta = (target - self.beta[b]) / row[pick]
            self.beta[b] = target
            self.beta[pick] += theta
            for basic, brow in self.rows.items():
                if basic != b:
                    c = brow.get(pick)
                    if c:
                        self.beta[basic] += c * theta
            self._pivot(b, pick)

    def model(self) -> dict[str, Fraction]:
        return {
            name: self.beta[i]
            for name, i in self.index.items()
            if not name.startswith(".s")
        }


def _solve_relaxation(
    cons: Sequence[Constraint],
) -> tuple[str, dict[str, Fraction] | frozenset[int] | None]:
    s = _Simplex()
    for c in cons:
        s.add(c)
    verdict, core = s.check()
    if verdict == "unsat":
        return "unsat", core
    return "sat", s.model()


# ---------------------------------------------------------------------------
# Integer equality preprocessing: gcd-based infeasibility detection.
# Inputs are tightened constraints (primitive integer coefficients).


def _equality_gcd_conflict(
    cons: Sequence[Constraint], var_sorts: Mapping[str, str]
) -> Optional[frozenset[int]]:
    uppers: dict[tuple, tuple[Fraction, frozenset[int]]] = {}
    lowers: dict[tuple, tuple[Fraction, frozenset[int]]] = {}
    for c in cons:
        if not c.coeffs or any(var_sorts.get(v, INT) != INT for v in c.coeffs):
            continue
        if any(x.denominator != 1 for x in c.coeffs.values()) or c.const.denominator != 1:
            continue
        items = tuple(sorted((v, int(x)) for v, x in c.coeffs.items()))
        if items[0][1] < 0:
            key = tuple((v, -x) for v, x in items)
            best = lowers.get(key)
            if best is None or -c.const > best[0]:
                lowers[key] = (-c.const, c.srcs)
        else:
            key = items
            best = uppers.get(key)
            if best is None or c.const < best[0]:
                uppers[key] = (c.const, c.srcs)
    rows: list[tuple[dict[str, int], int, frozenset[int]]] = []
    for key, (ub, us) in uppers.items():
        low = lowers.get(key)
        if low is None:
            continue
        lb, ls = low
        if lb == ub:
            rows.append(({v: x for v, x in key}, int(ub), us | ls))
    # Gaussian elimination over the integers: substitute unit-coefficient
    # variables, gcd-test what remains.
    progressed = True
    while progressed:
        progressed = False
        for i, (coeffs, rhs, srcs) in enumerate(rows):
            unit = next((v for v, a in sorted(coeffs.items()) if abs(a) == 1), None)
            if unit is None:
                continue
            a = coeffs[unit]
            rest = {v: x for v, x in coeffs.items() if v != unit}
            # unit = a * (rhs - rest)
            for k, (oc, orhs, osrcs) in enumerate(rows):
                if k == i:
                    continue
                f = oc.get(unit)
                if not f:
                    continue
                nc = {v: x for v, x in oc.items() if v != unit}
                for v, x in rest.items():
                    nv = nc.get(v, 0) - f * a * x
                    if nv == 0:
                        nc.pop(v, None)
                    else:
                        nc[v] = nv
                rows[k] = (nc, orhs - f * a * rhs, osrcs | srcs)
                progressed = True
            rows[i] = ({}, 0, srcs)
    for coeffs, rhs, srcs in rows:
        if not coeffs:
            if rhs != 0:
                return srcs
            continue
        g = math.gcd(*[abs(a) for a in coeffs.values()])
        if g > 1 and rhs % g != 0:
            return srcs
    return None


# ---------------------------------------------------------------------------
# Branch and bound.


def _branch_and_bound(
    cons: list[Constraint],
    var_sorts: Mapping[str, str],
    budget: list[int],
) -> tuple[str, dict[str, Fraction] | frozenset[int] | None]:
    verdict, res = _solve_relaxation(cons)
    if verdict == "unsat":
        return "unsat", res
    model = res
    assert isinstance(model, dict)
    frac_var = None
    for v in sorted(model):
        if var_sorts.get(v, INT) == INT and model[v].denominator != 1:
            frac_var = v
            break
    if frac_var is None:
        return "sat", model
    if budget[0] <= 0:
        return "cap", None
    budget[0] -= 1
    val = model[frac_var]
    below = cons + [make_constraint({frac_var: 1}, math.floor(val))]
    r1, m1 = _branch_and_bound(below, var_sorts, budget)
    if r1 in ("sat", "cap"):
        return r1, m1
    above = cons + [make_constraint({frac_var: -1}, -math.ceil(val))]
    r2, m2 = _branch_and_bound(above, var_sorts, budget)
    if r2 in ("sat", "cap"):
        return r2, m2
    return "unsat", None


# ---------------------------------------------------------------------------
# Complete fallback: Fourier-Motzkin over the reals, Cooper over the ints.
# Integer constraints are (coeffs, const) with semantics
#   le:  sum + const <= 0          div:  d | (sum + const)


@dataclass
class _ICon:
    kind: str  # "le" | "div"
    coeffs: dict[str, int]
    const: int
    div: int = 0


def _icon_scale(c: _ICon, k: int) -> _ICon:
    assert k > 0
    return _ICon(
        c.kind,
        {v: a * k for v, a in c.coeffs.items()},
        c.const * k,
        c.div * k if c.kind == "div" else 0,
    )


def _fm_eliminate_real(cons: list[Constraint], real_vars: list[str]):
    """Eliminate real vars by Fourier-Motzkin; mutates ``cons``.

    Returns per-variable (lowers, uppers) bound expressions for model
    reconstruction, or None on a ground conflict.
    """
    recon = []
    for r in real_vars:
        lowers: list[tuple[Fraction, dict[str, Fraction]]] = []
        uppers: list[tuple[Fraction, dict[str, Fraction]]] = []
        rest: list[Constraint] = []
        lower_srcs: list[frozenset[int]] = []
        upper_srcs: list[frozenset[int]] = []
        for c in cons:
            a = c.coeffs.get(r, Fraction(0))
            if a == 0:
                rest.append(c)
                continue
            # a*r + rest <= const  ->  r <=/>= const/a - rest/a
            expr = {v: -x / a for v, x in c.coeffs.items() if v != r}
            bound = c.const / a
            if a > 0:
                uppers.append((bound, expr))
                upper_srcs.append(c.srcs)
            else:
                lowers.append((bound, expr))
                lower_srcs.append(c.srcs)
        new = list(rest)
        for (lb, le), ls in zip(lowers, lower_srcs):
            for (ub, ue), us in zip(uppers, upper_srcs):
                coeffs = dict(le)
                for v, x in ue.items():
                    coeffs[v] = coeffs.get(v, Fraction(0)) - x
                con = make_constraint(coeffs, ub - lb, ls | us)
                if not con.coeffs and con.const < 0:
                    return None
                new.append(con)
        recon.append((r, lowers, uppers))
        cons[:] = new
    return recon


def _cooper_sat(cons: list[_ICon], order: list[str]) -> Optional[dict[str, int]]:
    if not order:
        for c in cons:
            assert not c.coeffs
            if c.kind == "le" and c.const > 0:
                return None
            if c.kind == "div" and c.const % c.div != 0:
                return None
        return {}
    x, rest_vars = order[0], order[1:]
    involved = [c for c in cons if c.coeffs.get(x)]
    others = [c for c in cons if not c.coeffs.get(x)]
    if not involved:
        m = _cooper_sat(others, rest_vars)
        if m is None:
            return None
        m[x] = 0
        return m
    lam = math.lcm(*[abs(c.coeffs[x]) for c in involved])
    divs = [lam]
    lowers: list[tuple[dict[str, int], int]] = []  # w >= e + k
    uppers: list[tuple[dict[str, int], int]] = []  # w + e + k <= 0
    dcons: list[tuple[int, int, dict[str, int], int]] = []
    for c in involved:
        s = _icon_scale(c, lam // abs(c.coeffs[x]))
        a = s.coeffs[x]
        e = {v: n for v, n in s.coeffs.items() if v != x}
        if s.kind == "div":
            dcons.append((s.div, 1 if a > 0 else -1, e, s.const))
            divs.append(s.div)
        elif a > 0:  # w + e + k <= 0
            uppers.append((e, s.const))
        else:  # -w + e + k <= 0, i.e. w >= e + k
            lowers.append((e, s.const))
    delta = math.lcm(*divs)

    def try_case(repl: dict[str, int], rconst: int) -> Optional[dict[str, int]]:
        """Recurse with w := repl + rconst substituted everywhere."""
        new = list(others)
        for e, k in uppers:
            coeffs = dict(e)
            for v, n in repl.items():
                coeffs[v] = coeffs.get(v, 0) + n
            new.append(_ICon("le", {v: n for v, n in coeffs.items() if n}, k + rconst))
        for e, k in lowers:
            coeffs = {v: -n for v, n in repl.items()}
            for v, n in e.items():
                coeffs[v] = coeffs.get(v, 0) + n
            new.append(_ICon("le", {v: n for v, n in coeffs.items() if n}, k - rconst))
        for d, sign, e, k in dcons:
            coeffs = {v: sign * n for v, n in repl.items()}
            for v, n in e.items():
                coeffs[v] = coeffs.get(v, 0) + n
            new.append(
                _ICon("div", {v: n for v, n in coeffs.items() if n}, k + sign * rconst, d)
            )
        new.append(_ICon("div", dict(repl), rconst, lam))  # lam | w
        m = _cooper_sat(new, rest_vars)
        if m is None:
            return None
        wval = sum(n * m[v] for v, n in repl.items()) + rconst
        assert wval % lam == 0
        m[x] = wval // lam
        return m

    if lowers:
        for e, k in lowers:
            for d in range(delta):
                m = try_case(dict(e), k + d)
                if m is not None:
                    return m
        return None
    # No lower bounds on w: pick a residue class and go low enough.
    for d in range(delta):
        if d % lam != 0:
            continue  # need lam | w and delta % lam == 0
        new = list(others)
        for dd, sign, e, k in dcons:
            new.append(_ICon("div", dict(e), k + sign * d, dd))
        m = _cooper_sat(new, rest_vars)
        if m is None:
            continue
        wval = d
        for e, k in uppers:
            val = sum(n * m[v] for v, n in e.items()) + k
            while wval + val > 0:  # need w + e + k <= 0
                wval -= delta
        assert wval % lam == 0
        m[x] = wval // lam
        return m
    return None


def _decide_complete(
    cons: list[Constraint], var_sorts: Mapping[str, str]
) -> tuple[str, Optional[dict[str, Fraction]]]:
    """Complete decision for a mixed conjunction; model on sat."""
    work = [Constraint(dict(c.coeffs), c.const, c.srcs) for c in cons]
    all_vars = sorted({v for c in work for v in c.coeffs})
    real_vars = [v for v in all_vars if var_sorts.get(v, INT) == REAL]
    recon = _fm_eliminate_real(work, real_vars)
    if recon is None:
        return "unsat", None
    int_cons: list[_ICon] = []
    for c in work:
        if not c.coeffs:
            if c.const < 0:
                return "unsat", None
            continue
        denom = math.lcm(
            c.const.denominator, *[x.denominator for x in c.coeffs.values()]
        )
        coeffs = {v: int(x * denom) for v, x in c.coeffs.items()}
        int_cons.append(_ICon("le", coeffs, -int(c.const * denom)))
    int_vars = sorted({v for c in int_cons for v in c.coeffs})
    m = _cooper_sat(int_cons, int_vars)
    if m is None:
        return "unsat", None
    model: dict[str, Fraction] = {v: Fraction(val) for v, val in m.items()}
    for v in all_vars:
        if var_sorts.get(v, INT) == INT:
            model.setdefault(v, Fraction(0))
    for r, lowers, uppers in reversed(recon):
        lo = None
        hi = None
        for b, e in lowers:
            val = b + sum(
                (x * model.get(v, Fraction(0)) for v, x in e.items()), Fraction(0)
            )
            lo = val if lo is None or val > lo else lo
        for b, e in uppers:
            val = b + sum(
                (x * model.get(v, Fraction(0)) for v, x in e.items()), Fraction(0)
            )
            hi = val if hi is None or val < hi else hi
        if lo is None and hi is None:
            model[r] = Fraction(0)
        elif lo is None:
            model[r] = hi  # type: ignore[assignment]
        elif hi is None:
            model[r] = lo
        else:
            model[r] = (lo + hi) / 2
    return "sat", model


# ---------------------------------------------------------------------------
# Public entry point.


def check_conjunction(
    cons: Sequence[Constraint], var_sorts: Mapping[str, str]
) -> tuple[str, dict[str, Fraction] | frozenset[int] | None]:
    """Decide a conjunction; returns ('sat', model) or ('unsat', core)."""
    tightened = [tighten(c, var_sorts) for c in cons]
    core = _equality_gcd_conflict(tightened, var_sorts)
    if core is not None:
        return "unsat", core
    budget = [BB_NODE_CAP]
    verdict, res = _branch_and_bound(list(tightened), var_sorts, budget)
    if verdict == "sat":
        return "sat", res
    if verdict == "unsat" and res is not None:
        return "unsat", res
    # B&B proved integer infeasibility without a usable core, or hit the node
    # cap: decide completely, then derive a core by deletion.
    verdict2, model = _decide_complete(list(tightened), var_sorts)
    if verdict2 == "sat":
        assert model is not None
        return "sat", model
    all_srcs = frozenset().union(*[c.srcs for c in cons]) if cons else frozenset()
    return "unsat", _minimize_core(list(tightened), var_sorts, all_srcs)


def _minimize_core(
    cons: list[Constraint], var_sorts: Mapping[str, str], srcs: frozenset[int]
) -> frozenset[int]:
    if len(srcs) > 16:
        return srcs
    core = set(srcs)
    for s in sorted(srcs):
        candidate = core - {s}
        subset = [c for c in cons if c.srcs <= candidate]
        verdict, _ = _decide_complete(subset, var_sorts)
        if verdict == "unsat":
            core = candidate
    return frozenset(core)
