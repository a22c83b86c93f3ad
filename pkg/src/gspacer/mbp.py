"""Model-based projection for linear integer (and, internally, rational)
arithmetic.

``project`` eliminates a set of constants from a cube under a model:
rational-sorted constants go first by virtual substitution chosen by the
model, denominators are cleared atom by atom, then integer constants are
eliminated Cooper-style with the model picking the greatest lower bound and
the residue class.  The result is a cube over the remaining constants that
the model satisfies and that implies the existential projection of the body.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .formula import (
    AndF,
    Constant,
    Cube,
    Divides,
    Formula,
    Ineq,
    LinearTerm,
    NotF,
    OrF,
    cube,
    evaluate_formula,
    normalize_divides,
    normalize_ineq,
    term,
    LE,
)

ModelLike = Mapping[Constant, Fraction]


@dataclass
class _Row:
    """sum(coeffs) <= bound with exact rational entries."""

    coeffs: dict[Constant, Fraction]
    bound: Fraction

    def value(self, model: ModelLike) -> Fraction:
        return sum(
            (c * Fraction(model[v]) for v, c in self.coeffs.items()), Fraction(0)
        )

    def key(self):
        return (
            tuple(sorted((v.name, c) for v, c in self.coeffs.items())),
            self.bound,
        )


@dataclass
class _Div:
    """d | (sum(coeffs) + shift)"""

    d: int
    coeffs: dict[Constant, int]
    shift: int

    def value(self, model: ModelLike) -> Fraction:
        return sum(
            (Fraction(c) * Fraction(model[v]) for v, c in self.coeffs.items()),
            Fraction(self.shift),
        )


class ProjectionError(ValueError):
    pass


def _rows_of(body: Cube) -> tuple[list[_Row], list[_Div]]:
    rows, divs = [], []
    for lit in body.literals:
        if isinstance(lit, Ineq):
            assert isinstance(lit.bound, int)
            rows.append(
                _Row({v: Fraction(n) for v, n in lit.term.coeffs}, Fraction(lit.bound))
            )
        else:
            divs.append(
                _Div(lit.divisor, {v: n for v, n in lit.term.coeffs}, -lit.remainder)
            )
    return rows, divs


def _substitute_row(row: _Row, v: Constant, expr: dict[Constant, Fraction], const: Fraction) -> _Row:
    a = row.coeffs.get(v)
    if not a:
        return row
    coeffs = {u: c for u, c in row.coeffs.items() if u != v}
    for u, c in expr.items():
        nc = coeffs.get(u, Fraction(0)) + a * c
        if nc == 0:
            coeffs.pop(u, None)
        else:
            coeffs[u] = nc
    return _Row(coeffs, row.bound - a * const)


def _eliminate_real(v: Constant, rows: list[_Row], divs: list[_Div], model: ModelLike) -> list[_Row]:
    assert all(v not in d.coeffs for d in divs), "divisibility over a rational var"
    with_v = [r for r in rows if r.coeffs.get(v)]
    rest = [r for r in rows if not r.coeffs.get(v)]
    if not with_v:
        return rows
    # Equality pair: substitute exactly.
    by_key: dict[tuple, _Row] = {}
    for r in with_v:
        neg_key = (
            tuple(sorted((u.name, -c) for u, c in r.coeffs.items())),
            -r.bound,
        )
        other = by_key.get(neg_key)
        if other is not None:
            a = r.coeffs[v]
            expr = {u: -c / a for u, c in r.coeffs.items() if u != v}
            const = r.bound / a
            return [
                _substitute_row(x, v, expr, const) for x in rows if x is not r and x is not other
            ]
        by_key[r.key()] = r
    lowers, uppers = [], []
    for r in with_v:
        a = r.coeffs[v]
        expr = {u: -c / a for u, c in r.coeffs.items() if u != v}
        const = r.bound / a
        (uppers if a > 0 else lowers).append((expr, const, r))
    if not lowers or not uppers:
        return rest
    # Greatest lower bound under the model; substitute v := glb.
    def val(ec):
        expr, const, _ = ec
        return sum(
            (c * Fraction(model[u]) for u, c in expr.items()), const
        )

    glb = max(lowers, key=lambda ec: (val(ec), ec[2].key()))
    expr, const, glb_row = glb
    out = list(rest)
    for lexpr, lconst, lrow in lowers:
        if lrow is glb_row:
            continue
        out.append(_substitute_row(lrow, v, expr, const))
    for _, _, urow in uppers:
        out.append(_substitute_row(urow, v, expr, const))
    return out


def _eliminate_int(
    v: Constant, rows: list[_Row], divs: list[_Div], model: ModelLike
) -> tuple[list[_Row], list[_Div]]:
    with_v = [r for r in rows if r.coeffs.get(v)]
    divs_v = [d for d in divs if d.coeffs.get(v)]
    rest_rows = [r for r in rows if not r.coeffs.get(v)]
    rest_divs = [d for d in divs if not d.coeffs.get(v)]
    if not with_v and not divs_v:
        return rows, divs
    # Direct substitution through a unit-coefficient equality pair.
    by_key: dict[tuple, _Row] = {}
    for r in with_v:
        a = r.coeffs[v]
        if a in (1, -1):
            neg_key = (
                tuple(sorted((u.name, -c) for u, c in r.coeffs.items())),
                -r.bound,
            )
            other = by_key.get(neg_key)
            if other is not None:
                expr = {u: -c / a for u, c in r.coeffs.items() if u != v}
                const = r.bound / a
                new_rows = [
                    _substitute_row(x, v, expr, const)
                    for x in rows
                    if x is not r and x is not other
                ]
                iexpr = {u: int(c) for u, c in expr.items()}
                new_divs = []
                for d in divs:
                    c = d.coeffs.get(v, 0)
                    if not c:
                        new_divs.append(d)
                        continue
                    coeffs = {u: x for u, x in d.coeffs.items() if u != v}
                    for u, x in iexpr.items():
                        coeffs[u] = coeffs.get(u, 0) + c * x
                    assert const.denominator == 1
                    new_divs.append(
                        _Div(d.d, {u: x for u, x in coeffs.items() if x}, d.shift + c * int(const))
                    )
                return new_rows, new_divs
        by_key[r.key()] = r
    # Cooper-style elimination on w = lam * v.
    lam = 1
    for r in with_v:
        lam = math.lcm(lam, abs(int(r.coeffs[v])))
    for d in divs_v:
        lam = math.lcm(lam, abs(d.coeffs[v]))
    lowers: list[tuple[dict[Constant, int], int]] = []  # w >= e + k
    uppers: list[tuple[dict[Constant, int], int]] = []  # w <= e + k
    wdivs: list[tuple[int, int, dict[Constant, int], int]] = []  # d | (s*w + e + k)
    for r in with_v:
        a = int(r.coeffs[v])
        m = lam // abs(a)
        denom = math.lcm(
            r.bound.denominator, *[c.denominator for c in r.coeffs.values()]
        )
        # Scale to integers first (bodies are integral after clearing).
        assert denom == 1, "integer phase saw fractional row"
        e = {u: int(c) * m for u, c in r.coeffs.items() if u != v}
        b = int(r.bound) * m
        if a > 0:
            uppers.append((e, b))  # w + e <= b  ->  w <= -e + b
        else:
            lowers.append((e, b))  # -w + e <= b  ->  w >= e - b
    for d in divs_v:
        a = d.coeffs[v]
        m = lam // abs(a)
        e = {u: c * m for u, c in d.coeffs.items() if u != v}
        wdivs.append((d.d * m, 1 if a > 0 else -1, e, d.shift * m))
    delta = lam
    for dd, *_ in wdivs:
        delta = math.lcm(delta, dd)
    w0 = Fraction(model[v]) * lam
    assert w0.denominator == 1
    w0 = w0.numerator

    def eval_e(e: dict[Constant, int]) -> Fraction:
        return sum((Fraction(c) * Fraction(model[u]) for u, c in e.items()), Fraction(0))

    out_rows = list(rest_rows)
    out_divs = list(rest_divs)
    if lowers:
        # w >= e - b; the model picks the greatest such bound.
        def lval(eb):
            e, b = eb
            return eval_e(e) - b

        glb = max(lowers, key=lambda eb: (lval(eb), sorted((u.name, c) for u, c in eb[0].items()), eb[1]))
        ge, gb = glb
        gval = lval(glb)
        assert gval.denominator == 1
        offset = int(w0 - gval.numerator) % delta  # w := (ge - gb) + offset
        for e, b in lowers:
            if (e, b) == glb:
                continue
            # e - b <= ge - gb  ->  e - ge <= b - gb
            coeffs = dict(e)
            for u, c in ge.items():
                coeffs[u] = coeffs.get(u, 0) - c
            out_rows.append(_Row({u: Fraction(c) for u, c in coeffs.items() if c}, Fraction(b - gb)))
        for e, b in uppers:
            # (ge - gb + offset) <= -e + b  ->  ge + e <= b + gb - offset
            coeffs = dict(ge)
            for u, c in e.items():
                coeffs[u] = coeffs.get(u, 0) + c
            out_rows.append(
                _Row({u: Fraction(c) for u, c in coeffs.items() if c}, Fraction(b + gb - offset))
            )
        for dd, sign, e, k in wdivs:
            # dd | (sign*(ge - gb + offset) + e + k)
            coeffs = {u: sign * c for u, c in ge.items()}
            for u, c in e.items():
                coeffs[u] = coeffs.get(u, 0) + c
            out_divs.append(
                _Div(dd, {u: c for u, c in coeffs.items() if c}, sign * (offset - gb) + k)
            )
        if lam > 1:
            # lam | w, with w = ge - gb + offset
            out_divs.append(_Div(lam, dict(ge), offset - gb))
    else:
        # No lower bounds: fix the residue class of w from the model.
        t0 = w0 % delta
        for dd, sign, e, k in wdivs:
            out_divs.append(_Div(dd, dict(e), sign * t0 + k))
        if lam > 1 and t0 % lam != 0:
            raise ProjectionError("model violates lam | w")
    return out_rows, out_divs


def _clear_denominators(rows: list[_Row]) -> list[_Row]:
    out = []
    for r in rows:
        denom = math.lcm(
            r.bound.denominator, *[c.denominator for c in r.coeffs.values()]
        ) if r.coeffs else r.bound.denominator
        out.append(
            _Row({u: c * denom for u, c in r.coeffs.items()}, r.bound * denom)
        )
    return out


def project(eliminate: Iterable[Constant], body: Cube, model: ModelLike) -> Cube:
    """MBP: model-preserving under-approximation of exists(eliminate). body."""
    if not body.evaluate(model):
        raise ProjectionError("model does not satisfy the projection body")
    elim = sorted(set(eliminate))
    rows, divs = _rows_of(body)
    reals = [v for v in elim if v.sort == "Real"]
    ints = [v for v in elim if v.sort != "Real"]
    for v in reals:
        rows = _eliminate_real(v, rows, divs, model)
    rows = _clear_denominators(rows)
    for v in ints:
        rows, divs = _eliminate_int(v, rows, divs, model)
    lits = []
    for r in rows:
        assert all(u not in elim for u in r.coeffs)
        denom = math.lcm(
            r.bound.denominator, *[c.denominator for c in r.coeffs.values()]
        ) if r.coeffs else r.bound.denominator
        lhs = term({u: int(c * denom) for u, c in r.coeffs.items()})
        lit = normalize_ineq(LE, lhs, term({}, int(r.bound * denom)))
        lits.append(lit)
    for d in divs:
        assert all(u not in elim for u in d.coeffs)
        nd = normalize_divides(d.d, term(d.coeffs), -d.shift)
        if nd is True:
            continue
        if nd is False:
            raise ProjectionError("projection produced a false divisibility")
        lits.append(nd)
    result = cube(lits)
    if not result.evaluate(model):
        raise ProjectionError("projection lost the model (internal error)")
    return result


def select_implicant(f: Formula, model: ModelLike) -> Cube:
    """The cube of literals of f that are true under the model, chosen along
    a satisfied branch of the or-nodes (first true child wins)."""
    lits = []

    def walk(g: Formula) -> None:
        if isinstance(g, (Ineq, Divides)):
            if not g.evaluate(model):
                raise ProjectionError("model does not satisfy the formula")
            lits.append(g)
            return
        if isinstance(g, AndF):
            for a in g.args:
                walk(a)
            return
        if isinstance(g, OrF):
            for a in g.args:
                if evaluate_formula(a, model):
                    walk(a)
                    return
            raise ProjectionError("model does not satisfy the formula")
        if isinstance(g, NotF):
            raise ProjectionError("negations must be pushed before projection")
        raise TypeError(type(g))

    walk(f)
    return cube(lits)


def project_formula(eliminate: Iterable[Constant], f: Formula, model: ModelLike) -> Cube:
    """Predecessor-style MBP over an arbitrary positive formula."""
    return project(eliminate, select_implicant(f, model), model)
