"""The three LIA-instantiated global guidance rules.

``subsume_cube`` generalizes a set of same-shape cubes into one cube that
over-approximates their union: linear dependencies of the bound vectors via
an exact kernel, one-dimensional bound closure or syntactic convex closure
with fresh rational multipliers, divisibility constraints per independent
column, then a two-phase quantifier approximation (MBP under-approximation
followed by literal dropping until the result over-approximates).

``concretize`` strengthens a pob into a model-preserving under-approximation
that isolates the constants whose pattern coefficients vary across a
cluster.  ``conjecture`` abstracts a pob by dropping the bounded part that a
ladder of increasingly strong lemmas keeps blocking.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from . import linalg, mbp
from .clustering import Cluster
from .formula import (
    Clause,
    Constant,
    Cube,
    Divides,
    Ineq,
    MatrixCube,
    NotF,
    clause_to_formula,
    cube,
    cube_to_formula,
    disj,
    matrix_to_cube,
    term,
    Formula,
)
from .smt import Backend, SolverUnknown


def divisibility_of_column(values: Sequence[int]) -> Optional[tuple[int, int]]:
    """Largest d >= 2 such that all values share a remainder mod d.

    That d is the gcd of the pairwise differences; none when the values are
    all equal (the bound closure already fixes the coordinate) or when only
    d = 1 works.
    """
    assert len(values) >= 2
    d = 0
    for v in values[1:]:
        d = math.gcd(d, abs(v - values[0]))
    if d <= 1:
        return None
    return d, values[0] % d


def _fractions_to_int_row(vec: Sequence[Fraction]) -> list[int]:
    denom = math.lcm(*[x.denominator for x in vec])
    ints = [int(x * denom) for x in vec]
    g = math.gcd(*[abs(x) for x in ints])
    if g > 1:
        ints = [x // g for x in ints]
    return ints


def _eq_literals(t, rhs: int) -> list[Ineq]:
    """t = rhs as the two <= literals (t carries no offset)."""
    return [Ineq(t, rhs), Ineq(t.negate(), -rhs)]


def subsume_cube(mats: Sequence[MatrixCube], backend: Backend) -> Optional[Cube]:
    """Over-approximate the union of same-matrix cubes by one cube."""
    if len(mats) < 2:
        raise ValueError("subsume needs at least two cubes")
    a_matrix = mats[0].matrix
    xs = mats[0].variables
    if any(m.matrix != a_matrix or m.variables != xs for m in mats[1:]):
        raise ValueError("cubes do not share a coefficient matrix")
    n_rows = [list(m.bounds) for m in mats]
    p = len(a_matrix)
    v_consts = [Constant(f"_v{j}") for j in range(p)]

    basis = linalg.kernel_basis(linalg.augment_ones(n_rows))
    lits: list = []
    for y in basis:
        ints = _fractions_to_int_row(y)
        t = term({v_consts[j]: ints[j] for j in range(p)})
        lits.extend(_eq_literals(t, -ints[p]))
    indep = linalg.independent_columns(p, basis)

    alphas: list[Constant] = []
    if len(indep) == 1:
        j = indep[0]
        col = [row[j] for row in n_rows]
        lits.append(Ineq(term({v_consts[j]: -1}), -min(col)))
        lits.append(Ineq(term({v_consts[j]: 1}), max(col)))
    elif len(indep) > 1:
        alphas = [Constant(f"_a{i}", "Real") for i in range(len(mats))]
        for j in indep:
            t = term({alphas[i]: n_rows[i][j] for i in range(len(mats))} | {v_consts[j]: -1})
            lits.extend(_eq_literals(t, 0))
        lits.extend(_eq_literals(term({a: 1 for a in alphas}), 1))
        for a in alphas:
            lits.append(Ineq(term({a: -1}), 0))

    for j in indep:
        dr = divisibility_of_column([row[j] for row in n_rows])
        if dr is not None:
            d, r = dr
            lits.append(Divides(d, term({v_consts[j]: 1}), r))

    for row, vj in zip(a_matrix, v_consts):
        t = term({x: n for x, n in zip(xs, row)} | {vj: -1})
        lits.append(Ineq(t, 0))

    psi = cube(lits)
    union = disj(cube_to_formula(matrix_to_cube(m)) for m in mats)
    model = backend.model_or_none(psi, NotF(union))
    if model is None:
        model = backend.model_or_none(psi)
    if model is None:
        return None
    phi = mbp.project(set(v_consts) | set(alphas), psi, model.values)
    # Drop literals until the projection over-approximates exists(v, a). psi.
    while phi.literals:
        counter = backend.model_or_none(NotF(cube_to_formula(phi)), psi)
        if counter is None:
            return phi
        phi = cube(l for l in phi.literals if l.evaluate(counter.values))
    return None


def subsume_input_of_cluster(cluster: Cluster, backend: Backend) -> Optional[list[MatrixCube]]:
    """The dual of a cluster as same-matrix cubes, with members whose cubes
    are implied by another member removed; None when the negated pattern is
    not of the A.x <= v form or fewer than two cubes remain."""
    form = cluster.pattern.dual_matrix_form()
    if form is None:
        return None
    a_matrix, xs, hole_order = form
    mats: list[MatrixCube] = []
    seen: set[tuple[int, ...]] = set()
    for lemma, sigma in cluster.members:
        bounds = tuple(sigma[h] for h in hole_order)
        if bounds not in seen:
            seen.add(bounds)
            mats.append(MatrixCube(a_matrix, xs, bounds))
    kept: list[MatrixCube] = []
    for i, m in enumerate(mats):
        mi = cube_to_formula(matrix_to_cube(m))
        redundant = False
        for j, other in enumerate(mats):
            if i == j:
                continue
            mj = cube_to_formula(matrix_to_cube(other))
            if backend.entails(mi, mj):
                # contained in another member; for equivalent pairs keep the
                # earlier one
                if not backend.entails(mj, mi) or j < i:
                    redundant = True
                    break
        if not redundant:
            kept.append(m)
    if len(kept) < 2:
        return None
    return kept


def apply_subsume(cluster: Cluster, backend: Backend) -> Optional[Cube]:
    mats = subsume_input_of_cluster(cluster, backend)
    if mats is None:
        return None
    return subsume_cube(mats, backend)


# ---------------------------------------------------------------------------
# Concretize (Alg. 4)


def concretize_lit(lit: Ineq, model, decouple: set[Constant]) -> list[Ineq]:
    """Split sum(n_i x_i) <= b into the non-decoupled part bounded by its
    model value plus one-dimensional bounds for each decoupled constant."""
    out = []
    s_items = [(c, n) for c, n in lit.term.coeffs if c not in decouple]
    if s_items:
        s = term(s_items)
        val = s.evaluate(model)
        assert Fraction(val).denominator == 1
        out.append(Ineq(s, int(val)))
    for c, n in lit.term.coeffs:
        if c in decouple:
            t = term({c: n})
            val = t.evaluate(model)
            assert Fraction(val).denominator == 1
            out.append(Ineq(t, int(val)))
    return out


def rm_subsume(c: Cube, backend: Backend) -> Cube:
    """Drop literals implied by the rest of the conjunction."""
    lits = list(c.literals)
    i = 0
    while i < len(lits):
        rest = lits[:i] + lits[i + 1 :]
        if rest and backend.entails(cube(rest), lits[i]):
            lits.pop(i)
        else:
            i += 1
    return cube(lits)


def concretize(
    pob: Cube,
    partial_blockers: Sequence[Clause],
    decouple: set[Constant],
    backend: Backend,
) -> Optional[Cube]:
    """Model-preserving under-approximation of the pob that isolates the
    constants in ``decouple`` and keeps every other coupling."""
    if pob.has_divides():
        raise ValueError("concretize expects a divisibility-free pob")
    model = backend.model_or_none(
        pob, *[clause_to_formula(l) for l in partial_blockers]
    )
    if model is None:
        return None
    out = []
    for lit in pob.literals:
        assert isinstance(lit, Ineq)
        if set(lit.constants()) & decouple:
            out.extend(concretize_lit(lit, model.values, decouple))
        else:
            out.append(lit)
    return rm_subsume(cube(out), backend)


# ---------------------------------------------------------------------------
# Conjecture (section on abstracting stuck pobs)


def conjecture(
    pob: Cube,
    lemmas: Sequence[Clause],
    reach: Formula,
    backend: Backend,
) -> Optional[Cube]:
    """Abstract the pob to alpha = pob minus its bounded literal when every
    cluster lemma has the shape bg or (term >= b_i) with b_i above the pob's
    bound and bg blocking part of the pob; None when any condition fails."""
    if len(lemmas) < 2:
        return None
    for lit in pob.literals:
        if not isinstance(lit, Ineq):
            continue
        residuals = []
        ok = True
        for cl in lemmas:
            found = None
            for m in cl.cube.literals:
                if isinstance(m, Ineq) and m.term == lit.term and m.bound >= lit.bound:
                    found = m
                    break
            if found is None:
                ok = False
                break
            residuals.append(cube(l for l in cl.cube.literals if l != found))
        if not ok:
            continue
        if any(r != residuals[0] for r in residuals[1:]):
            continue
        bg_cube = residuals[0]  # the lemmas are not(bg_cube) or term >= b_i
        rest = [l for l in pob.literals if l != lit]
        if not rest:
            continue
        if bg_cube.literals:
            bg = NotF(cube_to_formula(bg_cube))
            phi2 = [m for m in rest if not backend.is_sat(bg, m)]
            if not phi2:
                continue
        alpha = cube(rest)
        alpha_f = cube_to_formula(alpha)
        if not all(
            backend.is_sat(clause_to_formula(cl), alpha_f) for cl in lemmas
        ):
            continue
        if not backend.entails(reach, NotF(alpha_f)):
            continue
        return alpha
    return None
