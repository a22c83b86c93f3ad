"""Numeric anti-unification and per-frame clusters of similar lemmas.

Lemmas are stored as clauses (negated cubes); two lemmas are syntactically
similar when their cubes have the same literal shapes (same constants per
aligned literal) and differ only in integer positions.  The most general
numeric anti-unifier keeps the agreeing integers concrete and puts a fresh
placeholder at every disagreeing position.

Divisibility literals only anti-unify when identical; the global rules never
generalize over divisors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Iterable, Optional

from .formula import (
    Clause,
    Constant,
    Cube,
    Divides,
    Hole,
    Ineq,
    apply_substitution,
    holes_of,
)

Sigma = dict[int, int]


def _slot_au(a, b, fresh: Callable[[], Hole]):
    if a == b:
        return a
    return fresh()


def _literal_shape(lit) -> tuple:
    if isinstance(lit, Ineq):
        return ("le", lit.term.constants())
    return ("div", lit.term.constants(), lit.divisor, lit.remainder)


def _anti_unify_literal(a, b, fresh: Callable[[], Hole]):
    if isinstance(a, Ineq) and isinstance(b, Ineq):
        if a.term.constants() != b.term.constants():
            return None
        coeffs = tuple(
            (ca, _slot_au(na, nb, fresh))
            for (ca, na), (_, nb) in zip(a.term.coeffs, b.term.coeffs)
        )
        from .formula import LinearTerm

        return Ineq(LinearTerm(coeffs, 0), _slot_au(a.bound, b.bound, fresh))
    if isinstance(a, Divides) and isinstance(b, Divides):
        return a if a == b else None
    return None


def _match_literal(pat, lit, sigma: Sigma) -> bool:
    def slot(p, v) -> bool:
        if isinstance(p, Hole):
            if p.index in sigma and sigma[p.index] != v:
                return False
            if not isinstance(v, int):
                return False
            sigma[p.index] = v
            return True
        return p == v

    if isinstance(pat, Ineq) and isinstance(lit, Ineq):
        if pat.term.constants() != lit.term.constants():
            return False
        for (_, pn), (_, ln) in zip(pat.term.coeffs, lit.term.coeffs):
            if not slot(pn, ln):
                return False
        return slot(pat.bound, lit.bound)
    if isinstance(pat, Divides) and isinstance(lit, Divides):
        return pat == lit
    return False


def _grouped(cube: Cube) -> dict[tuple, list]:
    groups: dict[tuple, list] = {}
    for lit in cube.literals:
        groups.setdefault(_literal_shape(lit), []).append(lit)
    return groups


@dataclass(frozen=True)
class Pattern:
    """A clause shape with placeholder integer positions (canonically
    renumbered in literal order), plus the number of placeholders."""

    clause: Clause
    n_holes: int

    def matches(self, cl: Clause) -> Optional[Sigma]:
        return match_cube(self.clause.cube, cl.cube)

    def is_nonlinear(self) -> bool:
        """Some constant's coefficient is a placeholder."""
        for lit in self.clause.cube.literals:
            if isinstance(lit, Ineq):
                if any(isinstance(n, Hole) for _, n in lit.term.coeffs):
                    return True
        return False

    def coefficient_hole_constants(self) -> set[Constant]:
        out: set[Constant] = set()
        for lit in self.clause.cube.literals:
            if isinstance(lit, Ineq):
                for c, n in lit.term.coeffs:
                    if isinstance(n, Hole):
                        out.add(c)
        return out

    def dual_matrix_form(self) -> Optional[tuple[tuple[tuple[int, ...], ...], tuple[Constant, ...], tuple[int, ...]]]:
        """If the negated pattern is A.x <= v (all-concrete coefficient rows,
        every bound a distinct placeholder), return (A, vars, hole order)."""
        lits = self.clause.cube.literals
        if not lits:
            return None
        variables = self.clause.cube.constants()
        rows = []
        hole_order = []
        for lit in lits:
            if not isinstance(lit, Ineq):
                return None
            if any(isinstance(n, Hole) for _, n in lit.term.coeffs):
                return None
            if not isinstance(lit.bound, Hole):
                return None
            rows.append(tuple(lit.term.coeff(v) for v in variables))
            hole_order.append(lit.bound.index)
        if len(set(hole_order)) != len(hole_order):
            return None
        return tuple(rows), variables, tuple(hole_order)

    def sort_key(self):
        return tuple(l.sort_key() for l in self.clause.cube.literals)

    def __str__(self) -> str:
        return f"~({self.clause.cube})"


def match_cube(pat: Cube, cand: Cube) -> Optional[Sigma]:
    """Match a candidate cube against a pattern cube, aligning literals by
    shape; within a shape group alignments are tried by backtracking.  The
    shape of an inequality ignores its numeric slots (they may be holes)."""
    pat_shapes, ckeys = _grouped(pat), _grouped(cand)
    pkeys = sorted(pat_shapes, key=repr)
    if sorted(ckeys, key=repr) != pkeys:
        return None
    sigma: Sigma = {}

    def try_group(i: int) -> bool:
        if i == len(pkeys):
            return True
        plits = pat_shapes[pkeys[i]]
        clits = ckeys[pkeys[i]]
        if len(plits) != len(clits):
            return False
        if len(plits) == 1:
            saved = dict(sigma)
            if _match_literal(plits[0], clits[0], sigma) and try_group(i + 1):
                return True
            sigma.clear()
            sigma.update(saved)
            return False
        for perm in permutations(range(len(clits))):
            saved = dict(sigma)
            ok = all(
                _match_literal(p, clits[j], sigma) for p, j in zip(plits, perm)
            )
            if ok and try_group(i + 1):
                return True
            sigma.clear()
            sigma.update(saved)
        return False

    if not try_group(0):
        return None
    return sigma


def canonicalize(cl: Clause) -> tuple[Clause, int]:
    """Renumber holes in first-occurrence order over the canonical literal
    order; returns the renamed clause and the hole count."""
    holes = holes_of(cl)
    renaming = {h.index: Hole(i) for i, h in enumerate(holes)}
    return apply_substitution(cl, renaming), len(holes)


def anti_unify(a: Clause, b: Clause) -> Optional[Pattern]:
    """Most general numeric anti-unifier of two normalized lemmas."""
    ga, gb = _grouped(a.cube), _grouped(b.cube)
    if sorted(ga, key=repr) != sorted(gb, key=repr):
        return None
    counter = [1_000_000]  # temporary indices, canonicalized below

    def fresh() -> Hole:
        counter[0] += 1
        return Hole(counter[0])

    lits = []
    for shape in sorted(ga, key=repr):
        la = sorted(ga[shape], key=lambda l: l.sort_key())
        lb = sorted(gb[shape], key=lambda l: l.sort_key())
        if len(la) != len(lb):
            return None
        for x, y in zip(la, lb):
            merged = _anti_unify_literal(x, y, fresh)
            if merged is None:
                return None
            lits.append(merged)
    clause = Clause(Cube(tuple(sorted(lits, key=lambda l: l.sort_key()))))
    canon, n = canonicalize(clause)
    if n == 0:
        return None  # identical lemmas do not form a pattern
    return Pattern(canon, n)


@dataclass
class Cluster:
    pattern: Pattern
    level: int
    members: list[tuple[Clause, Sigma]] = field(default_factory=list)

    def lemmas(self) -> list[Clause]:
        return [m for m, _ in self.members]

    def has(self, lemma: Clause) -> bool:
        return any(m == lemma for m, _ in self.members)

    def add(self, lemma: Clause, sigma: Sigma) -> None:
        if not self.has(lemma):
            self.members.append((lemma, sigma))


class ClusterStore:
    """All clusters, plus the per-lemma and per-pattern bookkeeping (gas)."""

    def __init__(self, initial_gas: int = 100, min_cluster: int = 2):
        self.clusters: list[Cluster] = []
        self.by_lemma: dict[Clause, list[Cluster]] = {}
        self.lemma_level: dict[Clause, int] = {}
        self.gas: dict[Pattern, int] = {}
        self.initial_gas = initial_gas
        self.min_cluster = min_cluster

    # -- queries -------------------------------------------------------------

    def lemmas_at(self, level: int) -> list[Clause]:
        return sorted(
            (l for l, ml in self.lemma_level.items() if ml >= level),
            key=lambda l: tuple(x.sort_key() for x in l.cube.literals),
        )

    def gas_of(self, pattern: Pattern) -> int:
        return self.gas.get(pattern, self.initial_gas)

    def spend_gas(self, pattern: Pattern) -> None:
        self.gas[pattern] = self.gas_of(pattern) - 1

    def clusters_of(self, lemma: Clause) -> list[Cluster]:
        return self.by_lemma.get(lemma, [])

    def cluster_of(self, lemma: Clause) -> Optional[Cluster]:
        """The cluster used by Block for Subsume/Conjecture: most members,
        then lowest level, then pattern order."""
        cands = [
            c for c in self.clusters_of(lemma) if len(c.members) >= self.min_cluster
        ]
        if not cands:
            return None
        return min(
            cands, key=lambda c: (-len(c.members), c.level, c.pattern.sort_key())
        )

    # -- updates -------------------------------------------------------------

    def note_level(self, lemma: Clause, level: int) -> None:
        if self.lemma_level.get(lemma, -1) < level:
            self.lemma_level[lemma] = level

    def _register(self, cluster: Cluster) -> None:
        self.clusters.append(cluster)
        self.gas.setdefault(cluster.pattern, self.initial_gas)
        for lemma, _ in cluster.members:
            self.by_lemma.setdefault(lemma, []).append(cluster)

    def _add_member(self, cluster: Cluster, lemma: Clause, sigma: Sigma) -> None:
        if not cluster.has(lemma):
            cluster.add(lemma, sigma)
            self.by_lemma.setdefault(lemma, []).append(cluster)

    def insert_lemma(self, lemma: Clause, level: int) -> list[Cluster]:
        """Cluster-maintenance strategy on lemma arrival.

        Joins every existing cluster whose pattern the lemma matches; failing
        that, forms a new cluster from an anti-unifier with a clustered
        member (pulling in other members that match), or with some
        unclustered lemma.
        """
        self.note_level(lemma, level)
        affected: list[Cluster] = []
        for cl in self.clusters:
            if cl.level > level:
                continue
            sigma = cl.pattern.matches(lemma)
            if sigma is not None:
                self._add_member(cl, lemma, sigma)
                affected.append(cl)
        if affected:
            return affected
        for cl in list(self.clusters):
            if cl.level > level:
                continue
            for member, _ in list(cl.members):
                if member == lemma:
                    continue
                pat = anti_unify(lemma, member)
                if pat is None:
                    continue
                new_level = min(level, self.lemma_level.get(member, level))
                fresh = Cluster(pat, new_level)
                fresh.add(lemma, pat.matches(lemma) or {})
                fresh.add(member, pat.matches(member) or {})
                for other, _ in cl.members:
                    if other in (lemma, member):
                        continue
                    s = pat.matches(other)
                    if s is not None:
                        fresh.add(other, s)
                self._register(fresh)
                return [fresh]
        clustered = set(self.by_lemma)
        for other in self.lemmas_at(0):
            if other == lemma or other in clustered:
                continue
            pat = anti_unify(lemma, other)
            if pat is None:
                continue
            new_level = min(level, self.lemma_level.get(other, level))
            fresh = Cluster(pat, new_level)
            fresh.add(lemma, pat.matches(lemma) or {})
            fresh.add(other, pat.matches(other) or {})
            self._register(fresh)
            return [fresh]
        return []

    def cluster_for_pob(
        self, pob: Cube, level: int, blocks: Callable[[Cube, Clause], bool]
    ) -> Optional[Cluster]:
        """A cluster (at frame <= level) containing a lemma that blocks the
        pob; lowest frame first, then most members, then pattern order."""
        cands = [
            c
            for c in self.clusters
            if c.level <= level and len(c.members) >= self.min_cluster
        ]
        cands.sort(key=lambda c: (c.level, -len(c.members), c.pattern.sort_key()))
        for c in cands:
            for lemma, _ in c.members:
                if blocks(pob, lemma):
                    return c
        return None

    def dump(self) -> str:
        lines = []
        for c in sorted(
            self.clusters, key=lambda c: (c.level, c.pattern.sort_key())
        ):
            lines.append(
                f"level {c.level} gas {self.gas_of(c.pattern)} pattern {c.pattern}"
            )
            for lemma, sigma in c.members:
                lines.append(f"  {lemma}  via {sigma}")
        return "\n".join(lines)
