"""Normalized linear integer arithmetic formulas.

Inequality literals are kept in the normal form ``sum(n_i * x_i) <= b`` with
constants in a fixed (lexicographic) order, combined like terms, strict
inequalities tightened over the integers, and coefficients divided by their
gcd (the bound is floored accordingly).  Divisibility literals ``d | (t - r)``
only ever arise in generated lemmas, never in input problems.

Coefficient and bound slots may hold a :class:`Hole` (a numbered placeholder),
which is how syntactic patterns are represented; all normalization entry
points require concrete (integer) slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, Union

PRIME_SUFFIX = "'"

INT = "Int"
REAL = "Real"


class NonLinearError(ValueError):
    """Raised when a term multiplies two non-constant subterms."""


@dataclass(frozen=True, order=True)
class Constant:
    """An uninterpreted constant symbol (a program variable)."""

    name: str
    sort: str = INT

    def primed(self) -> "Constant":
        return Constant(self.name + PRIME_SUFFIX, self.sort)

    def unprimed(self) -> "Constant":
        assert self.is_primed()
        return Constant(self.name[: -len(PRIME_SUFFIX)], self.sort)

    def is_primed(self) -> bool:
        return self.name.endswith(PRIME_SUFFIX)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Hole:
    """A free placeholder standing for an integer position in a pattern."""

    index: int

    def __str__(self) -> str:
        return f"v{self.index}"


Coeff = Union[int, Hole]


def _coeff_key(c: Coeff):
    if isinstance(c, Hole):
        return (1, c.index)
    return (0, c)


@dataclass(frozen=True)
class LinearTerm:
    """A linear combination of constants plus an integer offset."""

    coeffs: tuple[tuple[Constant, Coeff], ...] = ()
    offset: Coeff = 0

    def constants(self) -> tuple[Constant, ...]:
        return tuple(c for c, _ in self.coeffs)

    def coeff(self, c: Constant) -> Coeff:
        for cc, n in self.coeffs:
            if cc == c:
                return n
        return 0

    def is_concrete(self) -> bool:
        return not isinstance(self.offset, Hole) and all(
            not isinstance(n, Hole) for _, n in self.coeffs
        )

    def is_ground(self) -> bool:
        return not self.coeffs

    def drop_offset(self) -> "LinearTerm":
        return LinearTerm(self.coeffs, 0)

    def content(self) -> int:
        """gcd of the coefficient magnitudes (0 for a ground term)."""
        g = 0
        for _, n in self.coeffs:
            assert isinstance(n, int)
            g = math.gcd(g, abs(n))
        return g

    def scale(self, k: int) -> "LinearTerm":
        if k == 0:
            return LinearTerm((), 0)
        assert self.is_concrete()
        return LinearTerm(
            tuple((c, n * k) for c, n in self.coeffs), self.offset * k
        )

    def add(self, other: "LinearTerm") -> "LinearTerm":
        assert self.is_concrete() and other.is_concrete()
        acc: dict[Constant, int] = {c: n for c, n in self.coeffs}
        for c, n in other.coeffs:
            acc[c] = acc.get(c, 0) + n
        return term(acc, self.offset + other.offset)

    def sub(self, other: "LinearTerm") -> "LinearTerm":
        return self.add(other.scale(-1))

    def negate(self) -> "LinearTerm":
        return self.scale(-1)

    def evaluate(self, model: Mapping[Constant, Union[int, Fraction]]):
        val: Union[int, Fraction] = self.offset  # type: ignore[assignment]
        for c, n in self.coeffs:
            assert isinstance(n, int)
            val += n * model[c]
        return val

    def sort_key(self):
        return (
            tuple((c.sort, c.name, _coeff_key(n)) for c, n in self.coeffs),
            _coeff_key(self.offset),
        )

    def __str__(self) -> str:
        if not self.coeffs and self.offset == 0:
            return "0"
        parts = []
        for c, n in self.coeffs:
            if n == 1:
                parts.append(str(c))
            elif n == -1:
                parts.append(f"-{c}")
            else:
                parts.append(f"{n}{c}")
        if self.offset != 0 or not parts:
            parts.append(str(self.offset))
        return " + ".join(parts).replace("+ -", "- ")


def term(
    coeffs: Mapping[Constant, Coeff] | Iterable[tuple[Constant, Coeff]],
    offset: Coeff = 0,
) -> LinearTerm:
    """Build a :class:`LinearTerm`: merge duplicates, drop zeros, sort."""
    items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
    acc: dict[Constant, Coeff] = {}
    for c, n in items:
        if c in acc:
            old = acc[c]
            assert isinstance(old, int) and isinstance(n, int)
            acc[c] = old + n
        else:
            acc[c] = n
    kept = tuple(sorted(((c, n) for c, n in acc.items() if n != 0)))
    return LinearTerm(kept, offset)


def var_term(c: Constant, coeff: Coeff = 1) -> LinearTerm:
    return term({c: coeff})


@dataclass(frozen=True)
class Ineq:
    """The literal ``term <= bound`` (the term carries no offset)."""

    term: LinearTerm
    bound: Coeff

    def evaluate(self, model) -> bool:
        assert isinstance(self.bound, int)
        return self.term.evaluate(model) <= self.bound

    def constants(self) -> tuple[Constant, ...]:
        return self.term.constants()

    def is_concrete(self) -> bool:
        return self.term.is_concrete() and not isinstance(self.bound, Hole)

    def sort_key(self):
        return (0, self.term.sort_key(), _coeff_key(self.bound))

    def __str__(self) -> str:
        return f"{self.term} <= {self.bound}"


@dataclass(frozen=True)
class Divides:
    """The literal ``divisor | (term - remainder)``, 0 <= remainder < divisor."""

    divisor: int
    term: LinearTerm
    remainder: int

    def __post_init__(self):
        assert self.divisor >= 2
        assert 0 <= self.remainder < self.divisor

    def evaluate(self, model) -> bool:
        val = self.term.evaluate(model)
        if isinstance(val, Fraction):
            if val.denominator != 1:
                return False
            val = val.numerator
        return (val - self.remainder) % self.divisor == 0

    def constants(self) -> tuple[Constant, ...]:
        return self.term.constants()

    def is_concrete(self) -> bool:
        return self.term.is_concrete()

    def sort_key(self):
        return (1, self.term.sort_key(), (0, self.divisor), (0, self.remainder))

    def __str__(self) -> str:
        if self.remainder:
            return f"{self.divisor} | ({self.term} - {self.remainder})"
        return f"{self.divisor} | {self.term}"


Literal = Union[Ineq, Divides]

# Canonical ground literals: 0 <= 0 and 0 <= -1.
TRUE_LIT = Ineq(LinearTerm(), 0)
FALSE_LIT = Ineq(LinearTerm(), -1)

LE, LT, GE, GT = "<=", "<", ">=", ">"


def normalize_ineq(op: str, lhs: LinearTerm, rhs: LinearTerm) -> Ineq:
    """Normalize a comparison of two linear terms into an :class:`Ineq`.

    Strict bounds are tightened over the integers, ``>=``/``>`` are flipped by
    negation, and the result is divided by the gcd of the coefficient
    magnitudes with the bound floored.
    """
    if op == GE:
        return normalize_ineq(LE, rhs, lhs)
    if op == GT:
        return normalize_ineq(LT, rhs, lhs)
    diff = lhs.sub(rhs)
    assert isinstance(diff.offset, int)
    bound = -diff.offset
    if op == LT:
        bound -= 1
    elif op != LE:
        raise ValueError(f"unknown comparison {op!r}")
    t = diff.drop_offset()
    g = t.content()
    if g == 0:
        return TRUE_LIT if 0 <= bound else FALSE_LIT
    if g > 1:
        t = LinearTerm(tuple((c, n // g) for c, n in t.coeffs), 0)
        bound = math.floor(Fraction(bound, g))
    return Ineq(t, bound)


def normalize_eq(lhs: LinearTerm, rhs: LinearTerm) -> tuple[Ineq, Ineq]:
    """Expand an equality into the two <= literals."""
    return normalize_ineq(LE, lhs, rhs), normalize_ineq(GE, lhs, rhs)


def normalize_divides(divisor: int, t: LinearTerm, remainder: int):
    """Canonicalize ``divisor | (t - remainder)``.

    Returns a :class:`Divides`, or True/False when the constraint is trivial.
    The term content is factored into the divisor so the stored term has
    coprime-with-divisor content where possible.
    """
    assert isinstance(t.offset, int)
    remainder = remainder - t.offset
    t = t.drop_offset()
    if divisor < 0:
        divisor = -divisor
    if divisor == 0:
        raise ValueError("zero divisor")
    remainder %= divisor
    if divisor == 1:
        return True
    g = t.content()
    if g == 0:
        return remainder == 0
    e = math.gcd(g, divisor)
    if e > 1:
        if remainder % e != 0:
            return False
        divisor //= e
        remainder //= e
        coeffs = tuple((c, n // e) for c, n in t.coeffs)
        return normalize_divides(divisor, LinearTerm(coeffs, 0), remainder)
    if divisor == 1:
        return True
    return Divides(divisor, t, remainder)


def negate_literal(lit: Ineq) -> Ineq:
    """not(t <= b)  ==  -t <= -b-1  over the integers."""
    assert isinstance(lit, Ineq) and lit.is_concrete()
    return Ineq(lit.term.negate(), -lit.bound - 1)


@dataclass(frozen=True)
class Cube:
    """A conjunction of literals, duplicate-free and canonically ordered."""

    literals: tuple[Literal, ...] = ()

    def __iter__(self) -> Iterator[Literal]:
        return iter(self.literals)

    def __len__(self) -> int:
        return len(self.literals)

    def constants(self) -> tuple[Constant, ...]:
        seen: dict[Constant, None] = {}
        for lit in self.literals:
            for c in lit.constants():
                seen[c] = None
        return tuple(sorted(seen))

    def evaluate(self, model) -> bool:
        return all(lit.evaluate(model) for lit in self.literals)

    def is_concrete(self) -> bool:
        return all(lit.is_concrete() for lit in self.literals)

    def has_divides(self) -> bool:
        return any(isinstance(lit, Divides) for lit in self.literals)

    def __str__(self) -> str:
        if not self.literals:
            return "true"
        return " & ".join(str(lit) for lit in self.literals)


def cube(literals: Iterable[Literal]) -> Cube:
    kept = []
    for lit in literals:
        if isinstance(lit, Ineq) and lit.term.is_ground() and not isinstance(lit.bound, Hole):
            if lit.bound >= 0:
                continue
            lit = FALSE_LIT
        kept.append(lit)
    uniq = sorted(set(kept), key=lambda l: l.sort_key())
    return Cube(tuple(uniq))


@dataclass(frozen=True)
class Clause:
    """A lemma: the negation of a cube (a disjunction of negated literals)."""

    cube: Cube

    def constants(self) -> tuple[Constant, ...]:
        return self.cube.constants()

    def evaluate(self, model) -> bool:
        return not self.cube.evaluate(model)

    def __str__(self) -> str:
        return f"~({self.cube})"


def dualize(clauses: Iterable[Clause]) -> list[Cube]:
    """S = { not(l) | l in L }; an involution together with clause_of."""
    return [cl.cube for cl in clauses]


def clause_of(c: Cube) -> Clause:
    return Clause(c)


@dataclass(frozen=True)
class MatrixCube:
    """A cube of inequalities in matrix form: matrix . variables <= bounds."""

    matrix: tuple[tuple[int, ...], ...]
    variables: tuple[Constant, ...]
    bounds: tuple[int, ...]


def to_matrix(c: Cube, variables: Sequence[Constant] | None = None) -> MatrixCube:
    """Row-per-literal matrix encoding of a divisibility-free cube."""
    if c.has_divides():
        raise ValueError("cube contains divisibility literals")
    if variables is None:
        variables = c.constants()
    variables = tuple(variables)
    rows = []
    bounds = []
    for lit in c.literals:
        assert isinstance(lit, Ineq) and lit.is_concrete()
        rows.append(tuple(lit.term.coeff(v) for v in variables))
        bounds.append(lit.bound)
    return MatrixCube(tuple(rows), variables, tuple(bounds))


def matrix_to_cube(mc: MatrixCube) -> Cube:
    lits = []
    for row, b in zip(mc.matrix, mc.bounds):
        t = term({v: n for v, n in zip(mc.variables, row)})
        lits.append(Ineq(t, b))
    return cube(lits)


# ---------------------------------------------------------------------------
# Formula trees (quantifier-free, negation-free except for NotF wrappers).


@dataclass(frozen=True)
class AndF:
    args: tuple["Formula", ...]

    def __str__(self) -> str:
        return "(and " + " ".join(map(str, self.args)) + ")" if self.args else "true"


@dataclass(frozen=True)
class OrF:
    args: tuple["Formula", ...]

    def __str__(self) -> str:
        return "(or " + " ".join(map(str, self.args)) + ")" if self.args else "false"


@dataclass(frozen=True)
class NotF:
    arg: "Formula"

    def __str__(self) -> str:
        return f"(not {self.arg})"


Formula = Union[Ineq, Divides, AndF, OrF, NotF]

TRUE = AndF(())
FALSE = OrF(())


def conj(args: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for a in args:
        if isinstance(a, AndF):
            flat.extend(a.args)
        else:
            flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return AndF(tuple(flat))


def disj(args: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for a in args:
        if isinstance(a, OrF):
            flat.extend(a.args)
        else:
            flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return OrF(tuple(flat))


def cube_to_formula(c: Cube) -> Formula:
    return conj(c.literals)


def clause_to_formula(cl: Clause) -> Formula:
    lits = cl.cube.literals
    if all(isinstance(l, Ineq) for l in lits):
        return disj(negate_literal(l) for l in lits)  # type: ignore[arg-type]
    return NotF(cube_to_formula(cl.cube))


def formula_constants(f: Formula) -> set[Constant]:
    if isinstance(f, (Ineq, Divides)):
        return set(f.constants())
    if isinstance(f, NotF):
        return formula_constants(f.arg)
    out: set[Constant] = set()
    for a in f.args:
        out |= formula_constants(a)
    return out


def evaluate_formula(f: Formula, model) -> bool:
    if isinstance(f, (Ineq, Divides)):
        return f.evaluate(model)
    if isinstance(f, AndF):
        return all(evaluate_formula(a, model) for a in f.args)
    if isinstance(f, OrF):
        return any(evaluate_formula(a, model) for a in f.args)
    return not evaluate_formula(f.arg, model)


def rename_constants(f, mapping: Mapping[Constant, Constant]):
    """Structurally rename constants in any formula-like object."""
    if isinstance(f, Constant):
        return mapping.get(f, f)
    if isinstance(f, LinearTerm):
        return term(
            [(mapping.get(c, c), n) for c, n in f.coeffs], f.offset
        )
    if isinstance(f, Ineq):
        return Ineq(rename_constants(f.term, mapping), f.bound)
    if isinstance(f, Divides):
        return Divides(f.divisor, rename_constants(f.term, mapping), f.remainder)
    if isinstance(f, Cube):
        return cube(rename_constants(l, mapping) for l in f.literals)
    if isinstance(f, Clause):
        return Clause(rename_constants(f.cube, mapping))
    if isinstance(f, AndF):
        return AndF(tuple(rename_constants(a, mapping) for a in f.args))
    if isinstance(f, OrF):
        return OrF(tuple(rename_constants(a, mapping) for a in f.args))
    if isinstance(f, NotF):
        return NotF(rename_constants(f.arg, mapping))
    raise TypeError(type(f))


def prime(f, constants: Iterable[Constant]):
    return rename_constants(f, {c: c.primed() for c in constants})


def unprime(f, constants: Iterable[Constant]):
    return rename_constants(f, {c.primed(): c for c in constants})


# ---------------------------------------------------------------------------
# Placeholder substitution (pattern instantiation).


def _subst_slot(slot: Coeff, sigma: Mapping[int, Coeff]) -> Coeff:
    if isinstance(slot, Hole) and slot.index in sigma:
        return sigma[slot.index]
    return slot


def apply_substitution(f, sigma: Mapping[int, Coeff]):
    """Replace placeholders by their mapping.  No re-normalization is done:
    matching against patterns is syntactic, so instantiation must not rewrite
    the shape (zero coefficients produced by the substitution are dropped to
    keep the LinearTerm invariant; anti-unifiers never bind them to zero)."""
    if isinstance(f, LinearTerm):
        return term(
            [(c, _subst_slot(n, sigma)) for c, n in f.coeffs],
            _subst_slot(f.offset, sigma),
        )
    if isinstance(f, Ineq):
        return Ineq(apply_substitution(f.term, sigma), _subst_slot(f.bound, sigma))
    if isinstance(f, Divides):
        return Divides(f.divisor, apply_substitution(f.term, sigma), f.remainder)
    if isinstance(f, Cube):
        return Cube(tuple(apply_substitution(l, sigma) for l in f.literals))
    if isinstance(f, Clause):
        return Clause(apply_substitution(f.cube, sigma))
    if isinstance(f, AndF):
        return AndF(tuple(apply_substitution(a, sigma) for a in f.args))
    if isinstance(f, OrF):
        return OrF(tuple(apply_substitution(a, sigma) for a in f.args))
    if isinstance(f, NotF):
        return NotF(apply_substitution(f.arg, sigma))
    raise TypeError(type(f))


def holes_of(f) -> list[Hole]:
    """All holes in traversal order (duplicates removed, first occurrence)."""
    out: list[Hole] = []
    seen: set[int] = set()

    def slot(s: Coeff):
        if isinstance(s, Hole) and s.index not in seen:
            seen.add(s.index)
            out.append(s)

    def walk(g):
        if isinstance(g, LinearTerm):
            for _, n in g.coeffs:
                slot(n)
            slot(g.offset)
        elif isinstance(g, Ineq):
            walk(g.term)
            slot(g.bound)
        elif isinstance(g, Divides):
            walk(g.term)
        elif isinstance(g, Cube):
            for l in g.literals:
                walk(l)
        elif isinstance(g, Clause):
            walk(g.cube)
        elif isinstance(g, (AndF, OrF)):
            for a in g.args:
                walk(a)
        elif isinstance(g, NotF):
            walk(g.arg)
        else:
            raise TypeError(type(g))

    walk(f)
    return out
