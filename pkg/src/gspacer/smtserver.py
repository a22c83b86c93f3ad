"""A minimal SMT-LIB2 server for quantifier-free linear Int/Real arithmetic.

Runnable as ``python -m gspacer.smtserver``; speaks SMT-LIB2 on
stdin/stdout: set-logic / set-option / set-info / declare-const /
declare-fun (nullary) / assert (with ``:named``) / push / pop / check-sat /
get-model / get-unsat-core / get-info / echo / reset / exit.

The Boolean layer is a DPLL with counter-based propagation over a
Plaisted-Greenbaum clause encoding; theory conjunctions go to
:mod:`gspacer.lira`.  Unsat cores over named assertions are computed by
deletion minimization, so a returned core re-asserted alone is unsat.

Restrictions (documented, not accidental): terms must be linear, strict
comparisons over real-sorted terms are rejected, and `mod` requires literal
positive divisors (each occurrence expands to fresh integer variables).
"""

from __future__ import annotations

import sys
from fractions import Fraction
from typing import Optional

from . import lira
from .sexpr import SExpr, quote_symbol, read_all

INT = "Int"
REAL = "Real"


class SmtError(Exception):
    pass


class Unsupported(Exception):
    pass


Row = tuple[dict[str, Fraction], Fraction]  # coeffs, constant


class Solver:
    def __init__(self) -> None:
        self.sorts: dict[str, str] = {}
        self.frames: list[list[tuple[Optional[str], object]]] = [[]]
        self.decl_frames: list[list[str]] = [[]]
        self.atoms: list[tuple[tuple[tuple[str, Fraction], ...], Fraction, bool]] = []
        self.atom_ids: dict[tuple, int] = {}
        self.parse_cache: dict[str, object] = {}
        self.mod_count = 0
        self.last_status: Optional[str] = None
        self.last_model: Optional[dict[str, Fraction]] = None
        self.last_core: Optional[list[str]] = None
        self.unknown_reason = ""

    # -- declarations -----------------------------------------------------

    def declare(self, name: str, sort: str) -> None:
        if sort not in (INT, REAL):
            raise SmtError(f"unsupported sort {sort}")
        old = self.sorts.get(name)
        if old is not None and old != sort:
            raise SmtError(f"sort mismatch for {name}")
        self.sorts[name] = sort
        self.decl_frames[-1].append(name)

    # -- terms ------------------------------------------------------------

    def _numeral(self, e: SExpr) -> Optional[Fraction]:
        if isinstance(e, str):
            try:
                return Fraction(e)
            except ValueError:
                return None
        if isinstance(e, list) and len(e) == 2 and e[0] == "-":
            inner = self._numeral(e[1])
            return -inner if inner is not None else None
        if isinstance(e, list) and len(e) == 3 and e[0] == "/":
            a, b = self._numeral(e[1]), self._numeral(e[2])
            if a is not None and b is not None and b != 0:
                return a / b
        return None

    def parse_term(self, e: SExpr, side: list[object]) -> Row:
        num = self._numeral(e)
        if num is not None:
            return {}, num
        if isinstance(e, str):
            if e not in self.sorts:
                raise SmtError(f"unknown symbol {e}")
            return {e: Fraction(1)}, Fraction(0)
        if not e:
            raise SmtError("empty term")
        head = e[0]
        if head == "+":
            coeffs: dict[str, Fraction] = {}
            const = Fraction(0)
            for arg in e[1:]:
                c, k = self.parse_term(arg, side)
                const += k
                for v, x in c.items():
                    coeffs[v] = coeffs.get(v, Fraction(0)) + x
            return {v: x for v, x in coeffs.items() if x}, const
        if head == "-":
            first_c, first_k = self.parse_term(e[1], side)
            if len(e) == 2:
                return {v: -x for v, x in first_c.items()}, -first_k
            coeffs, const = dict(first_c), first_k
            for arg in e[2:]:
                c, k = self.parse_term(arg, side)
                const -= k
                for v, x in c.items():
                    coeffs[v] = coeffs.get(v, Fraction(0)) - x
            return {v: x for v, x in coeffs.items() if x}, const
        if head == "*":
            rows = [self.parse_term(arg, side) for arg in e[1:]]
            lin: Optional[Row] = None
            scale = Fraction(1)
            for c, k in rows:
                if c:
                    if lin is not None:
                        raise SmtError("non-linear term (product of two constants)")
                    lin = (c, k)
                else:
                    scale *= k
            if lin is None:
                return {}, scale
            c, k = lin
            return {v: x * scale for v, x in c.items() if x * scale}, k * scale
        if head == "mod":
            if len(e) != 3:
                raise SmtError("mod arity")
            tc, tk = self.parse_term(e[1], side)
            d = self._numeral(e[2])
            if d is None or d.denominator != 1 or d <= 0:
                raise Unsupported("mod with non-constant or non-positive divisor")
            if any(self.sorts.get(v) != INT for v in tc):
                raise Unsupported("mod over real term")
            d = int(d)
            q = f".q{self.mod_count}"
            m = f".m{self.mod_count}"
            self.mod_count += 1
            self.sorts[q] = INT
            self.sorts[m] = INT
            # t = d*q + m  and  0 <= m < d
            eq_c = dict(tc)
            eq_c[q] = eq_c.get(q, Fraction(0)) - d
            eq_c[m] = eq_c.get(m, Fraction(0)) - 1
            side.append(self._atom_node(eq_c, -tk, False))
            side.append(self._atom_node({v: -x for v, x in eq_c.items()}, tk, False))
            side.append(self._atom_node({m: Fraction(-1)}, Fraction(0), False))
            side.append(self._atom_node({m: Fraction(1)}, Fraction(d - 1), False))
            return {m: Fraction(1)}, Fraction(0)
        if head == "to_real":
            return self.parse_term(e[1], side)
        raise SmtError(f"unsupported term {head}")

    # -- atoms and formulas ------------------------------------------------

    def _atom_node(self, coeffs: dict[str, Fraction], const: Fraction, strict: bool):
        """Canonicalize ``coeffs <= const`` (or < with strict) into an atom node."""
        coeffs = {v: x for v, x in coeffs.items() if x}
        if not coeffs:
            if strict:
                return const > 0
            return const >= 0
        import math as _m

        denom = _m.lcm(*[x.denominator for x in coeffs.values()])
        ints = {v: x * denom for v, x in coeffs.items()}
        g = _m.gcd(*[abs(int(x)) for x in ints.values()])
        ints = {v: x / g for v, x in ints.items()}
        const = const * denom / g
        pure_int = all(self.sorts.get(v) == INT for v in ints)
        if pure_int:
            if strict:
                const = Fraction(_m.ceil(const) - 1)
            else:
                const = Fraction(_m.floor(const))
        elif strict:
            raise Unsupported("strict comparison over reals")
        key = (tuple(sorted(ints.items())), const)
        if key not in self.atom_ids:
            self.atom_ids[key] = len(self.atoms)
            self.atoms.append((key[0], const, pure_int))
        return ("atom", self.atom_ids[key])

    def _compare(self, op: str, lhs: Row, rhs: Row):
        coeffs = dict(lhs[0])
        for v, x in rhs[0].items():
            coeffs[v] = coeffs.get(v, Fraction(0)) - x
        const = rhs[1] - lhs[1]
        if op == "<=":
            return self._atom_node(coeffs, const, False)
        if op == "<":
            return self._atom_node(coeffs, const, True)
        if op == ">=":
            return self._atom_node({v: -x for v, x in coeffs.items()}, -const, False)
        if op == ">":
            return self._atom_node({v: -x for v, x in coeffs.items()}, -const, True)
        raise SmtError(op)

    def parse_formula(self, e: SExpr, side: list[object]):
        if e == "true":
            return True
        if e == "false":
            return False
        if isinstance(e, str):
            raise SmtError(f"boolean symbol {e!r} unsupported")
        head = e[0]
        if head in ("and", "or"):
            args = [self.parse_formula(a, side) for a in e[1:]]
            zero, one = (False, True) if head == "and" else (True, False)
            if any(a is zero for a in args):
                return zero
            args = [a for a in args if a is not one]
            if not args:
                return one
            if len(args) == 1:
                return args[0]
            return (head, tuple(args))
        if head == "not":
            arg = self.parse_formula(e[1], side)
            if isinstance(arg, bool):
                return not arg
            return ("not", arg)
        if head == "=>":
            args = [self.parse_formula(a, side) for a in e[1:]]
            out = args[-1]
            for a in reversed(args[:-1]):
                a_n = not a if isinstance(a, bool) else ("not", a)
                if a_n is True or out is True:
                    out = True
                    continue
                if a_n is False:
                    out = out
                elif out is False:
                    out = a_n
                else:
                    out = ("or", (a_n, out))
            return out
        if head in ("<=", "<", ">=", ">"):
            return self._compare(head, self.parse_term(e[1], side), self.parse_term(e[2], side))
        if head == "=":
            lhs, rhs = self.parse_term(e[1], side), self.parse_term(e[2], side)
            a = self._compare("<=", lhs, rhs)
            b = self._compare(">=", lhs, rhs)
            if isinstance(a, bool) and isinstance(b, bool):
                return a and b
            if a is True:
                return b
            if b is True:
                return a
            if a is False or b is False:
                return False
            return ("and", (a, b))
        raise SmtError(f"unsupported connective {head}")

    # -- assertion stack ----------------------------------------------------

    def do_assert(self, e: SExpr) -> None:
        name = None
        if isinstance(e, list) and e and e[0] == "!":
            body = e[1]
            for i in range(2, len(e) - 1):
                if e[i] == ":named":
                    name = e[i + 1]
            e = body
        key = repr(e)
        cached = self.parse_cache.get(key)
        if cached is None:
            side: list[object] = []
            node = self.parse_formula(e, side)
            for s in side:
                if s is False:
                    node = False
                elif s is not True:
                    node = ("and", (node, s)) if node is not True else s
            cached = node
            self.parse_cache[key] = cached
        self.frames[-1].append((name, cached))

    def push(self, n: int = 1) -> None:
        for _ in range(n):
            self.frames.append([])
            self.decl_frames.append([])

    def pop(self, n: int = 1) -> None:
        for _ in range(n):
            if len(self.frames) == 1:
                raise SmtError("pop on empty stack")
            self.frames.pop()
            self.decl_frames.pop()

    # -- solving ------------------------------------------------------------

    def _theory_check(self, literals: list[tuple[int, bool]]):
        cons = []
        for idx, (atom_id, value) in enumerate(literals):
            coeffs, const, pure_int = self.atoms[atom_id]
            if value:
                cons.append(lira.make_constraint(dict(coeffs), const, idx))
            else:
                if not pure_int:
                    raise Unsupported("negated real atom (strict)")
                cons.append(
                    lira.make_constraint({v: -x for v, x in coeffs}, -const - 1, idx)
                )
        return lira.check_conjunction(cons, self.sorts)

    def _solve(self, nodes: list[object]):
        """Solve the conjunction of parsed assertion nodes."""
        clauses: list[list[int]] = []
        n_vars = len(self.atoms)
        aux: dict[tuple, int] = {}
        done: set[tuple[int, bool]] = set()

        def fresh() -> int:
            nonlocal n_vars
            n_vars += 1
            return n_vars

        def lit_of(node, polarity: bool) -> int:
            if node is True or node is False:
                raise AssertionError("constants folded during parse")
            if node[0] == "atom":
                return node[1] + 1
            if node[0] == "not":
                return -lit_of(node[1], not polarity)
            key = (node[0], node[1])
            if key not in aux:
                aux[key] = fresh()
            v = aux[key]
            mark = (v, polarity)
            if mark in done:
                return v
            done.add(mark)
            kids = [lit_of(k, polarity) for k in node[1]]
            if (node[0] == "and") == polarity:
                # v -> all kids   (or, for negative or-node: -v -> -kids)
                for k in kids:
                    clauses.append([-v, k] if polarity else [v, -k])
            else:
                clauses.append(([-v] if polarity else [v]) + ([k if polarity else -k for k in kids]))
            return v

        for node in nodes:
            if node is True:
                continue
            if node is False:
                return "unsat", None
            clauses.append([lit_of(node, True)])

        n_atoms = len(self.atoms)
        while True:
            asg = _bool_solve(clauses, n_vars)
            if asg is None:
                return "unsat", None
            tlits = [(v - 1, val) for v, val in sorted(asg.items()) if v <= n_atoms]
            verdict, payload = self._theory_check(tlits)
            if verdict == "sat":
                return "sat", payload
            core = payload if payload else frozenset(range(len(tlits)))
            block = []
            for i in sorted(core):
                atom_id, val = tlits[i]
                block.append(-(atom_id + 1) if val else (atom_id + 1))
            if not block:
                return "unsat", None
            clauses.append(block)

    def check_sat(self) -> str:
        nodes = [node for frame in self.frames for _, node in frame]
        try:
            verdict, payload = self._solve(nodes)
        except Unsupported as exc:
            self.last_status = "unknown"
            self.unknown_reason = str(exc)
            self.last_model = None
            self.last_core = None
            return "unknown"
        self.last_status = verdict
        if verdict == "sat":
            model = dict(payload)  # type: ignore[arg-type]
            for name, sort in self.sorts.items():
                if not name.startswith("."):
                    model.setdefault(name, Fraction(0))
            self.last_model = model
            self.last_core = None
        else:
            self.last_model = None
            self.last_core = None  # computed lazily on get-unsat-core
        return verdict

    def _compute_core(self) -> list[str]:
        # Deletion minimization, trying to drop later assertions first so the
        # earliest still-needed assertions are preferred.
        named = [(n, node) for frame in self.frames for n, node in frame if n]
        anon = [node for frame in self.frames for n, node in frame if not n]
        core = list(named)
        i = len(core) - 1
        while i >= 0:
            trial = anon + [node for _, node in core[:i] + core[i + 1 :]]
            try:
                verdict, _ = self._solve(trial)
            except Unsupported:
                verdict = "unknown"
            if verdict == "unsat":
                core.pop(i)
            i -= 1
        return [n for n, _ in core]

    # -- output ------------------------------------------------------------

    def model_sexpr(self) -> str:
        assert self.last_model is not None
        lines = ["("]
        for name in sorted(self.last_model):
            if name.startswith("."):
                continue
            val = self.last_model[name]
            sort = self.sorts.get(name, INT)
            lines.append(
                f"  (define-fun {quote_symbol(name)} () {sort} {_render_value(val, sort)})"
            )
        lines.append(")")
        return "\n".join(lines)


def _render_value(val: Fraction, sort: str) -> str:
    if sort == INT:
        assert val.denominator == 1
        n = val.numerator
        return str(n) if n >= 0 else f"(- {-n})"
    if val.denominator == 1:
        n = val.numerator
        return f"{n}.0" if n >= 0 else f"(- {-n}.0)"
    s = f"(/ {abs(val.numerator)} {val.denominator})"
    return s if val >= 0 else f"(- {s})"


def _bool_solve(clauses: list[list[int]], n_vars: int) -> Optional[dict[int, bool]]:
    """Chronological DPLL; returns a (possibly partial) satisfying assignment."""
    occ_pos: dict[int, list[int]] = {}
    occ_neg: dict[int, list[int]] = {}
    for ci, cl in enumerate(clauses):
        for lit in cl:
            (occ_pos if lit > 0 else occ_neg).setdefault(abs(lit), []).append(ci)
    n_true = [0] * len(clauses)
    n_unassigned = [len(cl) for cl in clauses]
    unsat_set = set(range(len(clauses)))  # clauses with no true literal yet
    assign: dict[int, bool] = {}
    trail: list[tuple[int, bool]] = []

    def on_assign(v: int, val: bool) -> Optional[int]:
        """Update counters; return a conflicting clause index or None."""
        assign[v] = val
        sat_occ = occ_pos if val else occ_neg
        unsat_occ = occ_neg if val else occ_pos
        for ci in sat_occ.get(v, ()):  # literal became true
            if n_true[ci] == 0:
                unsat_set.discard(ci)
            n_true[ci] += 1
        conflict = None
        for ci in unsat_occ.get(v, ()):
            n_unassigned[ci] -= 1
        for ci in unsat_occ.get(v, ()):
            if n_true[ci] == 0 and n_unassigned[ci] == 0 and conflict is None:
                conflict = ci
        return conflict

    def on_unassign(v: int) -> None:
        val = assign.pop(v)
        sat_occ = occ_pos if val else occ_neg
        unsat_occ = occ_neg if val else occ_pos
        for ci in sat_occ.get(v, ()):
            n_true[ci] -= 1
            if n_true[ci] == 0:
                unsat_set.add(ci)
        for ci in unsat_occ.get(v, ()):
            n_unassigned[ci] += 1

    def propagate() -> Optional[int]:
        while True:
            unit = None
            for ci in unsat_set:
                if n_unassigned[ci] == 0:
                    return ci
                if n_unassigned[ci] == 1:
                    unit = ci
                    break
            if unit is None:
                return None
            lit = next(l for l in clauses[unit] if abs(l) not in assign)
            trail.append((abs(lit), False))
            c = on_assign(abs(lit), lit > 0)
            if c is not None:
                return c

    def backtrack() -> bool:
        while trail:
            v, was_decision = trail.pop()
            val = assign[v]
            on_unassign(v)
            if was_decision:
                trail.append((v, False))
                c = on_assign(v, not val)
                if c is None:
                    return True
                # immediate conflict on the flip: keep backtracking
                trail.pop()
                on_unassign(v)
        return False

    while True:
        conflict = propagate()
        if conflict is not None:
            if not backtrack():
                return None
            continue
        if not unsat_set:
            return dict(assign)
        ci = min(unsat_set)
        lit = next(l for l in clauses[ci] if abs(l) not in assign)
        trail.append((abs(lit), True))
        c = on_assign(abs(lit), lit > 0)
        if c is not None:
            if not backtrack():
                return None


# ---------------------------------------------------------------------------
# Protocol loop.


def _iter_commands(stream) -> "list[SExpr]":
    buf = ""
    depth = 0
    in_bar = False
    in_str = False
    while True:
        line = stream.readline()
        if not line:
            return
        buf += line
        for ch in line:
            if in_bar:
                if ch == "|":
                    in_bar = False
            elif in_str:
                if ch == '"':
                    in_str = False
            elif ch == "|":
                in_bar = True
            elif ch == '"':
                in_str = True
            elif ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
        if depth == 0 and buf.strip():
            try:
                for cmd in read_all(buf):
                    yield cmd
            finally:
                buf = ""


def main(argv: Optional[list[str]] = None) -> int:
    out = sys.stdout
    solver = Solver()
    for cmd in _iter_commands(sys.stdin):
        try:
            if not isinstance(cmd, list) or not cmd:
                raise SmtError("expected a command")
            op = cmd[0]
            if op == "exit":
                return 0
            if op in ("set-logic", "set-option", "set-info"):
                pass
            elif op == "reset":
                solver = Solver()
            elif op in ("declare-const", "declare-fun"):
                if op == "declare-fun":
                    if len(cmd) != 4 or cmd[2] != []:
                        raise SmtError("only nullary declare-fun supported")
                    solver.declare(cmd[1], cmd[3])
                else:
                    solver.declare(cmd[1], cmd[2])
            elif op == "assert":
                solver.do_assert(cmd[1])
            elif op == "push":
                solver.push(int(cmd[1]) if len(cmd) > 1 else 1)
            elif op == "pop":
                solver.pop(int(cmd[1]) if len(cmd) > 1 else 1)
            elif op == "check-sat":
                print(solver.check_sat(), file=out, flush=True)
            elif op == "get-model":
                if solver.last_model is None:
                    raise SmtError("no model available")
                print(solver.model_sexpr(), file=out, flush=True)
            elif op == "get-unsat-core":
                if solver.last_status != "unsat":
                    raise SmtError("no core available")
                if solver.last_core is None:
                    solver.last_core = solver._compute_core()
                print("(" + " ".join(map(quote_symbol, solver.last_core)) + ")", file=out, flush=True)
            elif op == "get-info":
                if len(cmd) > 1 and cmd[1] == ":reason-unknown":
                    print(f'(:reason-unknown "{solver.unknown_reason}")', file=out, flush=True)
                else:
                    print("(:name gspacer-smt)", file=out, flush=True)
            elif op == "echo":
                print(cmd[1].strip('"'), file=out, flush=True)
            else:
                raise SmtError(f"unknown command {op}")
        except (SmtError, Unsupported, ValueError, IndexError) as exc:
            print(f'(error "{exc}")', file=out, flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
