"""Problem-file parsing, rendering, and the command-line interface.

Problems are small S-expression files::

    (declare-var x Int)
    (init  <formula>)
    (trans <formula over x and x'>)
    (bad   <cube>)
    (set-info :status safe)      ; optional, consumed by the regression harness

Primed names (``x'``) may appear only in the transition formula.  ``bad``
must parse to a conjunction of literals.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .engine import Engine, EngineConfig, Safe, TransitionSystem, Unknown, Unsafe, check_invariant
from .formula import (
    AndF,
    Clause,
    Constant,
    Cube,
    Divides,
    Formula,
    GE,
    GT,
    Ineq,
    LE,
    LT,
    LinearTerm,
    NonLinearError,
    NotF,
    OrF,
    conj,
    cube,
    disj,
    negate_literal,
    normalize_eq,
    normalize_ineq,
    term,
)
from .sexpr import Located, SExprError, read_all_located
from .smt import SolverClient, solver_command_for


class ParseError(ValueError):
    def __init__(self, message: str, node: Optional[Located] = None):
        if node is not None:
            message = f"{node.line}:{node.col}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Problem:
    system: TransitionSystem
    expected_status: Optional[str] = None  # "safe" | "unsafe" | None


def _atom(node: Located) -> str:
    if not node.is_atom():
        raise ParseError("expected a symbol", node)
    return node.value  # type: ignore[return-value]


class _Parser:
    def __init__(self) -> None:
        self.constants: dict[str, Constant] = {}

    def lookup(self, name: str, node: Located, allow_primed: bool) -> Constant:
        base = name[:-1] if name.endswith("'") else name
        if base not in self.constants:
            raise ParseError(f"unknown symbol {name!r}", node)
        if name.endswith("'"):
            if not allow_primed:
                raise ParseError(f"primed symbol {name!r} outside trans", node)
            return self.constants[base].primed()
        return self.constants[base]

    def term(self, node: Located, allow_primed: bool) -> LinearTerm:
        if node.is_atom():
            text = _atom(node)
            try:
                return term({}, int(text))
            except ValueError:
                pass
            return term({self.lookup(text, node, allow_primed): 1})
        items = node.value
        if not items:
            raise ParseError("empty term", node)
        head = _atom(items[0])
        args = items[1:]
        if head == "+":
            out = term({})
            for a in args:
                out = out.add(self.term(a, allow_primed))
            return out
        if head == "-":
            if len(args) == 1:
                return self.term(args[0], allow_primed).negate()
            out = self.term(args[0], allow_primed)
            for a in args[1:]:
                out = out.sub(self.term(a, allow_primed))
            return out
        if head == "*":
            factors = [self.term(a, allow_primed) for a in args]
            scale = 1
            lin: Optional[LinearTerm] = None
            for f in factors:
                if f.is_ground():
                    assert isinstance(f.offset, int)
                    scale *= f.offset
                elif lin is None:
                    lin = f
                else:
                    raise ParseError("non-linear term (product of two constants)", node)
            if lin is None:
                return term({}, scale)
            return lin.scale(scale)
        raise ParseError(f"unknown term operator {head!r}", node)

    def formula(self, node: Located, allow_primed: bool, negate: bool = False) -> Formula:
        if node.is_atom():
            text = _atom(node)
            if text == "true":
                return OrF(()) if negate else AndF(())
            if text == "false":
                return AndF(()) if negate else OrF(())
            raise ParseError(f"expected a formula, got {text!r}", node)
        items = node.value
        if not items:
            raise ParseError("empty formula", node)
        head = _atom(items[0])
        args = items[1:]
        if head == "and":
            parts = [self.formula(a, allow_primed, negate) for a in args]
            return disj(parts) if negate else conj(parts)
        if head == "or":
            parts = [self.formula(a, allow_primed, negate) for a in args]
            return conj(parts) if negate else disj(parts)
        if head == "not":
            if len(args) != 1:
                raise ParseError("not takes one argument", node)
            return self.formula(args[0], allow_primed, not negate)
        if head == "=>":
            if len(args) < 2:
                raise ParseError("=> takes at least two arguments", node)
            # a => b  ==  (not a) or b
            parts = [self.formula(a, allow_primed, not negate) for a in args[:-1]]
            parts.append(self.formula(args[-1], allow_primed, negate))
            return conj(parts) if negate else disj(parts)
        if head in ("<=", "<", ">=", ">", "="):
            if len(args) != 2:
                raise ParseError(f"{head} takes two arguments", node)
            lhs = self.term(args[0], allow_primed)
            rhs = self.term(args[1], allow_primed)
            if head == "=":
                a, b = normalize_eq(lhs, rhs)
                if negate:
                    return disj([negate_literal(a), negate_literal(b)])
                return conj([a, b])
            op = {LE: LE, LT: LT, GE: GE, GT: GT}[head]
            lit = normalize_ineq(op, lhs, rhs)
            return negate_literal(lit) if negate else lit
        raise ParseError(f"unknown connective {head!r}", node)


def _formula_to_cube(f: Formula, node: Located) -> Cube:
    lits = []

    def walk(g: Formula) -> None:
        if isinstance(g, Ineq):
            lits.append(g)
        elif isinstance(g, AndF):
            for a in g.args:
                walk(a)
        else:
            raise ParseError("bad must be a cube (a conjunction of literals)", node)

    walk(f)
    if not lits:
        raise ParseError("bad must be a non-trivial cube", node)
    return cube(lits)


def parse_problem(text: str) -> Problem:
    try:
        nodes = read_all_located(text)
    except SExprError as exc:
        raise ParseError(str(exc)) from None
    parser = _Parser()
    init: Optional[Formula] = None
    trans: Optional[Formula] = None
    bad: Optional[Cube] = None
    status: Optional[str] = None
    for node in nodes:
        if node.is_atom():
            raise ParseError("expected a command", node)
        items = node.value
        if not items:
            raise ParseError("empty command", node)
        head = _atom(items[0])
        if head == "declare-var":
            if len(items) != 3:
                raise ParseError("declare-var takes a name and a sort", node)
            name = _atom(items[1])
            sort = _atom(items[2])
            if sort != "Int":
                raise ParseError(f"unsupported sort {sort!r} (only Int)", items[2])
            if name.endswith("'"):
                raise ParseError("declared names must be unprimed", items[1])
            if name in parser.constants:
                raise ParseError(f"duplicate declaration of {name!r}", items[1])
            parser.constants[name] = Constant(name)
        elif head == "init":
            init = parser.formula(items[1], allow_primed=False)
        elif head == "trans":
            trans = parser.formula(items[1], allow_primed=True)
        elif head == "bad":
            if len(items) != 2:
                raise ParseError("bad takes one formula", node)
            bad = _formula_to_cube(parser.formula(items[1], allow_primed=False), items[1])
        elif head == "set-info":
            if len(items) == 3 and _atom(items[1]) == ":status":
                status = _atom(items[2])
        else:
            raise ParseError(f"unknown command {head!r}", node)
    if init is None or trans is None or bad is None:
        raise ParseError("a problem needs declare-var, init, trans, and bad")
    system = TransitionSystem(
        tuple(sorted(parser.constants.values())), init, trans, bad
    )
    return Problem(system, status)


# ---------------------------------------------------------------------------
# Rendering (problem-format text)


def render_term(t: LinearTerm) -> str:
    parts = []
    for c, n in t.coeffs:
        assert isinstance(n, int)
        if n == 1:
            parts.append(c.name if not c.is_primed() else c.name)
        else:
            parts.append(f"(* {n} {c.name})")
    if t.offset != 0 or not parts:
        parts.append(str(t.offset))
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def render_formula(f) -> str:
    if isinstance(f, Ineq):
        return f"(<= {render_term(f.term)} {f.bound})"
    if isinstance(f, Divides):
        return f"(= (mod {render_term(f.term)} {f.divisor}) {f.remainder})"
    if isinstance(f, AndF):
        if not f.args:
            return "true"
        return "(and " + " ".join(render_formula(a) for a in f.args) + ")"
    if isinstance(f, OrF):
        if not f.args:
            return "false"
        return "(or " + " ".join(render_formula(a) for a in f.args) + ")"
    if isinstance(f, NotF):
        return f"(not {render_formula(f.arg)})"
    if isinstance(f, Cube):
        return render_formula(conj(f.literals))
    if isinstance(f, Clause):
        return f"(not {render_formula(f.cube)})"
    raise TypeError(type(f))


def render_problem(p: Problem) -> str:
    lines = []
    if p.expected_status:
        lines.append(f"(set-info :status {p.expected_status})")
    for c in p.system.constants:
        lines.append(f"(declare-var {c.name} Int)")
    lines.append(f"(init {render_formula(p.system.init)})")
    lines.append(f"(trans {render_formula(p.system.trans)})")
    lines.append(f"(bad {render_formula(conj(p.system.bad.literals))})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Bundled corpus


def corpus_dir():
    return resources.files("gspacer") / "corpus"


def corpus_path(name: str) -> str:
    return str(corpus_dir() / name)


def load_problem(path: str) -> Problem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem(fh.read())


# ---------------------------------------------------------------------------
# CLI


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gspacer",
        description="Safety checker for linear-integer transition systems",
    )
    ap.add_argument("problem", help="problem file (s-expression dialect)")
    ap.add_argument("--solver", help="SMT solver executable (default: z3, cvc5, bundled)")
    ap.add_argument("--gas", type=int, default=100, help="per-pattern gas (default 100)")
    ap.add_argument("--max-frames", type=int, default=200, help="frame cap (default 200)")
    ap.add_argument("--timeout", type=float, default=None, help="wall-clock seconds")
    ap.add_argument("--disable-subsume", action="store_true")
    ap.add_argument("--disable-concretize", action="store_true")
    ap.add_argument("--disable-conjecture", action="store_true")
    ap.add_argument("--stats", action="store_true", help="print run statistics")
    ap.add_argument("--dump-clusters", action="store_true")
    ap.add_argument("--debug-invariants", action="store_true",
                    help="check frame invariants after every engine step")
    ap.add_argument("--seed", type=int, default=None, help="random seed for the backend")
    return ap


def config_from_args(args: argparse.Namespace) -> EngineConfig:
    return EngineConfig(
        gas=args.gas,
        max_frames=args.max_frames,
        timeout=args.timeout,
        enable_subsume=not args.disable_subsume,
        enable_concretize=not args.disable_concretize,
        enable_conjecture=not args.disable_conjecture,
        debug_invariants=args.debug_invariants,
        solver_cmd=solver_command_for(args.solver) if args.solver else None,
        seed=args.seed,
    )


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_arg_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 3 if exc.code not in (0, None) else 0
    try:
        problem = load_problem(args.problem)
    except (OSError, ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    engine = Engine(problem.system, config_from_args(args))
    try:
        result = engine.solve()
        if isinstance(result, Safe):
            if not check_invariant(result.invariant, problem.system, engine.backend):
                print("error: produced invariant failed verification", file=sys.stderr)
                return 2
            print("SAFE")
            print(f"invariant: {render_formula(result.invariant)}")
            code = 0
        elif isinstance(result, Unsafe):
            print(f"UNSAFE depth {result.depth}")
            code = 1
        else:
            print(f"UNKNOWN ({result.reason})")
            code = 2
        if args.dump_clusters:
            print(engine.store.dump())
        if args.stats:
            for key, value in sorted(engine.stats.items()):
                print(f"{key}={value}")
        return code
    finally:
        engine.close()


if __name__ == "__main__":
    sys.exit(main())
