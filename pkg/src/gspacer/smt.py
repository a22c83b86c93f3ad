"""Client for an external SMT-LIB2 solver process.

One client owns one child process and talks SMT-LIB2 over stdin/stdout.
Every query runs inside its own push/pop frame and re-declares its
signature, which keeps the protocol state trivial to reason about; the
solver executable is ``--solver`` / the first of z3, cvc5 on PATH, falling
back to the bundled server (``python -m gspacer.smtserver``).

All assertions are named so that unsat cores can drive subset-clause
inductive generalization.  Divisibility literals are encoded as
``(= (mod t d) r)``.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from . import sexpr
from .formula import (
    AndF,
    Clause,
    Constant,
    Cube,
    Divides,
    Formula,
    Ineq,
    NotF,
    OrF,
    clause_to_formula,
    cube_to_formula,
    formula_constants,
)

Assertable = Union[Formula, Cube, Clause]


class SolverUnknown(Exception):
    """The backend could not decide a query; the whole run surfaces Unknown."""


class SolverProtocolError(Exception):
    pass


@dataclass
class Model:
    values: dict[Constant, Fraction]

    def __getitem__(self, c: Constant) -> Fraction:
        return self.values[c]

    def __contains__(self, c: Constant) -> bool:
        return c in self.values

    def get(self, c: Constant, default=None):
        return self.values.get(c, default)

    def int_value(self, c: Constant) -> int:
        v = self.values[c]
        assert v.denominator == 1
        return v.numerator


@dataclass
class Verdict:
    status: str  # "sat" | "unsat" | "unknown"
    model: Optional[Model] = None
    core: Optional[list[str]] = None
    reason: str = ""

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


def as_formula(x: Assertable) -> Formula:
    if isinstance(x, Cube):
        return cube_to_formula(x)
    if isinstance(x, Clause):
        return clause_to_formula(x)
    return x


# ---------------------------------------------------------------------------
# Encoding


def _encode_numeral(n: int) -> str:
    return str(n) if n >= 0 else f"(- {-n})"


def _encode_term(t) -> str:
    parts = []
    for c, n in t.coeffs:
        assert isinstance(n, int), "cannot encode a pattern hole"
        sym = sexpr.quote_symbol(c.name)
        if n == 1:
            parts.append(sym)
        else:
            parts.append(f"(* {_encode_numeral(n)} {sym})")
    if t.offset != 0 or not parts:
        parts.append(_encode_numeral(t.offset))
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def encode(f: Assertable) -> str:
    f = as_formula(f)
    if isinstance(f, Ineq):
        assert isinstance(f.bound, int)
        return f"(<= {_encode_term(f.term)} {_encode_numeral(f.bound)})"
    if isinstance(f, Divides):
        return (
            f"(= (mod {_encode_term(f.term)} {f.divisor}) "
            f"{_encode_numeral(f.remainder)})"
        )
    if isinstance(f, AndF):
        if not f.args:
            return "true"
        return "(and " + " ".join(encode(a) for a in f.args) + ")"
    if isinstance(f, OrF):
        if not f.args:
            return "false"
        return "(or " + " ".join(encode(a) for a in f.args) + ")"
    if isinstance(f, NotF):
        return f"(not {encode(f.arg)})"
    raise TypeError(type(f))


def _parse_value(e) -> Fraction:
    if isinstance(e, str):
        return Fraction(e)
    if len(e) == 2 and e[0] == "-":
        return -_parse_value(e[1])
    if len(e) == 3 and e[0] == "/":
        return _parse_value(e[1]) / _parse_value(e[2])
    if len(e) == 2 and e[0] == "to_real":
        return _parse_value(e[1])
    raise SolverProtocolError(f"unparseable model value {e!r}")


def parse_model_sexpr(e, signature: dict[str, Constant]) -> Model:
    if isinstance(e, list) and e and e[0] == "model":
        e = e[1:]
    values: dict[Constant, Fraction] = {}
    for entry in e:
        if not (isinstance(entry, list) and entry and entry[0] == "define-fun"):
            continue
        name = entry[1]
        c = signature.get(name)
        if c is None:
            continue
        values[c] = _parse_value(entry[4])
    for name, c in signature.items():
        values.setdefault(c, Fraction(0))
    return Model(values)


# ---------------------------------------------------------------------------
# Solver process discovery


def default_solver_command() -> list[str]:
    z3 = shutil.which("z3")
    if z3:
        return [z3, "-in", "-smt2"]
    cvc5 = shutil.which("cvc5")
    if cvc5:
        return [cvc5, "--incremental", "--produce-models", "--produce-unsat-cores"]
    return [sys.executable, "-m", "gspacer.smtserver"]


def solver_command_for(path: str) -> list[str]:
    base = os.path.basename(path)
    if "z3" in base:
        return [path, "-in", "-smt2"]
    if "cvc5" in base:
        return [path, "--incremental", "--produce-models", "--produce-unsat-cores"]
    return [path]


class SolverClient:
    """Owns one solver child process; not shareable across threads."""

    def __init__(self, cmd: Optional[Sequence[str]] = None, seed: Optional[int] = None):
        self.cmd = list(cmd) if cmd else default_solver_command()
        self.seed = seed
        self.proc: Optional[subprocess.Popen] = None
        self.n_queries = 0

    # -- process plumbing ---------------------------------------------------

    def _start(self) -> None:
        self.proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        self._write("(set-option :print-success false)")
        self._write("(set-option :produce-models true)")
        self._write("(set-option :produce-unsat-cores true)")
        if self.seed is not None and "z3" in os.path.basename(self.cmd[0]):
            self._write(f"(set-option :smt.random-seed {self.seed})")

    def _ensure(self) -> None:
        if self.proc is None or self.proc.poll() is not None:
            self._start()

    def _write(self, line: str) -> None:
        assert self.proc is not None and self.proc.stdin is not None
        self.proc.stdin.write(line + "\n")

    def _flush(self) -> None:
        assert self.proc is not None and self.proc.stdin is not None
        self.proc.stdin.flush()

    def _read_line(self) -> str:
        assert self.proc is not None and self.proc.stdout is not None
        line = self.proc.stdout.readline()
        if not line:
            raise SolverProtocolError("solver process closed its output")
        return line.strip()

    def _read_sexpr(self):
        assert self.proc is not None and self.proc.stdout is not None
        buf = ""
        depth = 0
        while True:
            line = self.proc.stdout.readline()
            if not line:
                raise SolverProtocolError("solver process closed its output")
            buf += line
            in_bar = in_str = False
            depth = 0
            for ch in buf:
                if in_bar:
                    in_bar = ch != "|"
                elif in_str:
                    in_str = ch != '"'
                elif ch == "|":
                    in_bar = True
                elif ch == '"':
                    in_str = True
                elif ch == "(":
                    depth += 1
                elif ch == ")":
                    depth -= 1
            if depth == 0 and buf.strip():
                exprs = sexpr.read_all(buf)
                if len(exprs) != 1:
                    raise SolverProtocolError(f"expected one s-expression, got {buf!r}")
                return exprs[0]

    def close(self) -> None:
        if self.proc is not None and self.proc.poll() is None:
            try:
                self._write("(exit)")
                self._flush()
            except (BrokenPipeError, OSError):
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
        self.proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- queries -------------------------------------------------------------

    def check(
        self,
        assertions: Sequence[tuple[Assertable, Optional[str]]],
        *,
        want_model: bool = True,
        want_core: bool = False,
        extra_constants: Iterable[Constant] = (),
    ) -> Verdict:
        """Run one push/check/pop cycle; fresh process on a crash."""
        for attempt in (0, 1):
            try:
                return self._check_once(assertions, want_model, want_core, extra_constants)
            except (SolverProtocolError, BrokenPipeError, OSError) as exc:
                self.close()
                if attempt == 1:
                    return Verdict("unknown", reason=f"solver process failure: {exc}")
        raise AssertionError("unreachable")

    def _check_once(self, assertions, want_model, want_core, extra_constants) -> Verdict:
        self._ensure()
        constants: dict[str, Constant] = {}
        encoded: list[tuple[str, str]] = []
        for i, (a, label) in enumerate(assertions):
            f = as_formula(a)
            for c in formula_constants(f):
                constants[c.name] = c
            encoded.append((label or f"a{i}", encode(f)))
        for c in extra_constants:
            constants[c.name] = c
        self.n_queries += 1
        self._write("(push 1)")
        for name in sorted(constants):
            c = constants[name]
            self._write(f"(declare-const {sexpr.quote_symbol(name)} {c.sort})")
        for label, text in encoded:
            self._write(f"(assert (! {text} :named {sexpr.quote_symbol(label)}))")
        self._write("(check-sat)")
        self._flush()
        status = self._read_line()
        if status.startswith("(error"):
            raise SolverProtocolError(status)
        verdict = Verdict(status)
        if status == "sat":
            if want_model:
                self._write("(get-model)")
                self._flush()
                verdict.model = parse_model_sexpr(self._read_sexpr(), constants)
        elif status == "unsat":
            if want_core:
                self._write("(get-unsat-core)")
                self._flush()
                core = self._read_sexpr()
                if not isinstance(core, list):
                    raise SolverProtocolError(f"bad core {core!r}")
                verdict.core = [str(x) for x in core]
        elif status == "unknown":
            self._write("(get-info :reason-unknown)")
            self._flush()
            try:
                info = self._read_sexpr()
                verdict.reason = sexpr.render(info) if isinstance(info, list) else str(info)
            except SolverProtocolError:
                verdict.reason = "unknown"
        else:
            raise SolverProtocolError(f"unexpected check-sat answer {status!r}")
        self._write("(pop 1)")
        self._flush()
        return verdict

    # -- convenience wrappers --------------------------------------------------

    def model_or_none(
        self, *parts: Assertable, extra_constants: Iterable[Constant] = ()
    ) -> Optional[Model]:
        v = self.check(
            [(p, None) for p in parts], want_model=True, extra_constants=extra_constants
        )
        if v.status == "unknown":
            raise SolverUnknown(v.reason)
        return v.model if v.is_sat else None

    def is_sat(self, *parts: Assertable) -> bool:
        v = self.check([(p, None) for p in parts], want_model=False)
        if v.status == "unknown":
            raise SolverUnknown(v.reason)
        return v.is_sat

    def entails(self, antecedents: Sequence[Assertable] | Assertable, consequent: Assertable) -> bool:
        """antecedents => consequent, i.e. antecedents and not(consequent) unsat."""
        if not isinstance(antecedents, (list, tuple)):
            antecedents = [antecedents]
        parts = [(p, None) for p in antecedents]
        parts.append((NotF(as_formula(consequent)), None))
        v = self.check(parts, want_model=False)
        if v.status == "unknown":
            raise SolverUnknown(v.reason)
        return v.is_unsat


class InProcessSolver:
    """Same query surface as :class:`SolverClient`, no child process.

    Drives the bundled server's solver object directly; used by the fuzz
    suites where process round-trips would dominate.
    """

    def __init__(self, seed: Optional[int] = None):
        self.n_queries = 0

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        pass

    def check(
        self,
        assertions,
        *,
        want_model: bool = True,
        want_core: bool = False,
        extra_constants: Iterable[Constant] = (),
    ) -> Verdict:
        from . import smtserver

        solver = smtserver.Solver()
        constants: dict[str, Constant] = {}
        items = []
        for i, (a, label) in enumerate(assertions):
            f = as_formula(a)
            for c in formula_constants(f):
                constants[c.name] = c
            items.append((label or f"a{i}", encode(f)))
        for c in extra_constants:
            constants[c.name] = c
        for name in sorted(constants):
            solver.declare(name, constants[name].sort)
        for label, text in items:
            solver.do_assert(sexpr.read_all(f"(! {text} :named {sexpr.quote_symbol(label)})")[0])
        self.n_queries += 1
        status = solver.check_sat()
        verdict = Verdict(status, reason=solver.unknown_reason)
        if status == "sat" and want_model:
            values = {
                c: solver.last_model[name]
                for name, c in constants.items()
                if name in solver.last_model
            }
            for c in constants.values():
                values.setdefault(c, Fraction(0))
            verdict.model = Model(values)
        elif status == "unsat" and want_core:
            verdict.core = list(solver._compute_core())
        return verdict

    model_or_none = SolverClient.model_or_none
    is_sat = SolverClient.is_sat
    entails = SolverClient.entails


Backend = Union[SolverClient, InProcessSolver]
