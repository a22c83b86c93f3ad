"""The main solving loop: frames, pob queue, reachable states, and the
scheduling of the local rules plus the three global guidance rules.

The loop follows the guarded-command reading: pop a pob; try to concretize
it; otherwise either derive a predecessor (and extend the reachable states
when the pob is reachable) or block it with an inductively generalized
lemma, then cluster the lemma and try Conjecture/Subsume, propagate, and
check for convergence.  Concretize and Conjecture are metered by per-pattern
gas; Subsume is not.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from . import mbp, rules
from .clustering import Cluster, ClusterStore
from .formula import (
    FALSE,
    Clause,
    Constant,
    Cube,
    Formula,
    NotF,
    clause_to_formula,
    conj,
    cube,
    cube_to_formula,
    disj,
    formula_constants,
    prime,
    rename_constants,
    unprime,
)
from .smt import Backend, SolverClient, SolverUnknown, Verdict, default_solver_command


@dataclass(frozen=True)
class TransitionSystem:
    """A safety problem <Init, Tr, Bad> over integer constants."""

    constants: tuple[Constant, ...]
    init: Formula
    trans: Formula
    bad: Cube

    def __post_init__(self):
        declared = set(self.constants)
        primed = {c.primed() for c in self.constants}
        if not formula_constants(self.init) <= declared:
            raise ValueError("init references undeclared constants")
        if not formula_constants(self.trans) <= declared | primed:
            raise ValueError("trans references undeclared constants")
        if not set(self.bad.constants()) <= declared:
            raise ValueError("bad references undeclared constants")
        if not self.bad.literals:
            raise ValueError("bad must be a non-trivial cube")


@dataclass
class EngineConfig:
    gas: int = 100
    max_frames: int = 200
    timeout: Optional[float] = None
    enable_subsume: bool = True
    enable_concretize: bool = True
    enable_conjecture: bool = True
    debug_invariants: bool = False
    min_cluster: int = 2
    solver_cmd: Optional[Sequence[str]] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class Safe:
    invariant: Formula
    level: int
    status: str = "safe"


@dataclass(frozen=True)
class Unsafe:
    depth: int
    status: str = "unsafe"


@dataclass(frozen=True)
class Unknown:
    reason: str
    status: str = "unknown"


SolveResult = Union[Safe, Unsafe, Unknown]


@dataclass(frozen=True)
class Pob:
    cube: Cube
    level: int
    origin: str  # "bad" | "pred" | "concretize" | "conjecture"

    @property
    def is_may(self) -> bool:
        return self.origin in ("concretize", "conjecture")


class InvariantViolation(AssertionError):
    """Raised by --debug-invariants when a frame invariant breaks."""


def check_invariant(inv: Formula, ts: TransitionSystem, backend: Backend) -> bool:
    """Init => inv, inv and Tr => inv', inv => not Bad."""
    primed = prime(inv, ts.constants)
    return (
        backend.entails(ts.init, inv)
        and backend.entails(conj([inv, ts.trans]), primed)
        and backend.entails(inv, NotF(cube_to_formula(ts.bad)))
    )


class Engine:
    def __init__(
        self,
        ts: TransitionSystem,
        config: Optional[EngineConfig] = None,
        backend: Optional[Backend] = None,
    ):
        self.ts = ts
        self.config = config or EngineConfig()
        if backend is None:
            cmd = self.config.solver_cmd or default_solver_command()
            backend = SolverClient(cmd, seed=self.config.seed)
            self._owns_backend = True
        else:
            self._owns_backend = False
        self.backend = backend
        self.frames: list[set[Clause]] = [set(), set()]
        self.frame_version = [0, 0]
        self.N = 0
        self.U: list[Formula] = [ts.init]
        self._u_seen = {ts.init}
        self.store = ClusterStore(self.config.gas, self.config.min_cluster)
        self.queue: list[tuple[int, int, int, Pob]] = []
        self._queued: dict[tuple[Cube, int], int] = {}
        self._seq = 0
        self._blocks_memo: dict[tuple[Cube, Clause], bool] = {}
        self._partial_memo: dict[tuple[Cube, Clause], bool] = {}
        self._prop_fail: dict[tuple[int, Clause], int] = {}
        self._safe_fail: dict[tuple[int, Clause], int] = {}
        self._subsume_seen: set = set()
        self._debug_init_ok: set[Clause] = set()
        self._debug_ri_ok: set[tuple[int, int, int]] = set()
        self.stats = {
            "frames": 0,
            "lemmas": 0,
            "pobs": 0,
            "n_subsume": 0,
            "n_concretize": 0,
            "n_conjecture": 0,
            "n_smt": 0,
            "depth": 0,
        }

    # -- formula plumbing ----------------------------------------------------

    def frame_formula(self, j: int) -> Formula:
        if j < 0:
            return FALSE
        if j >= len(self.frames):
            return conj([])
        lemmas = sorted(
            self.frames[j],
            key=lambda cl: tuple(l.sort_key() for l in cl.cube.literals),
        )
        parts = [clause_to_formula(cl) for cl in lemmas]
        if j == 0:
            parts.insert(0, self.ts.init)
        return conj(parts)

    def u_formula(self) -> Formula:
        return disj(self.U)

    def f_of(self, phi: Formula) -> Formula:
        """F(phi) = U' or (phi and Tr)."""
        u_primed = prime(self.u_formula(), self.ts.constants)
        if phi is FALSE:
            return u_primed
        return disj([u_primed, conj([phi, self.ts.trans])])

    def _primed(self, f):
        return prime(f, self.ts.constants)

    # -- queue ---------------------------------------------------------------

    def _push_pob(self, pob: Pob) -> None:
        key = (pob.cube, pob.level)
        if self._queued.get(key, 0) > 0:
            return
        self._queued[key] = self._queued.get(key, 0) + 1
        self._seq += 1
        heapq.heappush(
            self.queue, (pob.level, len(pob.cube.literals), self._seq, pob)
        )

    def _pop_pob(self) -> Optional[Pob]:
        if not self.queue:
            return None
        _, _, _, pob = heapq.heappop(self.queue)
        self._queued[(pob.cube, pob.level)] -= 1
        return pob

    # -- lemma bookkeeping -----------------------------------------------------

    def _ensure_frames(self) -> None:
        while len(self.frames) < self.N + 2:
            self.frames.append(set())
            self.frame_version.append(0)

    def _add_lemma(self, lemma: Clause, upto: int) -> bool:
        """Conjoin the lemma to every frame at or below ``upto``."""
        self._ensure_frames()
        upto = min(upto, len(self.frames) - 1)
        added = False
        for j in range(upto + 1):
            if lemma not in self.frames[j]:
                self.frames[j].add(lemma)
                self.frame_version[j] += 1
                added = True
        if added:
            self.stats["lemmas"] += 1
        self.store.note_level(lemma, upto)
        return added

    # -- blocking predicates -----------------------------------------------------

    def _blocks(self, pob_cube: Cube, lemma: Clause) -> bool:
        key = (pob_cube, lemma)
        if key not in self._blocks_memo:
            self._blocks_memo[key] = not self.backend.is_sat(
                pob_cube, clause_to_formula(lemma)
            )
        return self._blocks_memo[key]

    def _partially_blocks(self, pob_cube: Cube, lemma: Clause) -> bool:
        key = (pob_cube, lemma)
        if key not in self._partial_memo:
            self._partial_memo[key] = self.backend.is_sat(
                pob_cube, clause_to_formula(lemma)
            ) and self.backend.is_sat(pob_cube, cube_to_formula(lemma.cube))
        return self._partial_memo[key]

    # -- level searches -----------------------------------------------------------

    def _max_level_blocking(self, c: Cube) -> int:
        """max { j <= N : O_j => not c }, or 0 when even O_0 fails."""
        not_c = NotF(cube_to_formula(c))
        k = -1
        for j in range(self.N + 1):
            if self.backend.entails(self.frame_formula(j), not_c):
                k = j
            else:
                break
        return max(k, 0)

    def _max_level_f_entails(self, lemma: Clause) -> Optional[int]:
        """max { j <= N : F(O_j) => lemma' }, or None when F(O_0) fails."""
        target = self._primed(clause_to_formula(lemma))
        k = None
        for j in range(self.N + 1):
            if self.backend.entails(self.f_of(self.frame_formula(j)), target):
                k = j
            else:
                break
        return k

    # -- main loop --------------------------------------------------------------

    def solve(self) -> SolveResult:
        try:
            result = self._solve_loop()
        except SolverUnknown as exc:
            result = Unknown(f"smt backend: {exc}")
        except mbp.ProjectionError as exc:
            result = Unknown(f"projection failure: {exc}")
        self.stats["frames"] = self.N
        self.stats["n_smt"] = self.backend.n_queries
        if isinstance(result, Safe):
            self.stats["depth"] = result.level
        elif isinstance(result, Unsafe):
            self.stats["depth"] = result.depth
        else:
            self.stats["depth"] = self.N
        return result

    def close(self) -> None:
        if self._owns_backend:
            self.backend.close()

    def _deadline_exceeded(self, start: float) -> bool:
        t = self.config.timeout
        return t is not None and (time.monotonic() - start) > t

    def _solve_loop(self) -> SolveResult:
        start = time.monotonic()
        self._push_pob(Pob(self.ts.bad, 0, "bad"))
        while True:
            if self._deadline_exceeded(start):
                return Unknown("timeout")
            pob = self._pop_pob()
            if pob is None:
                return Unknown("pob queue exhausted")
            self.stats["pobs"] += 1
            if self.concretize_pob(pob):
                self._debug_check()
                continue
            verdict = self._check_pob(pob)
            if verdict.status == "unknown":
                raise SolverUnknown(verdict.reason)
            if verdict.is_sat:
                self.add_predecessor(pob, verdict)
                if self.backend.is_sat(self.u_formula(), self.ts.bad):
                    return Unsafe(self.N)
            else:
                self.block(pob, verdict)
                self.propagate()
                safe = self.check_safe()
                if safe is not None:
                    return safe
                if self.backend.entails(
                    self.frame_formula(self.N), NotF(cube_to_formula(self.ts.bad))
                ):
                    if self.N >= self.config.max_frames:
                        return Unknown(f"frame cap {self.config.max_frames} reached")
                    self.N += 1
                    self._ensure_frames()
                    self._push_pob(Pob(self.ts.bad, self.N, "bad"))
            self._debug_check()

    def _check_pob(self, pob: Pob) -> Verdict:
        parts: list[tuple] = [(self.f_of(self.frame_formula(pob.level - 1)), "ctx")]
        primed = self._primed(pob.cube)
        for k, lit in enumerate(primed.literals):
            parts.append((lit, f"lit{k}"))
        return self.backend.check(parts, want_model=True, want_core=True)

    # -- rule implementations ------------------------------------------------------

    def concretize_pob(self, pob: Pob) -> bool:
        if not self.config.enable_concretize:
            return False
        if pob.cube.has_divides():
            return False
        cluster = self.store.cluster_for_pob(pob.cube, pob.level, self._blocks)
        if cluster is None or not cluster.pattern.is_nonlinear():
            return False
        if self.store.gas_of(cluster.pattern) <= 0:
            return False
        blockers = [l for l in cluster.lemmas() if self._partially_blocks(pob.cube, l)]
        if not blockers:
            return False
        gamma = rules.concretize(
            pob.cube, blockers, cluster.pattern.coefficient_hole_constants(), self.backend
        )
        if gamma is None or gamma == pob.cube or not gamma.literals:
            return False
        self.store.spend_gas(cluster.pattern)
        self.stats["n_concretize"] += 1
        k = self._max_level_blocking(gamma)
        self._push_pob(Pob(gamma, k, "concretize"))
        self._push_pob(pob)
        return True

    def add_predecessor(self, pob: Pob, ctx_verdict: Verdict) -> None:
        xs = set(self.ts.constants)
        primed_pob = self._primed(cube_to_formula(pob.cube))
        f_u = self.f_of(self.u_formula())
        model = self.backend.model_or_none(
            f_u, primed_pob, extra_constants=[c.primed() for c in self.ts.constants]
        )
        if model is not None:
            # Successor: extend the reachable states.
            post = mbp.project_formula(xs, f_u, model.values)
            state = unprime(post, self.ts.constants)
            f = cube_to_formula(state)
            if f not in self._u_seen:
                self._u_seen.add(f)
                self.U.append(f)
                if self.config.debug_invariants and not self.backend.is_sat(
                    self._primed(f), f_u
                ):
                    raise InvariantViolation("successor state outside F(U)")
            return
        assert pob.level > 0, "level-0 pobs are always reachable from U"
        assert ctx_verdict.model is not None
        pred = mbp.project_formula(
            {c.primed() for c in self.ts.constants},
            conj([self.ts.trans, primed_pob]),
            ctx_verdict.model.values,
        )
        self._push_pob(Pob(pred, pob.level - 1, "pred"))
        self._push_pob(pob)

    def block(self, pob: Pob, verdict: Verdict) -> None:
        core_idx = set()
        for label in verdict.core or []:
            if label.startswith("lit"):
                core_idx.add(int(label[3:]))
        lemma = self.inductive_generalize(pob.cube, pob.level, core_idx)
        self._add_lemma(lemma, pob.level)
        self.store.insert_lemma(lemma, pob.level)
        cluster = self.store.cluster_of(lemma)
        if cluster is None:
            return
        self._apply_global_rules(pob, cluster)

    def _apply_global_rules(self, pob: Pob, cluster: Cluster) -> None:
        if (
            self.config.enable_conjecture
            and self.store.gas_of(cluster.pattern) > 0
        ):
            alpha = rules.conjecture(
                pob.cube, cluster.lemmas(), self.u_formula(), self.backend
            )
            if alpha is not None:
                self.store.spend_gas(cluster.pattern)
                self.stats["n_conjecture"] += 1
                k = self._max_level_blocking(alpha)
                self._push_pob(Pob(alpha, k, "conjecture"))
        if self.config.enable_subsume:
            state = (
                cluster.pattern,
                frozenset(tuple(sorted(s.items())) for _, s in cluster.members),
            )
            if state in self._subsume_seen:
                return
            self._subsume_seen.add(state)
            phi = rules.apply_subsume(cluster, self.backend)
            if phi is not None and phi.literals:
                subsumed = Clause(phi)
                k = self._max_level_f_entails(subsumed)
                if k is not None:
                    self.stats["n_subsume"] += 1
                    self._add_lemma(subsumed, k + 1)
                    self.store.insert_lemma(subsumed, min(k + 1, self.N + 1))

    def inductive_generalize(self, pob_cube: Cube, level: int, core_idx) -> Clause:
        lits = list(pob_cube.literals)
        if core_idx:
            lits = [l for k, l in enumerate(lits) if k in core_idx]
        candidate = lits
        if self.config.debug_invariants and not self._lemma_ok(candidate, level):
            raise InvariantViolation("unsat core is not relatively inductive")
        # Drop later literals first: keeps the bias toward the earliest
        # canonical literals, matching the core-minimization preference.
        for lit in reversed(list(candidate)):
            if len(candidate) == 1:
                break
            trial = [l for l in candidate if l != lit]
            if self._lemma_ok(trial, level):
                candidate = trial
        return Clause(cube(candidate))

    def _lemma_ok(self, lits, level: int) -> bool:
        cl = Clause(cube(lits))
        cf = clause_to_formula(cl)
        if not self.backend.entails(self.ts.init, cf):
            return False
        f = self.f_of(conj([cf, self.frame_formula(level - 1)]))
        return self.backend.entails(f, self._primed(cf))

    def propagate(self) -> None:
        changed = True
        while changed:
            changed = False
            for j in range(self.N + 1):
                self._ensure_frames()
                pending = sorted(
                    self.frames[j] - self.frames[j + 1],
                    key=lambda cl: tuple(l.sort_key() for l in cl.cube.literals),
                )
                for lemma in pending:
                    key = (j, lemma)
                    if self._prop_fail.get(key) == self.frame_version[j]:
                        continue
                    body = conj([self.frame_formula(j), self.ts.trans])
                    if self.backend.entails(
                        body, self._primed(clause_to_formula(lemma))
                    ):
                        self.frames[j + 1].add(lemma)
                        self.frame_version[j + 1] += 1
                        self.store.note_level(lemma, j + 1)
                        changed = True
                    else:
                        self._prop_fail[key] = self.frame_version[j]

    def check_safe(self) -> Optional[Safe]:
        for j in range(1, self.N):
            diff = self.frames[j - 1] - self.frames[j]
            ok = True
            for lemma in sorted(
                diff, key=lambda cl: tuple(l.sort_key() for l in cl.cube.literals)
            ):
                key = (j, lemma)
                if self._safe_fail.get(key) == self.frame_version[j]:
                    ok = False
                    break
                if not self.backend.entails(
                    self.frame_formula(j), clause_to_formula(lemma)
                ):
                    self._safe_fail[key] = self.frame_version[j]
                    ok = False
                    break
            if ok and j - 1 == 0:
                key0 = (j, Clause(cube([])))
                if self._safe_fail.get(key0) == self.frame_version[j]:
                    ok = False
                elif not self.backend.entails(self.frame_formula(j), self.ts.init):
                    self._safe_fail[key0] = self.frame_version[j]
                    ok = False
            if ok:
                inv = self.frame_formula(j)
                if not check_invariant(inv, self.ts, self.backend):
                    raise InvariantViolation(
                        "inductive frame failed the invariant re-check"
                    )
                return Safe(inv, j)
        return None

    # -- debug checks --------------------------------------------------------------

    def _debug_check(self) -> None:
        if not self.config.debug_invariants:
            return
        for j in range(len(self.frames) - 1):
            if not self.frames[j + 1] <= self.frames[j]:
                raise InvariantViolation(f"frames {j + 1} not a subset of {j}")
        for lemma in sorted(
            self.frames[0], key=lambda cl: tuple(l.sort_key() for l in cl.cube.literals)
        ):
            if lemma not in self._debug_init_ok:
                if not self.backend.entails(self.ts.init, clause_to_formula(lemma)):
                    raise InvariantViolation(f"frame 0 lemma not implied by init: {lemma}")
                self._debug_init_ok.add(lemma)
        for j in range(min(self.N, len(self.frames) - 2) + 1):
            key = (j, self.frame_version[j], self.frame_version[j + 1])
            if key in self._debug_ri_ok:
                continue
            body = conj([self.frame_formula(j), self.ts.trans])
            target = self._primed(self.frame_formula(j + 1))
            if not self.backend.entails(body, target):
                raise InvariantViolation(f"relative induction broken at frame {j}")
            self._debug_ri_ok.add(key)
