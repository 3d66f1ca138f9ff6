"""Frames, proof obligations and the main inference loop.

Frames are not stored explicitly.  Every lemma carries the index of the
highest frame it belongs to (an integer or ``inf``) and frame ``F_i`` is
the set of lemmas whose index is at least ``i``.  Frames are therefore
nested by construction and ``F_i = F_{i+1}`` holds exactly when no lemma
sits at index ``i``.

Two tasks share the lemma store.  The learning task blocks states that
prevent safety lemmas from being pushed (must-obligations); the heuristic
task does the same for randomly chosen lemmas that are not yet pushed as
far as safety (may-obligations).  Reachable states found along the way
mark lemmas as bad and become positive examples for generalization.
"""

from __future__ import annotations

import logging
import math
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .epr import skolem_edges
from .ig import ConstraintStore, IGConfig, IGResult, InductiveGeneralizer, alternations, format_shape
from .logic import (
    And, Formula, PrenexFormula, Structure, conjuncts, evaluate, literal_count, negate,
    to_prenex,
)
from .oracle import Oracle, OracleUnknown, verify_trace
from .syntax import TransitionSystem, print_formula
from .util import CancelToken, Cancelled, EventLog, WallClock, WorkClock

logger = logging.getLogger(__name__)

INF = math.inf


@dataclass
class Lemma:
    id: int
    formula: PrenexFormula
    frame: float
    origin: str  # 'init' | 'safety' | 'learned'
    bad: bool = False

    def __post_init__(self) -> None:
        self.f: Formula = self.formula.to_formula()

    def frame_str(self) -> str:
        return 'inf' if self.frame == INF else str(int(self.frame))


# ---------------------------------------------------------------------------
# Block targets

@dataclass(frozen=True)
class Obligation:
    state: Structure
    frame: int


@dataclass(frozen=True)
class ReachableChain:
    states: Tuple[Structure, ...]


@dataclass(frozen=True)
class NonePending:
    reason: str = ''


BlockTarget = Union[Obligation, ReachableChain, NonePending]


# ---------------------------------------------------------------------------
# Lemma store

class LemmaStore:
    """The shared frame sequence plus known reachable states."""

    def __init__(self, log: Optional[EventLog] = None) -> None:
        self.lemmas: List[Lemma] = []
        self.reachable: List[Structure] = []
        self._reachable_set: set = set()
        self.lock = threading.RLock()
        self.log = log or EventLog()
        self.listeners: List = []
        self.version = 0

    def snapshot(self) -> List[Tuple[Lemma, float, bool]]:
        with self.lock:
            return [(l, l.frame, l.bad) for l in self.lemmas]

    def frame(self, i: float) -> List[Lemma]:
        """Lemmas of ``F_i``.

        Bad lemmas stay in the frames they were proven for: they are still
        valid over-approximations there, and dropping them could break
        ``F_i => wp(F_{i+1})`` for lemmas pushed with their help.
        """
        with self.lock:
            return [l for l in self.lemmas if l.frame >= i]

    def frame_formulas(self, i: float) -> List[Formula]:
        return [l.f for l in self.frame(i)]

    def all_lemmas(self) -> List[Lemma]:
        with self.lock:
            return list(self.lemmas)

    def finite_frames(self) -> List[int]:
        with self.lock:
            return sorted({int(l.frame) for l in self.lemmas if l.frame != INF})

    def at_infinity(self) -> List[Lemma]:
        with self.lock:
            return [l for l in self.lemmas if l.frame == INF and not l.bad]

    def safety_lemmas(self) -> List[Lemma]:
        with self.lock:
            return [l for l in self.lemmas if l.origin == 'safety']

    def _changed(self, event: str, **fields) -> None:
        self.version += 1
        self.log.emit(event, **fields)
        for cb in list(self.listeners):
            cb(event)

    def add(self, formula: PrenexFormula, frame: float, origin: str) -> Lemma:
        with self.lock:
            for l in self.lemmas:
                if l.formula == formula and not l.bad:
                    if l.frame < frame:
                        l.frame = frame
                        self._changed('pushed', lemma=l.id, frame=l.frame_str(), reason='relearned')
                    return l
            lemma = Lemma(len(self.lemmas), formula, frame, origin)
            self.lemmas.append(lemma)
            shape = formula.kinds()
            self._changed('lemma-added', lemma=lemma.id, frame=lemma.frame_str(), origin=origin,
                          prefix=format_shape(shape), alternations=alternations(shape),
                          formula=print_formula(lemma.f))
            return lemma

    def push(self, lemma: Lemma, from_frame: int) -> bool:
        with self.lock:
            if lemma.frame != from_frame or lemma.bad:
                return False
            lemma.frame = from_frame + 1
            self._changed('pushed', lemma=lemma.id, frame=lemma.frame_str())
            return True

    def promote(self) -> List[int]:
        """Move everything above an empty frame to infinity; returns promoted ids."""
        with self.lock:
            finite = sorted({int(l.frame) for l in self.lemmas if l.frame != INF})
            if not finite:
                return []
            top = finite[-1]
            present = set(finite)
            gap = next((i for i in range(0, top) if i not in present), None)
            if gap is None:
                return []
            moved = [l for l in self.lemmas if l.frame != INF and l.frame > gap]
            for l in moved:
                l.frame = INF
            ids = [l.id for l in moved]
            self._changed('promoted-inf', lemmas=ids, empty_frame=gap)
            return ids

    def mark_bad(self, lemma: Lemma) -> bool:
        with self.lock:
            if lemma.bad:
                return False
            lemma.bad = True
            self._changed('bad', lemma=lemma.id, frame=lemma.frame_str())
            return True

    def add_reachable(self, states: Sequence[Structure]) -> List[Structure]:
        with self.lock:
            new = [s for s in states if s not in self._reachable_set]
            for s in new:
                self._reachable_set.add(s)
                self.reachable.append(s)
            if new:
                self.log.emit('reachable', count=len(new), total=len(self.reachable))
            return new


# ---------------------------------------------------------------------------
# Meta-invariant audit

@dataclass
class AuditReport:
    checks: int = 0
    audits: int = 0
    violations: List[str] = field(default_factory=list)


class FrameAuditor:
    """Re-checks frame conditions with the oracle after every store mutation.

    Checked: every lemma holds initially (Init => F_0), frames are nested
    (by the index representation, verified structurally), every lemma at a
    finite index f >= 1 satisfies F_{f-1} => wp(lemma), and F_inf is
    inductive.  Results of identical queries are cached.
    """

    def __init__(self, oracle: Oracle, store: LemmaStore) -> None:
        self.oracle = oracle
        self.store = store
        self.report = AuditReport()
        self._cache: Dict[tuple, bool] = {}
        self._lock = threading.Lock()

    def _valid(self, key: tuple, check) -> bool:
        with self._lock:
            got = self._cache.get(key)
        if got is None:
            self.report.checks += 1
            try:
                got = check() is None
            except OracleUnknown:
                return True
            with self._lock:
                self._cache[key] = got
        return got

    def audit(self, event: str = '') -> None:
        snap = self.store.snapshot()
        self.report.audits += 1
        by_frame = lambda i: [(l, fr) for l, fr, _ in snap if fr >= i]
        for l, fr, _ in snap:
            if fr < 0:
                self._violation(f'lemma {l.id} has negative frame')
            if not self._valid(('init', l.id), lambda: self.oracle.initiation(l.f)):
                self._violation(f'Init => F_0 fails for lemma {l.id} after {event}')
        for l, fr, _ in snap:
            if fr == INF or fr < 1:
                continue
            below = by_frame(fr - 1)
            key = ('step', l.id, frozenset(x.id for x, _ in below))
            if not self._valid(key, lambda: self.oracle.consecution([x.f for x, _ in below], l.f)):
                self._violation(f'F_{int(fr) - 1} => wp(lemma {l.id}) fails after {event}')
        top = [(l, fr) for l, fr, _ in snap if fr == INF]
        ids = frozenset(x.id for x, _ in top)
        for l, _ in top:
            if not self._valid(('inf', l.id, ids), lambda: self.oracle.consecution([x.f for x, _ in top], l.f)):
                self._violation(f'F_inf => wp(lemma {l.id}) fails after {event}')

    def _violation(self, msg: str) -> None:
        logger.error('frame audit: %s', msg)
        self.report.violations.append(msg)


# ---------------------------------------------------------------------------
# Configuration and results

@dataclass
class PDRConfig:
    mode: str = 'fol'
    threads: int = 2
    seed: int = 0
    bound: Union[int, Dict[str, int]] = 3
    max_depth: int = 6
    timeout: Optional[float] = 600.0
    k: Optional[int] = None
    sequential: bool = False
    debug_audit: bool = False
    verify_extra: int = 2
    allowed_edges: Optional[frozenset] = None
    external: object = None
    backoff_base: float = 1.0


@dataclass
class VerificationReport:
    bound: object
    initiation: bool
    consecution: bool
    safety: bool
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.initiation and self.consecution and self.safety


@dataclass
class PDRResult:
    status: str  # 'invariant' | 'unsafe' | 'timeout'
    invariant: List[PrenexFormula] = field(default_factory=list)
    trace: List[Structure] = field(default_factory=list)
    verification: Optional[VerificationReport] = None
    stats: Dict[str, object] = field(default_factory=dict)
    reason: str = ''
    audit: Optional[AuditReport] = None


class _Unsafe(Exception):
    def __init__(self, trace: List[Structure]) -> None:
        super().__init__('unsafe')
        self.trace = trace


class _Found(Exception):
    pass


class _SharedQuery:
    def __init__(self) -> None:
        self.done = threading.Event()
        self.result: Optional[IGResult] = None


def verify_invariant(system: TransitionSystem, invariant: Sequence[Formula], bound,
                     oracle: Optional[Oracle] = None) -> VerificationReport:
    """Check Init => I, I => wp(I) and I => Safe at the given bound."""
    o = oracle or Oracle(system, bound)
    failures: List[str] = []
    inv = list(invariant)
    init_ok = cons_ok = safe_ok = True
    for f in inv:
        m = o.initiation(f)
        if m is not None:
            init_ok = False
            failures.append(f'not initial: {print_formula(f)}')
    for f in inv:
        t = o.consecution(inv, f)
        if t is not None:
            cons_ok = False
            failures.append(f'not preserved: {print_formula(f)}')
    m = o.implies(inv, o.safety)
    if m is not None:
        safe_ok = False
        failures.append('does not imply safety')
    return VerificationReport(bound, init_ok, cons_ok, safe_ok, failures)


def _bump(bound, extra: int):
    if isinstance(bound, int):
        return bound + extra
    return {s: b + extra for s, b in dict(bound).items()}


# ---------------------------------------------------------------------------
# The engine

class PDR:
    def __init__(self, system: TransitionSystem, config: Optional[PDRConfig] = None,
                 log: Optional[EventLog] = None) -> None:
        self.system = system
        self.config = config or PDRConfig()
        cfg = self.config
        self.clock = WorkClock() if cfg.sequential else WallClock()
        self.log = log or EventLog(clock=self.clock)
        self.oracle = Oracle(system, cfg.bound, external=cfg.external, clock=self.clock)
        self.store = LemmaStore(self.log)
        workers = 1 if cfg.sequential else max(1, cfg.threads // 2)
        self.ig = InductiveGeneralizer(
            self.oracle,
            IGConfig(mode=cfg.mode, workers=workers, max_depth=cfg.max_depth, k=cfg.k,
                     allowed_edges=cfg.allowed_edges if cfg.mode == 'epr' else None,
                     rotation=cfg.sequential),
            self.log, self.clock, ConstraintStore())
        self.rng = random.Random(cfg.seed)
        self.root = CancelToken()
        self.exact = cfg.mode != 'universal'
        self.safety = self.oracle.safety
        self.init = self.oracle.init
        self._push_failures: Dict[tuple, object] = {}
        self._active: List[Tuple[List[Structure], int, CancelToken]] = []
        self._active_lock = threading.Lock()
        self._inflight: Dict[tuple, _SharedQuery] = {}
        self._done = threading.Event()
        self._outcome: Optional[Tuple[str, object]] = None
        self._outcome_lock = threading.Lock()
        self._inf_checked = -1
        self.auditor = FrameAuditor(Oracle(system, cfg.bound), self.store) if cfg.debug_audit else None
        self.store.listeners.append(self._on_change)
        self.epr_violations: List[str] = []

    # -- bookkeeping -----------------------------------------------------

    def _on_change(self, event: str) -> None:
        if self.auditor is not None:
            before = len(self.auditor.report.violations)
            self.auditor.audit(event)
            for msg in self.auditor.report.violations[before:]:
                self.log.emit('audit-violation', message=msg)
        if event in ('lemma-added', 'pushed', 'promoted-inf'):
            self._cancel_solved_queries()

    def _cancel_solved_queries(self) -> None:
        with self._active_lock:
            active = list(self._active)
        for states, frame, token in active:
            if token.cancelled:
                continue
            lemmas = self.store.frame(frame)
            if all(any(not evaluate(s, l.f) for l in lemmas) for s in states):
                self.log.emit('ig-cancelled', frame=frame)
                token.cancel()

    def _finish(self, kind: str, payload: object) -> None:
        with self._outcome_lock:
            if self._outcome is None:
                self._outcome = (kind, payload)
        self._done.set()
        self.root.cancel()

    def _check(self) -> None:
        if self._done.is_set() or self.root.cancelled:
            raise Cancelled()

    # -- frames ----------------------------------------------------------

    def init_frames(self) -> None:
        m = self.oracle.initiation(self.safety, self.root)
        if m is not None:
            raise _Unsafe([m])
        inits = [c for f in self.system.inits for c in conjuncts(f)] or [And(())]
        safes = [c for f in self.system.safeties for c in conjuncts(f)] or [And(())]
        for c in inits:
            self.store.add(to_prenex(c), 0, 'init')
        for c in safes:
            self.store.add(to_prenex(c), 0, 'safety')
        self.push_fixpoint()

    def pushing_preventer(self, lemma: Lemma, i: int, extra: Sequence[Tuple[Formula, int]] = ()):
        """A transition from F_i to a state violating the lemma, or None."""
        frame = self.store.frame(i)
        base = [l.f for l in frame]
        key = (lemma.id, i, len(frame))
        if not extra and key in self._push_failures:
            return self._push_failures[key]
        more = [f for f, fr in extra if fr >= i]
        edge = self.oracle.consecution(base + more, lemma.f, cancel=self.root)
        if not extra and edge is not None:
            self._push_failures[key] = edge
        return edge

    def push_fixpoint(self) -> None:
        while True:
            self._check()
            changed = False
            for i in self.store.finite_frames():
                for lemma in [l for l in self.store.frame(i) if l.frame == i and not l.bad]:
                    try:
                        edge = self.pushing_preventer(lemma, i)
                    except OracleUnknown as e:
                        if self.root.cancelled:
                            raise Cancelled()
                        logger.info('push of lemma %d undecided: %s', lemma.id, e.reason)
                        continue
                    if edge is None and self.store.push(lemma, i):
                        changed = True
            if self.store.promote():
                changed = True
            if not changed:
                break
        self._check_invariant()

    def _check_invariant(self) -> None:
        with self.store.lock:
            version = self.store.version
            if self._inf_checked == version:
                return
            self._inf_checked = version
        safety = self.store.safety_lemmas()
        if all(l.frame == INF for l in safety):
            self._finish('invariant', None)
            return
        top = self.store.at_infinity()
        if top:
            m = self.oracle.implies([l.f for l in top], self.safety, cancel=self.root)
            if m is None:
                self._finish('invariant', None)

    # -- blocking --------------------------------------------------------

    def to_block(self, lemma: Lemma, extra: Sequence[Tuple[Formula, int]] = (),
                 exact: Optional[bool] = None) -> BlockTarget:
        """Find the deepest state that must be excluded for the lemma to be pushed."""
        exact = self.exact if exact is None else exact
        if lemma.frame == INF or lemma.bad:
            return NonePending('not pushable')
        i = int(lemma.frame)
        try:
            edge = self.pushing_preventer(lemma, i, extra)
            if edge is None:
                return NonePending('pushable')
            s, j = edge.pre, i
            while j >= 1 and not evaluate(s, self.init):
                frame = self.store.frame_formulas(j - 1) + [f for f, fr in extra if fr >= j - 1]
                pred = self.oracle.predecessor(frame, s, exact, cancel=self.root)
                if pred is None:
                    self.log.emit('obligation', lemma=lemma.id, frame=j)
                    return Obligation(s, j)
                s, j = pred.pre, j - 1
        except OracleUnknown as e:
            if self.root.cancelled:
                raise Cancelled()
            return NonePending(f'oracle: {e.reason}')
        # s is initial and reaches a violation of the lemma in i - j + 1 steps.
        try:
            trace = self.oracle.bmc(i - j + 1, negate(lemma.f), cancel=self.root)
        except OracleUnknown as e:
            if self.root.cancelled:
                raise Cancelled()
            return NonePending(f'oracle: {e.reason}')
        if trace is None:
            if not exact:
                return self.to_block(lemma, extra, exact=True)
            logger.warning('descent found an initial state but no concrete trace')
            return NonePending('no trace')
        if not verify_trace(self.system, trace):
            raise AssertionError('bounded model checking returned an invalid trace')
        return ReachableChain(tuple(trace))

    def _handle_chain(self, lemma: Lemma, chain: ReachableChain) -> None:
        states = list(chain.states)
        self.store.add_reachable(states)
        for s in states:
            self.ig.store.add_positive(s)
        for l in self.store.all_lemmas():
            if not l.bad and any(not evaluate(s, l.f) for s in states):
                if l.origin == 'safety':
                    raise _Unsafe(states)
                self.store.mark_bad(l)
        if any(not evaluate(s, self.safety) for s in states):
            raise _Unsafe(states)

    def _ig(self, states: List[Structure], frame: int, cancel: CancelToken) -> IGResult:
        # Both tasks often reach the same obligation at once; the later one waits for the first.
        key = (frame, frozenset(states))
        with self._active_lock:
            shared = self._inflight.get(key)
            owner = shared is None
            if owner:
                shared = self._inflight[key] = _SharedQuery()
            entry = (states, frame, cancel)
            self._active.append(entry)
        try:
            if not owner:
                self.log.emit('ig-shared', frame=frame, states=len(states))
                while not shared.done.wait(0.05):
                    if cancel.cancelled:
                        return IGResult('cancelled')
                if shared.result is not None:
                    return shared.result
            res = self.ig.query(states, frame, self.store.frame_formulas(frame - 1), cancel)
            shared.result = res
            return res
        finally:
            with self._active_lock:
                self._active.remove(entry)
                if owner:
                    del self._inflight[key]
            if owner:
                shared.done.set()

    def multiblock(self, lemma: Lemma, state: Structure, frame: int) -> bool:
        """Generalize from one obligation, widening to sibling preventers while cheap."""
        states = [state]
        cancel = CancelToken(self.root)
        t0 = self.clock.now()
        res = self._ig(list(states), frame, cancel)
        budget = self.clock.now() - t0
        if res.status != 'solved':
            self._check()
            return res.status == 'cancelled'
        best = res.lemma
        spent = 0.0
        while spent <= budget:
            target = self.to_block(lemma, extra=[(best.to_formula(), frame)])
            if not isinstance(target, Obligation) or target.frame != frame:
                break
            if target.state in states:
                break
            states.append(target.state)
            self.log.emit('multiblock', lemma=lemma.id, frame=frame, states=len(states))
            t1 = self.clock.now()
            r = self._ig(list(states), frame, CancelToken(self.root))
            spent += self.clock.now() - t1
            if r.status != 'solved':
                states.pop()
                break
            best = r.lemma
        self._check()
        self._add_learned(best, frame, states)
        self.push_fixpoint()
        return True

    def _add_learned(self, p: PrenexFormula, frame: int, states: Sequence[Structure]) -> None:
        f = p.to_formula()
        for s in states:
            if evaluate(s, f):
                raise AssertionError('learned lemma does not exclude its obligation state')
        if self.config.mode == 'epr' and self.config.allowed_edges is not None:
            if not skolem_edges(p.kinds()) <= self.config.allowed_edges:
                self.epr_violations.append(print_formula(f))
        self.store.add(p, frame, 'learned')

    # -- the two tasks ---------------------------------------------------

    def learning_step(self) -> bool:
        """Work on the lowest-frame safety lemma; False if nothing to do."""
        self._check()
        pending = [l for l in self.store.safety_lemmas() if l.frame != INF]
        if not pending:
            self._check_invariant()
            return False
        lemma = min(pending, key=lambda l: (l.frame, l.id))
        target = self.to_block(lemma)
        if isinstance(target, ReachableChain):
            raise _Unsafe(list(target.states))
        if isinstance(target, NonePending):
            self.push_fixpoint()
            return not target.reason.startswith('oracle')
        return self.multiblock(lemma, target.state, target.frame)

    def heuristic_step(self) -> bool:
        self._check()
        safety = [l for l in self.store.safety_lemmas() if l.frame != INF]
        if not safety:
            return False
        limit = min(l.frame for l in safety)
        cands = [l for l in self.store.all_lemmas()
                 if not l.bad and l.origin != 'safety' and l.frame != INF and l.frame <= limit]
        if not cands:
            return False
        weights = [1.0 / (1 + literal_count(l.formula.matrix)) for l in cands]
        lemma = self.rng.choices(cands, weights)[0]
        for s in self.store.reachable:
            if not evaluate(s, lemma.f):
                self.store.mark_bad(lemma)
                return True
        target = self.to_block(lemma)
        if isinstance(target, ReachableChain):
            self._handle_chain(lemma, target)
        elif isinstance(target, Obligation):
            return self.multiblock(lemma, target.state, target.frame)
        else:
            self.push_fixpoint()
        return True

    def _learning_loop(self) -> None:
        backoff = self.config.backoff_base
        try:
            while not self._done.is_set():
                if self.learning_step():
                    backoff = self.config.backoff_base
                else:
                    if self.root.wait(backoff):
                        return
                    backoff = min(backoff * 2, 60.0)
        except _Unsafe as u:
            self._finish('unsafe', u.trace)
        except Cancelled:
            pass
        except Exception as e:  # pragma: no cover - surfaced via the outcome
            logger.exception('learning task failed')
            self._finish('error', repr(e))

    def _heuristic_loop(self) -> None:
        try:
            while not self._done.is_set():
                if not self.heuristic_step():
                    if self.root.wait(self.config.backoff_base):
                        return
        except _Unsafe as u:
            self._finish('unsafe', u.trace)
        except Cancelled:
            pass
        except Exception as e:  # pragma: no cover
            logger.exception('heuristic task failed')
            self._finish('error', repr(e))

    # -- entry point -----------------------------------------------------

    def run(self) -> PDRResult:
        start = time.monotonic()
        timer = None
        if self.config.timeout is not None:
            timer = threading.Timer(self.config.timeout, self._timeout)
            timer.daemon = True
            timer.start()
        try:
            self.log.emit('start', system=self.system.name, mode=self.config.mode,
                          sequential=self.config.sequential, seed=self.config.seed)
            try:
                self.init_frames()
            except _Unsafe as u:
                self._finish('unsafe', u.trace)
            except Cancelled:
                pass
            if not self._done.is_set():
                if self.config.sequential:
                    self._sequential()
                else:
                    tasks = [threading.Thread(target=self._learning_loop, daemon=True),
                             threading.Thread(target=self._heuristic_loop, daemon=True)]
                    for t in tasks:
                        t.start()
                    self._done.wait()
                    self.root.cancel()
                    for t in tasks:
                        t.join()
        finally:
            if timer is not None:
                timer.cancel()
        return self._result(time.monotonic() - start)

    def _sequential(self) -> None:
        try:
            while not self._done.is_set():
                progressed = self.learning_step()
                if self._done.is_set():
                    break
                progressed = self.heuristic_step() or progressed
        except _Unsafe as u:
            self._finish('unsafe', u.trace)
        except Cancelled:
            pass

    def _timeout(self) -> None:
        self.log.emit('timeout')
        self._finish('timeout', 'wall-clock budget exhausted')

    def _result(self, wall: float) -> PDRResult:
        kind, payload = self._outcome or ('timeout', 'stopped')
        stats = {
            'lemmas': len(self.store.lemmas),
            'learned_lemmas': sum(1 for l in self.store.lemmas if l.origin == 'learned'),
            'bad_lemmas': sum(1 for l in self.store.lemmas if l.bad),
            'ig_queries': self.ig.ig_queries,
            'oracle_queries': self.oracle.num_queries,
            'reachable_states': len(self.store.reachable),
            'wall_time': round(wall, 3),
        }
        audit = self.auditor.report if self.auditor is not None else None
        if audit is not None:
            stats['audit_checks'] = audit.checks
            stats['audit_violations'] = len(audit.violations)
        if kind == 'invariant':
            top = self.store.at_infinity()
            inv = [l.formula for l in top]
            stats['invariant_size'] = len(inv)
            report = verify_invariant(self.system, [p.to_formula() for p in inv],
                                      _bump(self.config.bound, self.config.verify_extra))
            self.log.emit('invariant-found', size=len(inv), verified=report.ok)
            if not report.ok:
                return PDRResult('timeout', inv, verification=report, stats=stats,
                                 reason='invariant failed verification at the larger bound: '
                                        + '; '.join(report.failures), audit=audit)
            return PDRResult('invariant', inv, verification=report, stats=stats, audit=audit)
        if kind == 'unsafe':
            trace = list(payload)
            self.log.emit('unsafe', length=len(trace))
            return PDRResult('unsafe', trace=trace, stats=stats, audit=audit)
        self.log.emit('gave-up', reason=str(payload))
        return PDRResult('timeout', stats=stats, reason=str(payload), audit=audit)


def run(system: TransitionSystem, config: Optional[PDRConfig] = None,
        log: Optional[EventLog] = None) -> PDRResult:
    return PDR(system, config, log).run()
