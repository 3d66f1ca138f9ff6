"""Breadth-first inductive generalization over quantifier prefixes.

An IG query asks for a lemma that excludes some states, holds initially and
is inductive relative to the previous frame.  Workers repeatedly take the
next prefix from a scheduler that balances time across prefix categories,
then run a separate / check / refine loop for that prefix.  The first valid
separator wins and cancels the other workers.

Prefixes are handled as *shapes*: tuples of ``(kind, sort)``.  Reordering
adjacent quantifiers of the same kind never changes meaning, so only the
canonical representative is used (sorts non-decreasing in declaration
order inside each block of equal kinds).
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterator, List, Optional, Sequence, Set, Tuple

from .epr import prefix_allowed
from .logic import EXISTS, FORALL, Formula, PrenexFormula, Signature, Structure, evaluate
from .oracle import Oracle, OracleUnknown
from .separation import (
    Implication, LiteralSpace, Negative, PDNFTemplate, Positive, QPrefix, SepConstraint, Separator,
    default_k, satisfies,
)
from .util import CancelToken, Cancelled, EventLog, WallClock

logger = logging.getLogger(__name__)

Shape = Tuple[Tuple[str, str], ...]


# ---------------------------------------------------------------------------
# Prefix shapes

def alternations(shape: Shape) -> int:
    return sum(1 for a, b in zip(shape, shape[1:]) if a[0] != b[0])


def sort_counts(shape: Shape) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for _, s in shape:
        out[s] = out.get(s, 0) + 1
    return out


def canonical(shape: Shape, sig: Signature) -> Shape:
    out: List[Tuple[str, str]] = []
    for kind, block in itertools.groupby(shape, key=lambda q: q[0]):
        out.extend(sorted(block, key=lambda q: sig.sort_index(q[1])))
    return tuple(out)


def is_canonical(shape: Shape, sig: Signature) -> bool:
    return canonical(shape, sig) == tuple(shape)


def order_key(shape: Shape, sig: Signature) -> tuple:
    """Depth, alternations, not-starting-with-forall, existentials, then declaration order."""
    n_exists = sum(1 for k, _ in shape if k == EXISTS)
    starts_forall = bool(shape) and shape[0][0] == FORALL
    tie = tuple((sig.sort_index(s), 0 if k == FORALL else 1) for k, s in shape)
    return (len(shape), alternations(shape), not starts_forall, n_exists, tie)


def shapes_of_depth(sig: Signature, depth: int) -> List[Shape]:
    """All canonical shapes with ``depth`` quantifiers, in order-key order."""
    sorts = list(sig.sorts)
    out = []
    for kinds in itertools.product((FORALL, EXISTS), repeat=depth):
        for ss in itertools.product(sorts, repeat=depth):
            shape = tuple(zip(kinds, ss))
            if is_canonical(shape, sig):
                out.append(shape)
    out.sort(key=lambda sh: order_key(sh, sig))
    return out


def sub_prefixes(shape: Shape, sig: Signature) -> FrozenSet[Shape]:
    """Every shape obtained by dropping exactly one quantifier."""
    return frozenset(canonical(shape[:i] + shape[i + 1:], sig) for i in range(len(shape)))


def format_shape(shape: Shape) -> str:
    sym = {FORALL: 'forall', EXISTS: 'exists'}
    return ' '.join(f'{sym[k]} {s}' for k, s in shape) or '(none)'


@dataclass(frozen=True)
class PrefixCategory:
    name: str
    predicate: Callable[[Shape], bool] = field(compare=False)

    def prefixes(self, sig: Signature, max_depth: int) -> Iterator[Shape]:
        for d in range(1, max_depth + 1):
            for shape in shapes_of_depth(sig, d):
                if self.predicate(shape):
                    yield shape


def _universal(sh: Shape) -> bool:
    return all(k == FORALL for k, _ in sh)


def _sorts_at_most_two(sh: Shape) -> bool:
    return all(n <= 2 for n in sort_counts(sh).values())


CATEGORIES: Tuple[PrefixCategory, ...] = (
    PrefixCategory('universal', _universal),
    PrefixCategory('universal, each sort at most twice', lambda sh: _universal(sh) and _sorts_at_most_two(sh)),
    PrefixCategory('one alternation, each sort at most twice',
                   lambda sh: alternations(sh) <= 1 and _sorts_at_most_two(sh)),
    PrefixCategory('two alternations, each sort at most twice',
                   lambda sh: alternations(sh) <= 2 and _sorts_at_most_two(sh)),
    PrefixCategory('two alternations', lambda sh: alternations(sh) <= 2),
)


def categories_for_mode(mode: str) -> Tuple[PrefixCategory, ...]:
    return CATEGORIES[:2] if mode == 'universal' else CATEGORIES


# ---------------------------------------------------------------------------
# Scheduling

class PrefixScheduler:
    """Hands out prefixes, keeping category compute time roughly balanced.

    In rotation mode categories are visited round-robin instead, which keeps
    single-worker runs independent of timing.
    """

    def __init__(self, sig: Signature, categories: Sequence[PrefixCategory], max_depth: int,
                 allowed: Optional[FrozenSet[Tuple[str, str]]] = None, clock=None,
                 rotation: bool = False) -> None:
        self.sig = sig
        self.categories = list(categories)
        self.allowed = allowed
        self.clock = clock or WallClock()
        self.rotation = rotation
        self._gens = [c.prefixes(sig, max_depth) for c in self.categories]
        self._pending: List[List[Shape]] = [[] for _ in self.categories]
        self.exhausted = [False] * len(self.categories)
        self.accumulated = [0.0] * len(self.categories)
        self._active: Dict[Shape, Tuple[int, float]] = {}
        self.status: Dict[Shape, str] = {}
        self._turn = 0
        self._lock = threading.Lock()

    def _peek(self, c: int) -> Optional[Shape]:
        pend = self._pending[c]
        while pend and pend[0] in self.status:
            pend.pop(0)
        while not pend:
            if self.exhausted[c]:
                return None
            nxt = next(self._gens[c], None)
            if nxt is None:
                self.exhausted[c] = True
                return None
            if nxt in self.status:
                continue
            if self.allowed is not None and not prefix_allowed(nxt, self.allowed):
                continue
            pend.append(nxt)
        return pend[0]

    def _load(self, c: int, now: float) -> float:
        return self.accumulated[c] + sum(now - t0 for cc, t0 in self._active.values() if cc == c)

    def next_prefix(self) -> Optional[Tuple[int, Shape]]:
        with self._lock:
            now = self.clock.now()
            avail = [(c, self._peek(c)) for c in range(len(self.categories))]
            avail = [(c, sh) for c, sh in avail if sh is not None]
            if not avail:
                return None
            if self.rotation:
                n = len(self.categories)
                c, shape = min(avail, key=lambda x: (x[0] - self._turn) % n)
                self._turn = (c + 1) % n
            else:
                c, shape = min(avail, key=lambda x: (self._load(x[0], now), x[0]))
            self.status[shape] = 'active'
            self._active[shape] = (c, now)
            return c, shape

    def finish(self, shape: Shape, status: str) -> None:
        with self._lock:
            c, t0 = self._active.pop(shape)
            self.accumulated[c] += self.clock.now() - t0
            self.status[shape] = status

    def all_exhausted(self) -> bool:
        with self._lock:
            return all(self._peek(c) is None for c in range(len(self.categories)))


# ---------------------------------------------------------------------------
# Constraint store

class ConstraintStore:
    """Constraints learned from oracle counterexamples, kept across queries."""

    def __init__(self) -> None:
        self._by_prefix: Dict[Shape, List[SepConstraint]] = {}
        self._seen: Dict[Shape, Set[SepConstraint]] = {}
        self.positives: List[Positive] = []
        self._pos_seen: Set[Positive] = set()
        self._lock = threading.Lock()

    def add(self, shape: Shape, c: SepConstraint) -> None:
        with self._lock:
            seen = self._seen.setdefault(shape, set())
            if c not in seen:
                seen.add(c)
                self._by_prefix.setdefault(shape, []).append(c)

    def get(self, shape: Shape) -> List[SepConstraint]:
        with self._lock:
            return list(self._by_prefix.get(shape, ()))

    def add_positive(self, m: Structure) -> bool:
        c = Positive(m)
        with self._lock:
            if c in self._pos_seen:
                return False
            self._pos_seen.add(c)
            self.positives.append(c)
            return True

    def global_positives(self) -> List[Positive]:
        with self._lock:
            return list(self.positives)

    def prefixes(self) -> List[Shape]:
        with self._lock:
            return list(self._by_prefix)


def related_constraints(shape: Shape, current: Dict[Shape, List[SepConstraint]], sig: Signature,
                        extra: Sequence[SepConstraint] = ()) -> List[SepConstraint]:
    """Union of the constraints of every immediate sub-prefix, deduplicated."""
    out: List[SepConstraint] = []
    seen: Set[SepConstraint] = set()
    subs = sorted(sub_prefixes(shape, sig), key=lambda sh: order_key(sh, sig)) if shape else []
    for sub in subs:
        for c in current.get(sub, ()):
            if c not in seen:
                seen.add(c)
                out.append(c)
    for c in extra:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


# ---------------------------------------------------------------------------
# IG queries

@dataclass
class IGConfig:
    mode: str = 'fol'
    workers: int = 1
    max_depth: int = 6
    k: Optional[int] = None
    term_depth: int = 1
    allowed_edges: Optional[FrozenSet[Tuple[str, str]]] = None
    rotation: bool = False


@dataclass
class IGResult:
    status: str  # 'solved' | 'cancelled' | 'exhausted'
    lemma: Optional[PrenexFormula] = None
    shape: Optional[Shape] = None
    constraints: Tuple[SepConstraint, ...] = ()
    prefixes_tried: int = 0


class _Query:
    def __init__(self, qid: int, states: Sequence[Structure], frame: Sequence[Formula],
                 sched: PrefixScheduler, cancel: CancelToken) -> None:
        self.qid = qid
        self.states = list(states)
        self.frame = list(frame)
        self.sched = sched
        self.cancel = cancel
        self.current: Dict[Shape, List[SepConstraint]] = {}
        self.result: Optional[IGResult] = None
        self.lock = threading.Lock()
        self.tried = 0

    def record(self, shape: Shape, c: SepConstraint) -> None:
        with self.lock:
            self.current.setdefault(shape, []).append(c)

    def snapshot(self) -> Dict[Shape, List[SepConstraint]]:
        with self.lock:
            return {k: list(v) for k, v in self.current.items()}


class InductiveGeneralizer:
    """Runs IG queries for one transition system; keeps state across queries."""

    def __init__(self, oracle: Oracle, config: Optional[IGConfig] = None, log: Optional[EventLog] = None,
                 clock=None, store: Optional[ConstraintStore] = None) -> None:
        self.oracle = oracle
        self.sig = oracle.sig
        self.config = config or IGConfig()
        self.log = log or EventLog()
        self.clock = clock or WallClock()
        self.store = store or ConstraintStore()
        self.categories = categories_for_mode(self.config.mode)
        self._spaces: Dict[Shape, LiteralSpace] = {}
        self._spaces_lock = threading.Lock()
        self.ig_queries = 0
        self._counter_lock = threading.Lock()

    def space(self, shape: Shape) -> LiteralSpace:
        with self._spaces_lock:
            sp = self._spaces.get(shape)
            if sp is None:
                sp = LiteralSpace(self.sig, QPrefix.of(shape, self.sig), self.config.term_depth)
                self._spaces[shape] = sp
            return sp

    def template(self, prefix: QPrefix) -> PDNFTemplate:
        if self.config.mode == 'universal':
            k = 1
        elif self.config.k is not None:
            k = self.config.k
        else:
            k = default_k(prefix)
        return PDNFTemplate(k, depth_cap=self.config.term_depth)

    def reusable(self, shape: Shape, frame: Sequence[Formula]) -> List[SepConstraint]:
        """Stored constraints still valid for a query relative to ``frame``."""
        out = []
        for c in self.store.get(shape):
            if isinstance(c, Implication):
                if all(evaluate(c.pre, f) for f in frame):
                    out.append(c)
            elif isinstance(c, Positive):
                out.append(c)
        return out

    def query(self, states: Sequence[Structure], frame_index: int, frame: Sequence[Formula],
              cancel: Optional[CancelToken] = None) -> IGResult:
        """Find a lemma false in every state of ``states``, true initially, and
        inductive relative to ``frame`` (the formulas of the frame below)."""
        if not states:
            raise ValueError('IG query needs at least one state')
        if frame_index < 1:
            raise ValueError('IG queries target frames >= 1')
        with self._counter_lock:
            self.ig_queries += 1
            qid = self.ig_queries
        token = CancelToken(cancel)
        sched = PrefixScheduler(self.sig, self.categories, self.config.max_depth,
                                self.config.allowed_edges, self.clock, self.config.rotation)
        q = _Query(qid, states, frame, sched, token)
        self.log.emit('ig-start', query=qid, frame=frame_index, states=len(states))
        n = max(1, self.config.workers)
        if n == 1:
            self._worker(q)
        else:
            threads = [threading.Thread(target=self._worker, args=(q,), daemon=True) for _ in range(n)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if q.result is not None:
            res = q.result
        elif cancel is not None and cancel.cancelled:
            res = IGResult('cancelled')
        else:
            res = IGResult('exhausted')
        res.prefixes_tried = q.tried
        self.log.emit('ig-end', query=qid, status=res.status,
                      lemma=None if res.lemma is None else str(res.lemma), prefixes=q.tried)
        return res

    def _worker(self, q: _Query) -> None:
        while not q.cancel.cancelled:
            nxt = q.sched.next_prefix()
            if nxt is None:
                return
            cat, shape = nxt
            with q.lock:
                q.tried += 1
            self.log.emit('prefix-taken', query=q.qid, prefix=format_shape(shape),
                          category=self.categories[cat].name)
            try:
                status = self._refine(q, shape)
            except Cancelled:
                status = 'abandoned'
            except OracleUnknown as e:
                logger.info('prefix %s abandoned: %s', format_shape(shape), e.reason)
                status = 'abandoned'
            q.sched.finish(shape, status)

    def _refine(self, q: _Query, shape: Shape) -> str:
        prefix = QPrefix.of(shape, self.sig)
        sep = Separator(self.sig, prefix, self.template(prefix), self.space(shape),
                        backend=self.oracle.pool.backend)
        for s in q.states:
            c = Negative(s)
            sep.add(c)
            q.record(shape, c)
        for c in self.reusable(shape, q.frame):
            if sep.add(c):
                q.record(shape, c)
        while True:
            q.cancel.check()
            self.clock.tick()
            p = sep.separate(q.cancel)
            if p is None:
                self.log.emit('unsep', query=q.qid, prefix=format_shape(shape),
                              constraints=len(sep.constraints))
                return 'unsep'
            f = p.to_formula()
            related = related_constraints(shape, q.snapshot(), self.sig, self.store.global_positives())
            violated = next((c for c in related if not satisfies(lambda m: evaluate(m, f), c)), None)
            if violated is not None:
                sep.add(violated)
                q.record(shape, violated)
                self.log.emit('constraint-added', query=q.qid, prefix=format_shape(shape),
                              kind=type(violated).__name__.lower(), source='related')
                continue
            q.cancel.check()
            m = self.oracle.initiation(f, q.cancel)
            if m is not None:
                c: SepConstraint = Positive(m)
                self.store.add_positive(m)
            else:
                q.cancel.check()
                edge = self.oracle.relative_induction(f, q.frame, q.cancel)
                if edge is None:
                    with q.lock:
                        if q.result is None:
                            q.result = IGResult('solved', p, shape, tuple(sep.constraints))
                    q.cancel.cancel()
                    self.log.emit('solution', query=q.qid, prefix=format_shape(shape), lemma=str(p))
                    return 'solved'
                c = Implication(edge.pre, edge.post)
            sep.add(c)
            q.record(shape, c)
            self.store.add(shape, c)
            self.log.emit('constraint-added', query=q.qid, prefix=format_shape(shape),
                          kind=type(c).__name__.lower(), source='oracle')
