"""Bounded satisfiability for one-state, two-state and multi-step queries.

Formulas are grounded over a universe of at most ``bound`` elements per
sort and handed to an incremental SAT solver.  Element ``0`` of every sort
always exists; element ``e+1`` exists only if ``e`` does, so a single
grounding covers every universe size up to the bound and concrete sizes
are selected with assumptions.  Grounded formulas are cached per grounder
as Tseitin literals, which makes repeated queries over the same lemmas
cheap: a query is just a list of assumption literals.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .logic import (
    And, Const, ConstantDecl, Eq, Exists, Forall, Formula, FunctionDecl, Iff, Implies,
    LogicError, Not, Or, Rel, RelationDecl, Signature, Structure, TwoStateStructure, Var,
    conj, diagram, evaluate, free_vars, negate, prime, rename_symbols,
)
from .sat import DEFAULT_BACKEND, SatSolver
from .syntax import TransitionSystem
from .util import CancelToken, Cancelled

logger = logging.getLogger(__name__)

Bounds = Tuple[Tuple[str, int], ...]


# ---------------------------------------------------------------------------
# Queries and results

@dataclass(frozen=True)
class Query:
    signature: Signature
    assertions: Tuple[Formula, ...]
    universe_bounds: Bounds
    kind: str = 'one-state'

    def __post_init__(self) -> None:
        object.__setattr__(self, 'assertions', tuple(self.assertions))
        object.__setattr__(self, 'universe_bounds', normalize_bounds(self.universe_bounds, self.signature))


@dataclass(frozen=True)
class Model:
    structure: Structure
    asserted: Tuple[Formula, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class UnsatAtBound:
    bounds: Bounds
    asserted: Tuple[Formula, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class Unsat:
    asserted: Tuple[Formula, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class Unknown:
    reason: str


OracleResult = Union[Model, UnsatAtBound, Unsat, Unknown]


class OracleUnknown(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


def is_unsat(r: OracleResult) -> bool:
    return isinstance(r, (Unsat, UnsatAtBound))


def normalize_bounds(bounds: Union[int, Mapping[str, int], Iterable[Tuple[str, int]]],
                     sig: Signature) -> Bounds:
    if isinstance(bounds, int):
        d = {s: bounds for s in sig.sorts}
    else:
        d = dict(bounds)
        missing = [s for s in sig.sorts if s not in d]
        if missing:
            raise ValueError(f'no universe bound for sorts {missing}')
    for s in sig.sorts:
        if d[s] < 1:
            raise ValueError(f'universe bound for {s} must be positive')
    return tuple((s, d[s]) for s in sig.sorts)


def size_vectors(bounds: Bounds) -> List[Tuple[int, ...]]:
    """Universe sizes in search order: total ascending, then lexicographic."""
    vecs = itertools.product(*(range(1, b + 1) for _, b in bounds))
    return sorted(vecs, key=lambda v: (sum(v), v))


# ---------------------------------------------------------------------------
# Grounding

class Grounder:
    """Owns one SAT solver and the propositional encoding of a signature."""

    def __init__(self, sig: Signature, bounds: Bounds, backend: str = DEFAULT_BACKEND,
                 record: bool = False) -> None:
        self.sig = sig
        self.bounds = bounds
        self.size = dict(bounds)
        self.sat = SatSolver(backend, record=record)
        self.T = self.sat.new_var()
        self.sat.add_clause([self.T])
        self.active: Dict[str, List[int]] = {}
        for s, b in bounds:
            lits = [self.T]
            for _ in range(1, b):
                v = self.sat.new_var()
                self.sat.add_clause([-v, lits[-1]])
                lits.append(v)
            self.active[s] = lits
        self.const_vals: Dict[str, List[int]] = {}
        for c in sig.constants.values():
            self.const_vals[c.name] = self._one_hot(c.sort)
        self._break_constant_symmetry()
        self.rel_vars: Dict[Tuple[str, Tuple[int, ...]], int] = {}
        self.fun_vals: Dict[Tuple[str, Tuple[int, ...]], List[int]] = {}
        self._gates: Dict[Tuple[str, frozenset], int] = {}
        self._cache: Dict[Tuple[Formula, tuple], int] = {}

    # -- propositional helpers -------------------------------------------

    def _one_hot(self, sort: str) -> List[int]:
        vals = [self.sat.new_var() for _ in range(self.size[sort])]
        self.sat.add_clause(vals)
        for a, b in itertools.combinations(vals, 2):
            self.sat.add_clause([-a, -b])
        for e, v in enumerate(vals):
            if e > 0:
                self.sat.add_clause([-v, self.active[sort][e]])
        return vals

    def _break_constant_symmetry(self) -> None:
        # Elements named by constants appear in first-occurrence order.
        for s in self.sig.sorts:
            cs = [self.const_vals[c.name] for c in self.sig.constants.values() if c.sort == s]
            for i, vals in enumerate(cs):
                for e in range(1, len(vals)):
                    earlier = [prev[x] for prev in cs[:i] for x in range(e - 1, len(prev))]
                    self.sat.add_clause([-vals[e]] + earlier)

    def mk_and(self, lits: Iterable[int]) -> int:
        T = self.T
        out: List[int] = []
        seen = set()
        for l in lits:
            if l == T or l in seen:
                continue
            if l == -T or -l in seen:
                return -T
            seen.add(l)
            out.append(l)
        if not out:
            return T
        if len(out) == 1:
            return out[0]
        key = ('and', frozenset(out))
        g = self._gates.get(key)
        if g is None:
            g = self.sat.new_var()
            for l in out:
                self.sat.add_clause([-g, l])
            self.sat.add_clause([g] + [-l for l in out])
            self._gates[key] = g
        return g

    def mk_or(self, lits: Iterable[int]) -> int:
        return -self.mk_and(-l for l in lits)

    def rel_var(self, name: str, args: Tuple[int, ...]) -> int:
        key = (name, args)
        v = self.rel_vars.get(key)
        if v is None:
            v = self.rel_vars[key] = self.sat.new_var()
        return v

    def fun_val(self, name: str, args: Tuple[int, ...]) -> List[int]:
        key = (name, args)
        vals = self.fun_vals.get(key)
        if vals is None:
            vals = self.fun_vals[key] = self._one_hot(self.sig.functions[name].sort)
        return vals

    # -- grounding -------------------------------------------------------

    def term(self, t, env: Mapping[str, int]) -> Dict[int, int]:
        """Map element -> literal that holds iff ``t`` denotes that element."""
        if isinstance(t, Var):
            return {env[t.name]: self.T}
        if isinstance(t, Const):
            return {e: v for e, v in enumerate(self.const_vals[t.name])}
        choices = [list(self.term(a, env).items()) for a in t.args]
        out: Dict[int, List[int]] = {}
        for combo in itertools.product(*choices):
            elems = tuple(e for e, _ in combo)
            conds = [l for _, l in combo]
            for e, v in enumerate(self.fun_val(t.func, elems)):
                out.setdefault(e, []).append(self.mk_and(conds + [v]))
        return {e: self.mk_or(ls) for e, ls in out.items()}

    def lit(self, f: Formula, env: Optional[Mapping[str, int]] = None) -> int:
        """Tseitin literal equivalent to ``f`` (free variables taken from ``env``)."""
        env = env or {}
        fv = free_vars(f)
        key = (f, tuple(sorted((v.name, env[v.name]) for v in fv)) if fv else ())
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        r = self._ground(f, env)
        self._cache[key] = r
        return r

    def _ground(self, f: Formula, env: Mapping[str, int]) -> int:
        if isinstance(f, Rel):
            choices = [list(self.term(a, env).items()) for a in f.args]
            parts = []
            for combo in itertools.product(*choices):
                elems = tuple(e for e, _ in combo)
                parts.append(self.mk_and([l for _, l in combo] + [self.rel_var(f.name, elems)]))
            return self.mk_or(parts)
        if isinstance(f, Eq):
            a, b = self.term(f.left, env), self.term(f.right, env)
            return self.mk_or(self.mk_and([a[e], b[e]]) for e in a if e in b)
        if isinstance(f, Not):
            return -self.lit(f.body, env)
        if isinstance(f, And):
            return self.mk_and(self.lit(a, env) for a in f.args)
        if isinstance(f, Or):
            return self.mk_or(self.lit(a, env) for a in f.args)
        if isinstance(f, Implies):
            return self.mk_or([-self.lit(f.left, env), self.lit(f.right, env)])
        if isinstance(f, Iff):
            a, b = self.lit(f.left, env), self.lit(f.right, env)
            return self.mk_or([self.mk_and([a, b]), self.mk_and([-a, -b])])
        if isinstance(f, (Forall, Exists)):
            universal = isinstance(f, Forall)
            parts = []
            inner = dict(env)
            for elems in itertools.product(*(range(self.size[v.sort]) for v in f.vars)):
                for v, e in zip(f.vars, elems):
                    inner[v.name] = e
                guard = self.mk_and(self.active[v.sort][e] for v, e in zip(f.vars, elems))
                body = self.lit(f.body, inner)
                parts.append(self.mk_or([-guard, body]) if universal else self.mk_and([guard, body]))
            return self.mk_and(parts) if universal else self.mk_or(parts)
        raise TypeError(f'not a formula: {f!r}')

    # -- solving ---------------------------------------------------------

    def size_assumptions(self, sizes: Sequence[int]) -> List[int]:
        out = []
        for (s, b), n in zip(self.bounds, sizes):
            if n < b:
                out.append(-self.active[s][n])
        return out

    def current_sizes(self) -> Tuple[int, ...]:
        return tuple(sum(1 for l in self.active[s] if self.sat.value(l)) for s, _ in self.bounds)

    def extract(self) -> Structure:
        sizes = dict(zip((s for s, _ in self.bounds), self.current_sizes()))
        val = self.sat.value
        consts = {}
        for c, vals in self.const_vals.items():
            consts[c] = next(e for e, v in enumerate(vals) if val(v))
        rels: Dict[str, set] = {r: set() for r in self.sig.relations}
        for (r, args), v in self.rel_vars.items():
            if val(v) and all(e < sizes[s] for e, s in zip(args, self.sig.relations[r].arity)):
                rels[r].add(args)
        funcs: Dict[str, Dict[Tuple[int, ...], int]] = {}
        for fd in self.sig.functions.values():
            table = {}
            for args in itertools.product(*(range(sizes[s]) for s in fd.arity)):
                vals = self.fun_vals.get((fd.name, args))
                table[args] = 0 if vals is None else next(e for e, v in enumerate(vals) if val(v))
            funcs[fd.name] = table
        return Structure(sizes, consts, rels, funcs)

    def solve(self, lits: Sequence[int], conflict_budget: Optional[int] = None,
              cancel: Optional[CancelToken] = None) -> Union[Structure, bool, None]:
        """Smallest model of the conjunction of ``lits``; False if none, None if interrupted."""
        if cancel is not None:
            cancel.check()
            cancel.on_cancel(self.sat.interrupt)
        try:
            res = self.sat.solve(lits, conflict_budget)
            if res is None or cancel is not None and cancel.cancelled:
                return None
            if not res:
                return False
            found = self.current_sizes()
            best = None
            for vec in size_vectors(self.bounds):
                if (sum(vec), vec) >= (sum(found), found):
                    break
                r = self.sat.solve(list(lits) + self.size_assumptions(vec), conflict_budget)
                if r is None:
                    return None
                if r:
                    best = self.extract()
                    break
            if best is None:
                self.sat.solve(list(lits) + self.size_assumptions(found), conflict_budget)
                best = self.extract()
            return best
        finally:
            if cancel is not None:
                cancel.remove_callback(self.sat.interrupt)


class GrounderPool:
    """Hands out grounders per (signature, bounds); one caller per grounder."""

    def __init__(self, backend: str = DEFAULT_BACKEND, max_vars: int = 2_000_000,
                 record: bool = False) -> None:
        self.backend = backend
        self.max_vars = max_vars
        self.record = record
        self._free: Dict[tuple, List[Grounder]] = {}
        self._lock = threading.Lock()

    def acquire(self, sig: Signature, bounds: Bounds) -> Grounder:
        key = (sig, bounds)
        with self._lock:
            free = self._free.get(key)
            if free:
                return free.pop()
        return Grounder(sig, bounds, self.backend, self.record)

    def release(self, g: Grounder) -> None:
        if g.sat.num_vars > self.max_vars:
            g.sat.close()
            return
        with self._lock:
            self._free.setdefault((g.sig, g.bounds), []).append(g)


_DEFAULT_POOL = GrounderPool()


def _solve_formulas(sig: Signature, bounds: Bounds, assertions: Sequence[Formula],
                    pool: GrounderPool, recheck: bool = True, conflict_budget: Optional[int] = None,
                    cancel: Optional[CancelToken] = None) -> OracleResult:
    g = pool.acquire(sig, bounds)
    try:
        lits = [g.lit(a) for a in assertions]
        res = g.solve(lits, conflict_budget, cancel)
    except Cancelled:
        return Unknown('cancelled')
    finally:
        pool.release(g)
    if res is None:
        return Unknown('cancelled' if cancel is not None and cancel.cancelled else 'budget')
    if res is False:
        return UnsatAtBound(bounds, tuple(assertions))
    if recheck:
        for a in assertions:
            if not evaluate(res, a):
                raise AssertionError(f'bounded model violates assertion {a}')
    return Model(res, tuple(assertions))


def bounded_solve(q: Query, pool: Optional[GrounderPool] = None, recheck: bool = True,
                  conflict_budget: Optional[int] = None, cancel: Optional[CancelToken] = None) -> OracleResult:
    """Search universes up to ``q.universe_bounds`` for a model of all assertions."""
    return _solve_formulas(q.signature, q.universe_bounds, q.assertions, pool or _DEFAULT_POOL,
                           recheck, conflict_budget, cancel)


def incremental_solve(assertions: Sequence[Formula], core: Sequence[Formula], bounds,
                      signature: Signature, pool: Optional[GrounderPool] = None,
                      conflict_budget: Optional[int] = None,
                      cancel: Optional[CancelToken] = None) -> OracleResult:
    """Solve ``core + assertions`` asserting the optional formulas lazily.

    Starts from ``core``; a satisfying model is returned as soon as it happens
    to satisfy every optional formula, otherwise the first violated one is
    asserted and the loop repeats.  UNSAT of a subset is final.
    """
    pool = pool or _DEFAULT_POOL
    bounds = normalize_bounds(bounds, signature)
    asserted = list(core)
    pending = [a for a in assertions if a not in asserted]
    while True:
        r = _solve_formulas(signature, bounds, asserted, pool, True, conflict_budget, cancel)
        if not isinstance(r, Model):
            if isinstance(r, UnsatAtBound):
                return UnsatAtBound(bounds, tuple(asserted))
            return r
        violated = next((a for a in pending if not evaluate(r.structure, a)), None)
        if violated is None:
            return Model(r.structure, tuple(asserted))
        pending.remove(violated)
        asserted.append(violated)


# ---------------------------------------------------------------------------
# Transition-system queries

def step_name(name: str, step: int) -> str:
    return f'{name}@{step}'


def unrolled_signature(sig: Signature, steps: int) -> Signature:
    """Signature with one copy of each mutable symbol per state ``0..steps``."""
    def copies(d):
        if not d.mutable:
            return [d]
        out = []
        for t in range(steps + 1):
            n = step_name(d.name, t)
            if isinstance(d, ConstantDecl):
                out.append(ConstantDecl(n, d.sort, True))
            elif isinstance(d, RelationDecl):
                out.append(RelationDecl(n, d.arity, True))
            else:
                out.append(FunctionDecl(n, d.arity, d.sort, True))
        return out
    return Signature(sig.sorts, [x for c in sig.constants.values() for x in copies(c)],
                     [x for r in sig.relations.values() for x in copies(r)],
                     [x for f in sig.functions.values() for x in copies(f)])


class Oracle:
    """All satisfiability questions PDR asks about one transition system."""

    def __init__(self, system: TransitionSystem, bound: Union[int, Mapping[str, int]] = 3, *,
                 incremental: bool = True, backend: str = DEFAULT_BACKEND, recheck: bool = True,
                 conflict_budget: Optional[int] = None, external=None, clock=None,
                 dimacs_dir: Optional[str] = None) -> None:
        self.system = system
        self.sig = system.signature
        self.sig2 = system.doubled
        self.bounds = normalize_bounds(bound, self.sig)
        self.incremental = incremental
        self.recheck = recheck
        self.conflict_budget = conflict_budget
        self.external = external
        self.clock = clock
        self.dimacs_dir = dimacs_dir
        self.pool = GrounderPool(backend, record=dimacs_dir is not None)
        self.axioms = conj(system.axioms) if system.axioms else And(())
        self.axioms2 = prime(self.axioms, self.sig)
        self.init = conj(system.inits) if system.inits else And(())
        self.tr = system.transition_relation
        self.safety = conj(system.safeties) if system.safeties else And(())
        self.num_queries = 0
        self._lock = threading.Lock()

    def _count(self) -> None:
        with self._lock:
            self.num_queries += 1
        if self.clock is not None:
            self.clock.tick()

    def solve(self, core: Sequence[Formula], optional: Sequence[Formula] = (),
              cancel: Optional[CancelToken] = None) -> OracleResult:
        """Two-vocabulary satisfiability of ``core`` plus ``optional``."""
        self._count()
        if self.external is not None:
            from .smtlib import external_check
            r = external_check(Query(self.sig2, tuple(core) + tuple(optional), self.bounds, 'two-state'),
                               self.external, cancel)
            if not isinstance(r, Unknown):
                return r
        if self.incremental and optional:
            return incremental_solve(optional, core, self.bounds, self.sig2, self.pool,
                                     self.conflict_budget, cancel)
        return _solve_formulas(self.sig2, self.bounds, list(core) + list(optional), self.pool,
                               self.recheck, self.conflict_budget, cancel)

    def _model(self, r: OracleResult) -> Optional[Structure]:
        if isinstance(r, Model):
            return r.structure
        if isinstance(r, Unknown):
            raise OracleUnknown(r.reason)
        return None

    def _two_state(self, r: OracleResult) -> Optional[TwoStateStructure]:
        m = self._model(r)
        return None if m is None else TwoStateStructure(m, self.sig)

    def implies(self, hyps: Sequence[Formula], concl: Formula,
                cancel: Optional[CancelToken] = None) -> Optional[Structure]:
        """None if ``hyps & Ax => concl``; otherwise a counterexample state."""
        m = self._model(self.solve([self.axioms, negate(concl)], list(hyps), cancel))
        return None if m is None else m.restrict(self.sig)

    def initiation(self, p: Formula, cancel: Optional[CancelToken] = None) -> Optional[Structure]:
        """An initial state violating ``p``, or None."""
        m = self._model(self.solve([self.init, self.axioms, negate(p)], (), cancel))
        return None if m is None else m.restrict(self.sig)

    def relative_induction(self, p: Formula, frame: Sequence[Formula],
                           cancel: Optional[CancelToken] = None) -> Optional[TwoStateStructure]:
        """A transition from ``frame & p`` to a state violating ``p``, or None."""
        core = [p, self.axioms, self.tr, self.axioms2, negate(prime(p, self.sig))]
        return self._two_state(self.solve(core, list(frame), cancel))

    def consecution(self, frame: Sequence[Formula], p: Formula, extra_core: Sequence[Formula] = (),
                    cancel: Optional[CancelToken] = None) -> Optional[TwoStateStructure]:
        """A transition from ``frame`` to a state violating ``p`` (a pushing preventer), or None."""
        core = list(extra_core) + [self.axioms, self.tr, self.axioms2, negate(prime(p, self.sig))]
        return self._two_state(self.solve(core, list(frame), cancel))

    def predecessor(self, frame: Sequence[Formula], state: Structure, exact: bool,
                    extra_core: Sequence[Formula] = (),
                    cancel: Optional[CancelToken] = None) -> Optional[TwoStateStructure]:
        """A transition from ``frame`` into a copy (or superstructure) of ``state``."""
        target = prime(diagram(state, self.sig, exact), self.sig)
        core = list(extra_core) + [self.axioms, self.tr, self.axioms2, target]
        return self._two_state(self.solve(core, list(frame), cancel))

    def bmc(self, steps: int, final: Formula, cancel: Optional[CancelToken] = None,
            bound: Optional[Bounds] = None) -> Optional[List[Structure]]:
        """A trace of ``steps`` transitions from Init whose last state satisfies ``final``."""
        self._count()
        sig = self.sig
        usig = unrolled_signature(sig, steps)
        mut = sig.mutable_symbols()

        def at(f: Formula, t: int) -> Formula:
            return rename_symbols(f, {m: step_name(m, t) for m in mut})

        def tr_at(t: int) -> Formula:
            mapping = {m: step_name(m, t) for m in mut}
            mapping.update({m + "'": step_name(m, t + 1) for m in mut})
            return rename_symbols(self.tr, mapping)

        parts = [at(self.init, 0)] + [at(self.axioms, t) for t in range(steps + 1)]
        parts += [tr_at(t) for t in range(steps)] + [at(final, steps)]
        r = _solve_formulas(usig, bound or self.bounds, parts, self.pool, self.recheck,
                            self.conflict_budget, cancel)
        m = self._model(r)
        if m is None:
            return None
        trace = []
        for t in range(steps + 1):
            back = {step_name(x, t): x for x in mut}
            trace.append(m.rename(back).restrict(sig))
        return trace

    def dump_last_dimacs(self, path: str) -> None:
        """Debug aid: dump the clauses of some pooled two-state grounder."""
        g = self.pool.acquire(self.sig2, self.bounds)
        try:
            g.sat.dump_dimacs(path)
        finally:
            self.pool.release(g)


def check_initiation(p: Formula, sys: TransitionSystem, bounds=3) -> Optional[Structure]:
    """None if ``Init & Ax => p`` at the bound, else an initial state violating ``p``."""
    return Oracle(sys, bounds).initiation(p)


def check_relative_induction(p: Formula, frame: Sequence[Formula], sys: TransitionSystem,
                             bounds=3) -> Optional[TwoStateStructure]:
    """None if ``frame & p & Ax & Tr & Ax' => p'`` at the bound, else the offending transition."""
    return Oracle(sys, bounds).relative_induction(p, frame)


def verify_trace(sys: TransitionSystem, trace: Sequence[Structure]) -> bool:
    """Step-check a concrete trace with the evaluator."""
    from .logic import two_state
    sig = sys.signature
    if not trace or not all(evaluate(trace[0], f) for f in sys.inits):
        return False
    for s in trace:
        if not all(evaluate(s, a) for a in sys.axioms):
            return False
    for a, b in zip(trace, trace[1:]):
        try:
            ts = two_state(a, b, sig)
        except LogicError:
            return False
        if not evaluate(ts.structure, sys.transition_relation):
            return False
    return True
