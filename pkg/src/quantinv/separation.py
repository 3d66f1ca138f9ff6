"""Separation with a fixed quantifier prefix and a k-term pDNF matrix.

A k-term pDNF matrix has the shape ``not c1 or c2 or ... or ck`` where every
``cj`` is a cube (conjunction of literals).  For ``k = 1`` this is a single
clause.  Given positive, negative and implication constraints (finite
structures), :class:`Separator` searches for such a matrix with a SAT
solver: one presence variable per (term, literal) decides which literals
appear, and every constraint structure is expanded over its universe into
a Tseitin-encoded tree of quantifier nodes.

Truth values of atoms depend only on the structure and the assignment to
the prefix variables, so each assignment is summarized by a bitmask of true
atoms (its *pattern*).  Matrix values are shared between all assignments
and structures with the same pattern.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from pysat.card import CardEnc, EncType

from .logic import (
    And, Apply, Const, Eq, EXISTS, FORALL, Formula, Not, Or, PrenexFormula, Rel, Signature,
    Structure, Term, Var, evaluate, free_vars,
)
from .sat import DEFAULT_BACKEND, SatSolver
from .util import CancelToken, Cancelled

Shape = Tuple[Tuple[str, str], ...]


# ---------------------------------------------------------------------------
# Constraints, prefixes and templates

@dataclass(frozen=True)
class Positive:
    structure: Structure


@dataclass(frozen=True)
class Negative:
    structure: Structure


@dataclass(frozen=True)
class Implication:
    pre: Structure
    post: Structure


SepConstraint = Union[Positive, Negative, Implication]


def constraint_structures(c: SepConstraint) -> Tuple[Structure, ...]:
    return (c.pre, c.post) if isinstance(c, Implication) else (c.structure,)


def satisfies(holds: Callable[[Structure], bool], c: SepConstraint) -> bool:
    if isinstance(c, Positive):
        return holds(c.structure)
    if isinstance(c, Negative):
        return not holds(c.structure)
    return not holds(c.pre) or holds(c.post)


@dataclass(frozen=True)
class QPrefix:
    """Ordered quantifiers ``(kind, sort, variable name)``."""

    quantifiers: Tuple[Tuple[str, str, str], ...] = ()

    def __post_init__(self) -> None:
        names = [q[2] for q in self.quantifiers]
        if len(set(names)) != len(names):
            raise ValueError(f'duplicate prefix variable in {names}')
        for kind, _, _ in self.quantifiers:
            if kind not in (FORALL, EXISTS):
                raise ValueError(f'bad quantifier kind {kind!r}')

    @staticmethod
    def of(shape: Iterable[Tuple[str, str]], sig: Optional[Signature] = None) -> 'QPrefix':
        """Name the variables of a (kind, sort) sequence deterministically."""
        taken = {d.name for d in sig.declarations()} if sig is not None else set()
        count: Dict[str, int] = {}
        qs = []
        for kind, sort in shape:
            count[sort] = count.get(sort, 0) + 1
            base = sort[:1].upper() + sort[1:]
            name = f'{base}{count[sort]}'
            while name in taken:
                name += '_'
            qs.append((kind, sort, name))
        return QPrefix(tuple(qs))

    @property
    def shape(self) -> Shape:
        return tuple((k, s) for k, s, _ in self.quantifiers)

    @property
    def vars(self) -> Tuple[Var, ...]:
        return tuple(Var(n, s) for _, s, n in self.quantifiers)

    def __len__(self) -> int:
        return len(self.quantifiers)

    def __str__(self) -> str:
        sym = {FORALL: 'A', EXISTS: 'E'}
        return ' '.join(f'{sym[k]}{n}:{s}' for k, s, n in self.quantifiers) or '<empty>'

    def is_universal(self) -> bool:
        return all(k == FORALL for k, _, _ in self.quantifiers)


@dataclass(frozen=True)
class PDNFTemplate:
    k: int = 1
    literals_per_cube: Optional[int] = None
    depth_cap: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError('k must be at least 1')
        if self.literals_per_cube is not None and self.literals_per_cube < 1:
            raise ValueError('literals_per_cube must be positive')


def default_k(prefix: QPrefix) -> int:
    return 1 if prefix.is_universal() else 3


# ---------------------------------------------------------------------------
# Literal universe

def _terms_by_sort(sig: Signature, prefix: QPrefix, depth_cap: int) -> Dict[str, List[Term]]:
    out: Dict[str, List[Term]] = {s: [] for s in sig.sorts}
    for v in prefix.vars:
        out[v.sort].append(v)
    for c in sig.constants.values():
        out[c.sort].append(Const(c.name))
    level = {s: list(ts) for s, ts in out.items()}
    for _ in range(depth_cap):
        new: Dict[str, List[Term]] = {s: [] for s in sig.sorts}
        for f in sig.functions.values():
            pools = [out[s] for s in f.arity]
            for args in itertools.product(*pools):
                if any(a in level[s] for a, s in zip(args, f.arity)):
                    t = Apply(f.name, tuple(args))
                    if t not in out[f.sort] and t not in new[f.sort]:
                        new[f.sort].append(t)
        for s in sig.sorts:
            out[s].extend(new[s])
        level = new
    return out


def atom_universe(sig: Signature, prefix: QPrefix, depth_cap: int = 1) -> List[Formula]:
    """Atoms over prefix variables, constants and shallow function terms.

    Relations come first in declaration order with argument tuples in
    lexicographic term order; then equalities between distinct terms of the
    same sort.
    """
    terms = _terms_by_sort(sig, prefix, depth_cap)
    atoms: List[Formula] = []
    for r in sig.relations.values():
        for args in itertools.product(*(terms[s] for s in r.arity)):
            atoms.append(Rel(r.name, tuple(args)))
    for s in sig.sorts:
        for a, b in itertools.combinations(terms[s], 2):
            atoms.append(Eq(a, b))
    return atoms


def literal_universe(sig: Signature, prefix: QPrefix, depth_cap: int = 1) -> List[Formula]:
    """Every atom of :func:`atom_universe` followed by its negation."""
    out: List[Formula] = []
    for a in atom_universe(sig, prefix, depth_cap):
        out.extend((a, Not(a)))
    return out


def literal_formula(atoms: Sequence[Formula], lit: int) -> Formula:
    a = atoms[lit >> 1]
    return Not(a) if lit & 1 else a


# ---------------------------------------------------------------------------
# Fast evaluation of atoms at prefix assignments

def _compile_term(t: Term, m: Structure, pos: Dict[str, int]):
    if isinstance(t, Var):
        i = pos[t.name]
        return lambda a: a[i]
    if isinstance(t, Const):
        e = m.constants[t.name]
        return lambda a: e
    table = m.functions[t.func]
    subs = [_compile_term(x, m, pos) for x in t.args]
    if len(subs) == 1:
        s0 = subs[0]
        return lambda a: table[(s0(a),)]
    return lambda a: table[tuple(s(a) for s in subs)]


def _compile_atom(f: Formula, m: Structure, pos: Dict[str, int]):
    if isinstance(f, Eq):
        l, r = _compile_term(f.left, m, pos), _compile_term(f.right, m, pos)
        return lambda a: l(a) == r(a)
    tuples = m.relations[f.name]
    subs = [_compile_term(x, m, pos) for x in f.args]
    return lambda a: tuple(s(a) for s in subs) in tuples


class LiteralSpace:
    """Atoms for one prefix together with per-structure pattern tables.

    Thread-safe; meant to be shared by every separation query that uses the
    same prefix during a run.
    """

    def __init__(self, sig: Optional[Signature], prefix: QPrefix, depth_cap: int = 1,
                 atoms: Optional[Sequence[Formula]] = None) -> None:
        self.sig = sig
        self.prefix = prefix
        self.atoms = list(atoms) if atoms is not None else atom_universe(sig, prefix, depth_cap)
        self.num_literals = 2 * len(self.atoms)
        self._patterns: Dict[Structure, Tuple[int, ...]] = {}
        self._lock = threading.Lock()

    def patterns(self, m: Structure) -> Tuple[int, ...]:
        """Atom bitmask for every assignment, in ``itertools.product`` order."""
        with self._lock:
            got = self._patterns.get(m)
        if got is not None:
            return got
        pos = {n: i for i, (_, _, n) in enumerate(self.prefix.quantifiers)}
        evals = [_compile_atom(a, m, pos) for a in self.atoms]
        ranges = [range(m.universe[s]) for _, s, _ in self.prefix.quantifiers]
        pats = []
        for a in itertools.product(*ranges):
            bits = 0
            for i, ev in enumerate(evals):
                if ev(a):
                    bits |= 1 << i
            pats.append(bits)
        got = tuple(pats)
        with self._lock:
            self._patterns[m] = got
        return got

    def branching(self, m: Structure) -> List[int]:
        return [m.universe[s] for _, s, _ in self.prefix.quantifiers]


def literal_true(pattern: int, lit: int) -> bool:
    return bool((pattern >> (lit >> 1)) & 1) != bool(lit & 1)


# ---------------------------------------------------------------------------
# Matrices

@dataclass(frozen=True)
class Matrix:
    """``not c1 or c2 or ... or ck`` with cubes given as literal index tuples."""

    cubes: Tuple[Tuple[int, ...], ...]

    def value(self, pattern: int) -> bool:
        c1 = self.cubes[0]
        if not all(literal_true(pattern, l) for l in c1):
            return True
        return any(all(literal_true(pattern, l) for l in c) for c in self.cubes[1:])

    def literal_count(self) -> int:
        return sum(len(c) for c in self.cubes)

    def normalized(self) -> 'Matrix':
        """Equivalent matrix without contradictory, repeated or subsumed cubes."""
        cubes = []
        for c in self.cubes[1:]:
            c = tuple(sorted(set(c)))
            if any(l ^ 1 in c for l in c) or c in cubes:
                continue
            cubes.append(c)
        kept = [c for c in cubes if not any(d != c and set(d) <= set(c) for d in cubes)]
        return Matrix((tuple(sorted(set(self.cubes[0]))),) + tuple(kept))

    def to_formula(self, atoms: Sequence[Formula]) -> Formula:
        parts: List[Formula] = []
        for l in self.cubes[0]:
            parts.append(literal_formula(atoms, l ^ 1))
        for c in self.cubes[1:]:
            if any(l ^ 1 in c for l in c):
                continue
            lits = [literal_formula(atoms, l) for l in c]
            if not lits:
                return And(())
            parts.append(lits[0] if len(lits) == 1 else And(tuple(lits)))
        if len(parts) == 1:
            return parts[0]
        return Or(tuple(parts))


def fold_quantifiers(kinds: Sequence[str], branching: Sequence[int], leaves: Sequence[bool]) -> bool:
    vals = list(leaves)
    for kind, n in zip(reversed(kinds), reversed(branching)):
        combine = all if kind == FORALL else any
        vals = [combine(vals[i:i + n]) for i in range(0, len(vals), n)]
    return vals[0]


class _FastEval:
    """Evaluate matrices on constraint structures via cached patterns."""

    def __init__(self, space: LiteralSpace) -> None:
        self.space = space
        self.kinds = [k for k, _, _ in space.prefix.quantifiers]

    def holds(self, matrix: Matrix, m: Structure) -> bool:
        memo: Dict[int, bool] = {}
        leaves = []
        for p in self.space.patterns(m):
            v = memo.get(p)
            if v is None:
                v = memo[p] = matrix.value(p)
            leaves.append(v)
        return fold_quantifiers(self.kinds, self.space.branching(m), leaves)

    def satisfies_all(self, matrix: Matrix, constraints: Sequence[SepConstraint]) -> bool:
        cache: Dict[Structure, bool] = {}

        def h(m: Structure) -> bool:
            v = cache.get(m)
            if v is None:
                v = cache[m] = self.holds(matrix, m)
            return v
        return all(satisfies(h, c) for c in constraints)


def _minimize(matrix: Matrix, ok: Callable[[Matrix], bool]) -> Matrix:
    """Greedy single-literal removal: last term first, last literal first, to a fixpoint."""
    changed = True
    while changed:
        changed = False
        for j in reversed(range(len(matrix.cubes))):
            i = len(matrix.cubes[j]) - 1 if j < len(matrix.cubes) else -1
            while i >= 0:
                cube = matrix.cubes[j]
                cand = Matrix(matrix.cubes[:j] + (cube[:i] + cube[i + 1:],) + matrix.cubes[j + 1:])
                if ok(cand):
                    matrix = cand.normalized()
                    changed = True
                    if j >= len(matrix.cubes):
                        break
                i = min(i - 1, len(matrix.cubes[j]) - 1)
    return matrix


def _drop_unused(prefix: QPrefix, matrix: Formula) -> PrenexFormula:
    used = {v.name for v in free_vars(matrix)}
    return PrenexFormula(tuple((k, Var(n, s)) for k, s, n in prefix.quantifiers if n in used), matrix)


def _matrix_of_formula(f: Formula) -> Tuple[List[Formula], Matrix]:
    """Read a matrix in ``lit or ... or cube or ...`` form back into cubes."""
    disjuncts = list(f.args) if isinstance(f, Or) else [f]
    atoms: List[Formula] = []

    def lit(g: Formula) -> int:
        neg = isinstance(g, Not)
        a = g.body if neg else g
        if not isinstance(a, (Rel, Eq)):
            raise ValueError(f'not a literal: {g}')
        if a not in atoms:
            atoms.append(a)
        return 2 * atoms.index(a) + int(neg)

    free: List[int] = []
    cubes: List[Tuple[int, ...]] = []
    for d in disjuncts:
        if isinstance(d, And):
            cubes.append(tuple(lit(x) for x in d.args))
        else:
            free.append(lit(d) ^ 1)
    return atoms, Matrix((tuple(free),) + tuple(cubes))


def minimize_matrix(sep: PrenexFormula, constraints: Sequence[SepConstraint],
                    sig: Optional[Signature] = None) -> PrenexFormula:
    """Drop matrix literals one at a time while every constraint still holds.

    The matrix must be a disjunction of literals and cubes.  Removing a free
    literal removes that disjunct; removing a cube literal weakens the cube.
    """
    prefix = QPrefix(tuple((k, v.sort, v.name) for k, v in sep.prefix))
    atoms, matrix = _matrix_of_formula(sep.matrix)
    space = LiteralSpace(sig, prefix, atoms=atoms)
    fast = _FastEval(space)
    best = _minimize(matrix.normalized(), lambda m: fast.satisfies_all(m, constraints))
    return PrenexFormula(sep.prefix, best.to_formula(atoms))


# ---------------------------------------------------------------------------
# SAT-based separation

class Separator:
    """Incremental separation for one prefix and template.

    Constraints can be added at any time; once :meth:`separate` reports
    UNSEP, it stays UNSEP for every superset of constraints.
    """

    def __init__(self, sig: Signature, prefix: QPrefix, template: Optional[PDNFTemplate] = None,
                 space: Optional[LiteralSpace] = None, backend: str = DEFAULT_BACKEND,
                 record: bool = False) -> None:
        self.sig = sig
        self.prefix = prefix
        self.template = template or PDNFTemplate(default_k(prefix))
        self.space = space or LiteralSpace(sig, prefix, self.template.depth_cap)
        self.atoms = self.space.atoms
        self.kinds = [k for k, _, _ in prefix.quantifiers]
        self.fast = _FastEval(self.space)
        self.constraints: List[SepConstraint] = []
        self._seen: set = set()
        self.sat = SatSolver(backend, record=record)
        self.T = self.sat.new_var()
        self.sat.add_clause([self.T])
        k, n = self.template.k, self.space.num_literals
        self.presence = [[self.sat.new_var() for _ in range(n)] for _ in range(k)]
        # Cubes after the first may be left out entirely, so k terms cover every smaller k.
        self.enabled = [self.T] + [self.sat.new_var() for _ in range(k - 1)]
        self.sat.set_phases([-v for row in self.presence for v in row])
        if self.template.literals_per_cube is not None:
            for row in self.presence:
                enc = CardEnc.atmost(row, self.template.literals_per_cube,
                                     top_id=self.sat.num_vars, encoding=EncType.seqcounter)
                self.sat.reserve(max([abs(l) for c in enc.clauses for l in c] + [self.sat.num_vars]))
                for cl in enc.clauses:
                    self.sat.add_clause(cl)
        self._matrix_var: Dict[int, int] = {}
        self._gates: Dict[Tuple[str, frozenset], int] = {}
        self._roots: Dict[Structure, int] = {}
        self._unsep = False

    # -- encoding --------------------------------------------------------

    def _and(self, lits: Sequence[int]) -> int:
        T = self.T
        out = []
        for l in lits:
            if l == -T:
                return -T
            if l != T:
                out.append(l)
        out = sorted(set(out))
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

    def _or(self, lits: Sequence[int]) -> int:
        return -self._and([-l for l in lits])

    def matrix_var(self, pattern: int) -> int:
        """Literal equivalent to the matrix value at an assignment with ``pattern``."""
        v = self._matrix_var.get(pattern)
        if v is not None:
            return v
        false_lits = [l for l in range(self.space.num_literals) if not literal_true(pattern, l)]
        terms = [self._or([self.presence[0][l] for l in false_lits])]
        for j in range(1, self.template.k):
            terms.append(self._and([self.enabled[j]] + [-self.presence[j][l] for l in false_lits]))
        v = self._or(terms)
        self._matrix_var[pattern] = v
        return v

    def root(self, m: Structure) -> int:
        """Literal equivalent to the candidate formula holding in ``m``."""
        r = self._roots.get(m)
        if r is not None:
            return r
        leaves = [self.matrix_var(p) for p in self.space.patterns(m)]
        for kind, n in zip(reversed(self.kinds), reversed(self.space.branching(m))):
            combine = self._and if kind == FORALL else self._or
            leaves = [combine(leaves[i:i + n]) for i in range(0, len(leaves), n)]
        r = self._roots[m] = leaves[0]
        return r

    def add(self, c: SepConstraint) -> bool:
        """Add a constraint; False if it was already present."""
        if c in self._seen:
            return False
        self._seen.add(c)
        self.constraints.append(c)
        if isinstance(c, Positive):
            self.sat.add_clause([self.root(c.structure)])
        elif isinstance(c, Negative):
            self.sat.add_clause([-self.root(c.structure)])
        else:
            self.sat.add_clause([-self.root(c.pre), self.root(c.post)])
        return True

    def add_all(self, cs: Iterable[SepConstraint]) -> None:
        for c in cs:
            self.add(c)

    # -- solving ---------------------------------------------------------

    def separate(self, cancel: Optional[CancelToken] = None, minimize: bool = True) -> Optional[PrenexFormula]:
        """A separator for all constraints so far, or None for UNSEP."""
        if self._unsep:
            return None
        if cancel is not None:
            cancel.check()
            cancel.on_cancel(self.sat.interrupt)
        try:
            res = self.sat.solve()
        finally:
            if cancel is not None:
                cancel.remove_callback(self.sat.interrupt)
        if res is None or (cancel is not None and cancel.cancelled):
            raise Cancelled()
        if not res:
            self._unsep = True
            return None
        cubes = tuple(tuple(l for l in range(self.space.num_literals) if self.sat.value(row[l]))
                      for row, on in zip(self.presence, self.enabled) if on == self.T or self.sat.value(on))
        matrix = Matrix(cubes).normalized()
        if minimize:
            matrix = _minimize(matrix, lambda m: self.fast.satisfies_all(m, self.constraints))
        result = _drop_unused(self.prefix, matrix.to_formula(self.atoms))
        f = result.to_formula()
        for c in self.constraints:
            if not satisfies(lambda m: evaluate(m, f), c):
                raise AssertionError(f'separator {f} violates {c}')
        return result

    def holds(self, p: PrenexFormula, m: Structure) -> bool:
        return evaluate(m, p.to_formula())


def separate(prefix: QPrefix, template: PDNFTemplate, constraints: Sequence[SepConstraint],
             sig: Signature, backend: str = DEFAULT_BACKEND, minimize: bool = True) -> Optional[PrenexFormula]:
    """One-shot separation; None means UNSEP."""
    s = Separator(sig, prefix, template, backend=backend)
    s.add_all(constraints)
    return s.separate(minimize=minimize)
