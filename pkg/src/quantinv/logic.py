"""Many-sorted first-order logic: signatures, formulas, finite structures.

Formulas are immutable trees with cached structural hashes so they can be
used freely as dictionary keys (the grounder and the separation engine both
cache on them).  ``TRUE`` and ``FALSE`` are the empty conjunction and the
empty disjunction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union


class LogicError(Exception):
    pass


class SortError(LogicError):
    """Raised by :func:`sort_check`; ``term`` is the offending subterm."""

    def __init__(self, message: str, term: object = None,
                 expected: Optional[str] = None, actual: Optional[str] = None) -> None:
        super().__init__(message)
        self.term = term
        self.expected = expected
        self.actual = actual


class EvaluationError(LogicError):
    pass


# ---------------------------------------------------------------------------
# Signatures

@dataclass(frozen=True)
class ConstantDecl:
    name: str
    sort: str
    mutable: bool = False


@dataclass(frozen=True)
class RelationDecl:
    name: str
    arity: Tuple[str, ...]
    mutable: bool = False


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    arity: Tuple[str, ...]
    sort: str
    mutable: bool = False


Decl = Union[ConstantDecl, RelationDecl, FunctionDecl]


def primed(name: str) -> str:
    return name + "'"


def is_primed(name: str) -> bool:
    return name.endswith("'")


def unprimed(name: str) -> str:
    return name[:-1] if name.endswith("'") else name


class Signature:
    """Sorts plus constant, relation and function declarations.

    Declaration order is preserved and is what every deterministic
    enumeration in the package follows.
    """

    def __init__(self, sorts: Iterable[str], constants: Iterable[ConstantDecl] = (),
                 relations: Iterable[RelationDecl] = (), functions: Iterable[FunctionDecl] = ()) -> None:
        self.sorts: Tuple[str, ...] = tuple(sorts)
        if len(set(self.sorts)) != len(self.sorts):
            raise SortError('duplicate sort declaration')
        self.constants: Dict[str, ConstantDecl] = {}
        self.relations: Dict[str, RelationDecl] = {}
        self.functions: Dict[str, FunctionDecl] = {}
        for group, table in ((constants, self.constants), (relations, self.relations),
                             (functions, self.functions)):
            for d in group:
                if d.name in self.constants or d.name in self.relations or d.name in self.functions:
                    raise SortError(f'duplicate symbol {d.name}', d.name)
                table[d.name] = d
        for d in self.declarations():
            used = [d.sort] if isinstance(d, ConstantDecl) else list(d.arity)
            if isinstance(d, FunctionDecl):
                used.append(d.sort)
                if not d.arity:
                    raise SortError(f'function {d.name} needs at least one argument', d.name)
            for s in used:
                if s not in self.sorts:
                    raise SortError(f'undeclared sort {s} in declaration of {d.name}', d.name)
        self._sort_index = {s: i for i, s in enumerate(self.sorts)}

    def declarations(self) -> Iterator[Decl]:
        yield from self.constants.values()
        yield from self.relations.values()
        yield from self.functions.values()

    def symbol(self, name: str) -> Optional[Decl]:
        return self.constants.get(name) or self.relations.get(name) or self.functions.get(name)

    def sort_index(self, sort: str) -> int:
        return self._sort_index[sort]

    def is_mutable(self, name: str) -> bool:
        d = self.symbol(name)
        return d is not None and d.mutable

    def mutable_symbols(self) -> List[str]:
        return [d.name for d in self.declarations() if d.mutable]

    def doubled(self) -> 'Signature':
        """The two-vocabulary signature: every mutable symbol gets a primed twin."""
        cs = list(self.constants.values()) + [ConstantDecl(primed(c.name), c.sort, True)
                                               for c in self.constants.values() if c.mutable]
        rs = list(self.relations.values()) + [RelationDecl(primed(r.name), r.arity, True)
                                               for r in self.relations.values() if r.mutable]
        fs = list(self.functions.values()) + [FunctionDecl(primed(f.name), f.arity, f.sort, True)
                                               for f in self.functions.values() if f.mutable]
        return Signature(self.sorts, cs, rs, fs)

    def renamed(self, mapping: Mapping[str, str], keep_original: bool = False) -> 'Signature':
        """Signature with symbols renamed (optionally keeping the originals too)."""
        def rn(d: Decl) -> List[Decl]:
            out: List[Decl] = [d] if keep_original or d.name not in mapping else []
            if d.name in mapping:
                if isinstance(d, ConstantDecl):
                    out.append(ConstantDecl(mapping[d.name], d.sort, d.mutable))
                elif isinstance(d, RelationDecl):
                    out.append(RelationDecl(mapping[d.name], d.arity, d.mutable))
                else:
                    out.append(FunctionDecl(mapping[d.name], d.arity, d.sort, d.mutable))
            return out
        return Signature(self.sorts,
                         [x for c in self.constants.values() for x in rn(c)],
                         [x for r in self.relations.values() for x in rn(r)],
                         [x for f in self.functions.values() for x in rn(f)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Signature):
            return NotImplemented
        return (self.sorts == other.sorts and self.constants == other.constants
                and self.relations == other.relations and self.functions == other.functions)

    def __hash__(self) -> int:
        return hash((self.sorts, tuple(self.constants.values()), tuple(self.relations.values()),
                     tuple(self.functions.values())))

    def __repr__(self) -> str:
        return (f'Signature(sorts={list(self.sorts)}, constants={list(self.constants)}, '
                f'relations={list(self.relations)}, functions={list(self.functions)})')


# ---------------------------------------------------------------------------
# Syntax trees

class _Node:
    __slots__ = ()

    def _fields(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if type(other) is not type(self) or self._h != other._h:  # type: ignore[attr-defined]
            return False
        return self._fields() == other._fields()  # type: ignore[attr-defined]

    def __ne__(self, other: object) -> bool:
        return not self.__eq__(other)

    def __hash__(self) -> int:
        return self._h  # type: ignore[attr-defined]

    def __str__(self) -> str:
        from .syntax import print_formula
        return print_formula(self)  # type: ignore[arg-type]


def _seal(obj: _Node) -> None:
    object.__setattr__(obj, '_h', hash((type(obj).__name__,) + obj._fields()))


@dataclass(frozen=True, eq=False, slots=True)
class Var(_Node):
    name: str
    sort: str
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.name, self.sort)

    def __post_init__(self) -> None:
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Const(_Node):
    name: str
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.name,)

    def __post_init__(self) -> None:
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Apply(_Node):
    func: str
    args: Tuple['Term', ...]
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.func, self.args)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'args', tuple(self.args))
        _seal(self)


Term = Union[Var, Const, Apply]


@dataclass(frozen=True, eq=False, slots=True)
class Rel(_Node):
    name: str
    args: Tuple[Term, ...] = ()
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.name, self.args)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'args', tuple(self.args))
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Eq(_Node):
    left: Term
    right: Term
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.left, self.right)

    def __post_init__(self) -> None:
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Not(_Node):
    body: 'Formula'
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.body,)

    def __post_init__(self) -> None:
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class And(_Node):
    args: Tuple['Formula', ...] = ()
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.args,)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'args', tuple(self.args))
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Or(_Node):
    args: Tuple['Formula', ...] = ()
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.args,)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'args', tuple(self.args))
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Implies(_Node):
    left: 'Formula'
    right: 'Formula'
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.left, self.right)

    def __post_init__(self) -> None:
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Iff(_Node):
    left: 'Formula'
    right: 'Formula'
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.left, self.right)

    def __post_init__(self) -> None:
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Forall(_Node):
    vars: Tuple[Var, ...]
    body: 'Formula'
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.vars, self.body)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'vars', tuple(self.vars))
        _seal(self)


@dataclass(frozen=True, eq=False, slots=True)
class Exists(_Node):
    vars: Tuple[Var, ...]
    body: 'Formula'
    _h: int = field(init=False, repr=False, compare=False)

    def _fields(self) -> tuple:
        return (self.vars, self.body)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'vars', tuple(self.vars))
        _seal(self)


Formula = Union[Rel, Eq, Not, And, Or, Implies, Iff, Forall, Exists]
Quantifier = Union[Forall, Exists]

TRUE: Formula = And(())
FALSE: Formula = Or(())

FORALL = 'forall'
EXISTS = 'exists'


def is_true(f: Formula) -> bool:
    return isinstance(f, And) and not f.args


def is_false(f: Formula) -> bool:
    return isinstance(f, Or) and not f.args


def conj(fs: Iterable[Formula]) -> Formula:
    """Flattening conjunction; a single conjunct is returned as is."""
    out: List[Formula] = []
    for f in fs:
        if isinstance(f, And):
            out.extend(f.args)
        else:
            out.append(f)
    return out[0] if len(out) == 1 else And(tuple(out))


def disj(fs: Iterable[Formula]) -> Formula:
    out: List[Formula] = []
    for f in fs:
        if isinstance(f, Or):
            out.extend(f.args)
        else:
            out.append(f)
    return out[0] if len(out) == 1 else Or(tuple(out))


def negate(f: Formula) -> Formula:
    """Negation that cancels a top-level negation instead of stacking."""
    return f.body if isinstance(f, Not) else Not(f)


def conjuncts(f: Formula) -> List[Formula]:
    if isinstance(f, And):
        return [g for a in f.args for g in conjuncts(a)]
    return [f]


def is_literal(f: Formula) -> bool:
    return isinstance(f, (Rel, Eq)) or (isinstance(f, Not) and isinstance(f.body, (Rel, Eq)))


def quantify(kind: str, vs: Sequence[Var], body: Formula) -> Formula:
    if not vs:
        return body
    return Forall(tuple(vs), body) if kind == FORALL else Exists(tuple(vs), body)


# ---------------------------------------------------------------------------
# Traversals

def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Apply):
        for a in t.args:
            yield from subterms(a)


def children(f: Formula) -> Tuple[Formula, ...]:
    if isinstance(f, Not):
        return (f.body,)
    if isinstance(f, (And, Or)):
        return f.args
    if isinstance(f, (Implies, Iff)):
        return (f.left, f.right)
    if isinstance(f, (Forall, Exists)):
        return (f.body,)
    return ()


def atom_terms(f: Formula) -> Tuple[Term, ...]:
    if isinstance(f, Rel):
        return f.args
    if isinstance(f, Eq):
        return (f.left, f.right)
    return ()


@lru_cache(maxsize=1 << 16)
def free_vars(f: Formula) -> frozenset:
    """Free variables of ``f`` as a frozenset of :class:`Var`."""
    if isinstance(f, (Rel, Eq)):
        return frozenset(s for t in atom_terms(f) for s in subterms(t) if isinstance(s, Var))
    if isinstance(f, (Forall, Exists)):
        return free_vars(f.body) - frozenset(f.vars)
    out: frozenset = frozenset()
    for c in children(f):
        out |= free_vars(c)
    return out


@lru_cache(maxsize=1 << 16)
def symbols(f: Formula) -> frozenset:
    """Names of constant, relation and function symbols occurring in ``f``."""
    out = set()
    if isinstance(f, Rel):
        out.add(f.name)
    for t in atom_terms(f):
        for s in subterms(t):
            if isinstance(s, Const):
                out.add(s.name)
            elif isinstance(s, Apply):
                out.add(s.func)
    for c in children(f):
        out |= symbols(c)
    return frozenset(out)


def literal_count(f: Formula) -> int:
    if isinstance(f, (Rel, Eq)):
        return 1
    return sum(literal_count(c) for c in children(f))


def map_terms(f: Formula, fn) -> Formula:
    """Rebuild ``f`` applying ``fn`` bottom-up to every term."""
    def mt(t: Term) -> Term:
        if isinstance(t, Apply):
            t = Apply(t.func, tuple(mt(a) for a in t.args))
        return fn(t)

    def go(g: Formula) -> Formula:
        if isinstance(g, Rel):
            return Rel(g.name, tuple(mt(a) for a in g.args))
        if isinstance(g, Eq):
            return Eq(mt(g.left), mt(g.right))
        if isinstance(g, Not):
            return Not(go(g.body))
        if isinstance(g, And):
            return And(tuple(go(a) for a in g.args))
        if isinstance(g, Or):
            return Or(tuple(go(a) for a in g.args))
        if isinstance(g, Implies):
            return Implies(go(g.left), go(g.right))
        if isinstance(g, Iff):
            return Iff(go(g.left), go(g.right))
        if isinstance(g, Forall):
            return Forall(g.vars, go(g.body))
        if isinstance(g, Exists):
            return Exists(g.vars, go(g.body))
        raise TypeError(g)
    return go(f)


def map_atoms(f: Formula, fn) -> Formula:
    """Rebuild ``f`` replacing every atom ``a`` by ``fn(a)``."""
    if isinstance(f, (Rel, Eq)):
        return fn(f)
    if isinstance(f, Not):
        return Not(map_atoms(f.body, fn))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(map_atoms(a, fn) for a in f.args))
    if isinstance(f, (Implies, Iff)):
        return type(f)(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, (Forall, Exists)):
        return type(f)(f.vars, map_atoms(f.body, fn))
    raise TypeError(f)


def rename_symbols(f: Formula, mapping: Mapping[str, str]) -> Formula:
    """Rename constant/relation/function symbols; variables are untouched."""
    def rt(t: Term) -> Term:
        if isinstance(t, Const):
            return Const(mapping[t.name]) if t.name in mapping else t
        if isinstance(t, Apply):
            return Apply(mapping.get(t.func, t.func), tuple(rt(a) for a in t.args))
        return t

    def ra(a: Formula) -> Formula:
        if isinstance(a, Rel):
            return Rel(mapping.get(a.name, a.name), tuple(rt(t) for t in a.args))
        return Eq(rt(a.left), rt(a.right))  # type: ignore[union-attr]
    return map_atoms(f, ra)


def substitute(f: Formula, sub: Mapping[Var, Term]) -> Formula:
    """Capture-naive substitution of free variables (callers keep names fresh)."""
    def go(g: Formula, bound: frozenset) -> Formula:
        if isinstance(g, (Rel, Eq)):
            return map_terms(g, lambda t: sub[t] if isinstance(t, Var) and t in sub and t not in bound else t)
        if isinstance(g, (Forall, Exists)):
            return type(g)(g.vars, go(g.body, bound | frozenset(g.vars)))
        if isinstance(g, Not):
            return Not(go(g.body, bound))
        if isinstance(g, (And, Or)):
            return type(g)(tuple(go(a, bound) for a in g.args))
        return type(g)(go(g.left, bound), go(g.right, bound))  # type: ignore[union-attr]
    return go(f, frozenset())


# ---------------------------------------------------------------------------
# Sort checking

def term_sort(t: Term, sig: Signature) -> str:
    if isinstance(t, Var):
        if t.sort not in sig.sorts:
            raise SortError(f'variable {t.name} has undeclared sort {t.sort}', t)
        return t.sort
    if isinstance(t, Const):
        d = sig.constants.get(t.name)
        if d is None:
            raise SortError(f'unknown constant {t.name}', t)
        return d.sort
    d = sig.functions.get(t.func)
    if d is None:
        raise SortError(f'unknown function {t.func}', t)
    if len(d.arity) != len(t.args):
        raise SortError(f'{t.func} expects {len(d.arity)} arguments, got {len(t.args)}', t)
    for a, s in zip(t.args, d.arity):
        actual = term_sort(a, sig)
        if actual != s:
            raise SortError(f'argument of {t.func} has sort {actual}, expected {s}', a, s, actual)
    return d.sort


def sort_check(f: Formula, sig: Signature) -> None:
    """Raise :class:`SortError` unless ``f`` is well-sorted under ``sig``."""
    if isinstance(f, Rel):
        d = sig.relations.get(f.name)
        if d is None:
            raise SortError(f'unknown relation {f.name}', f)
        if len(d.arity) != len(f.args):
            raise SortError(f'{f.name} expects {len(d.arity)} arguments, got {len(f.args)}', f)
        for a, s in zip(f.args, d.arity):
            actual = term_sort(a, sig)
            if actual != s:
                raise SortError(f'argument of {f.name} has sort {actual}, expected {s}', a, s, actual)
    elif isinstance(f, Eq):
        ls, rs = term_sort(f.left, sig), term_sort(f.right, sig)
        if ls != rs:
            raise SortError(f'equality between sorts {ls} and {rs}', f, ls, rs)
    elif isinstance(f, (Forall, Exists)):
        names = [v.name for v in f.vars]
        if len(set(names)) != len(names):
            raise SortError('duplicate bound variable', f)
        for v in f.vars:
            term_sort(v, sig)
        sort_check(f.body, sig)
    else:
        for c in children(f):
            sort_check(c, sig)


# ---------------------------------------------------------------------------
# Finite structures

Element = int


class Structure:
    """A finite structure; elements of sort ``s`` are ``0 .. universe[s]-1``.

    Structures compare and hash by value.  Relations are frozensets of
    element tuples, functions are total maps from argument tuples.
    """

    __slots__ = ('universe', 'constants', 'relations', 'functions', '_key', '_h')

    def __init__(self, universe: Mapping[str, int], constants: Mapping[str, Element] = {},
                 relations: Mapping[str, Iterable[Tuple[Element, ...]]] = {},
                 functions: Mapping[str, Mapping[Tuple[Element, ...], Element]] = {}) -> None:
        self.universe: Dict[str, int] = dict(universe)
        self.constants: Dict[str, Element] = dict(constants)
        self.relations: Dict[str, frozenset] = {r: frozenset(tuple(t) for t in ts) for r, ts in relations.items()}
        self.functions: Dict[str, Dict[Tuple[Element, ...], Element]] = {
            f: {tuple(k): v for k, v in m.items()} for f, m in functions.items()}
        self._key = (tuple(sorted(self.universe.items())),
                     tuple(sorted(self.constants.items())),
                     tuple(sorted((r, tuple(sorted(ts))) for r, ts in self.relations.items())),
                     tuple(sorted((f, tuple(sorted(m.items()))) for f, m in self.functions.items())))
        self._h = hash(self._key)

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        return isinstance(other, Structure) and self._h == other._h and self._key == other._key

    def __hash__(self) -> int:
        return self._h

    def elements(self, sort: str) -> range:
        return range(self.universe[sort])

    def size(self) -> int:
        return sum(self.universe.values())

    def __repr__(self) -> str:
        parts = [f'{s}={n}' for s, n in self.universe.items()]
        parts += [f'{c}={v}' for c, v in self.constants.items()]
        parts += [f'{r}={sorted(ts)}' for r, ts in self.relations.items()]
        parts += [f'{f}={dict(sorted(m.items()))}' for f, m in self.functions.items()]
        return 'Structure(' + ', '.join(parts) + ')'

    def restrict(self, sig: Signature) -> 'Structure':
        """Keep only the interpretations of symbols declared in ``sig``."""
        return Structure({s: self.universe[s] for s in sig.sorts},
                         {c: v for c, v in self.constants.items() if c in sig.constants},
                         {r: v for r, v in self.relations.items() if r in sig.relations},
                         {f: v for f, v in self.functions.items() if f in sig.functions})

    def rename(self, mapping: Mapping[str, str]) -> 'Structure':
        return Structure(self.universe,
                         {mapping.get(c, c): v for c, v in self.constants.items()},
                         {mapping.get(r, r): v for r, v in self.relations.items()},
                         {mapping.get(f, f): v for f, v in self.functions.items()})


def check_structure(m: Structure, sig: Signature) -> None:
    """Raise :class:`LogicError` unless ``m`` interprets ``sig`` completely and consistently."""
    for s in sig.sorts:
        if m.universe.get(s, 0) < 1:
            raise LogicError(f'sort {s} has an empty universe')
    for c in sig.constants.values():
        if c.name not in m.constants or not 0 <= m.constants[c.name] < m.universe[c.sort]:
            raise LogicError(f'constant {c.name} is not interpreted in sort {c.sort}')
    for r in sig.relations.values():
        if r.name not in m.relations:
            raise LogicError(f'relation {r.name} is not interpreted')
        for t in m.relations[r.name]:
            if len(t) != len(r.arity) or any(not 0 <= e < m.universe[s] for e, s in zip(t, r.arity)):
                raise LogicError(f'bad tuple {t} for relation {r.name}')
    for f in sig.functions.values():
        table = m.functions.get(f.name)
        if table is None:
            raise LogicError(f'function {f.name} is not interpreted')
        for args in itertools.product(*(range(m.universe[s]) for s in f.arity)):
            if args not in table or not 0 <= table[args] < m.universe[f.sort]:
                raise LogicError(f'function {f.name} is not total at {args}')


class TwoStateStructure:
    """A structure over the doubled signature, viewed as a transition."""

    __slots__ = ('structure', 'signature')

    def __init__(self, structure: Structure, signature: Signature) -> None:
        self.structure = structure
        self.signature = signature

    @property
    def pre(self) -> Structure:
        return self.structure.restrict(self.signature)

    @property
    def post(self) -> Structure:
        sig = self.signature
        m = self.structure
        def pick(name: str, table: Mapping):
            d = sig.symbol(name)
            return table[primed(name)] if d is not None and d.mutable else table[name]
        return Structure(m.universe,
                         {c: pick(c, m.constants) for c in sig.constants},
                         {r: pick(r, m.relations) for r in sig.relations},
                         {f: pick(f, m.functions) for f in sig.functions})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TwoStateStructure) and self.structure == other.structure

    def __hash__(self) -> int:
        return hash(self.structure)

    def __repr__(self) -> str:
        return f'TwoStateStructure(pre={self.pre!r}, post={self.post!r})'


def two_state(pre: Structure, post: Structure, sig: Signature) -> TwoStateStructure:
    """Glue a pre-state and a post-state (same universe, same immutable symbols)."""
    if pre.universe != post.universe:
        raise LogicError('pre and post states must share the universe')
    consts = dict(pre.constants)
    rels = dict(pre.relations)
    funcs = dict(pre.functions)
    for d in sig.declarations():
        if d.mutable:
            table = (post.constants if isinstance(d, ConstantDecl)
                     else post.relations if isinstance(d, RelationDecl) else post.functions)
            dest = consts if isinstance(d, ConstantDecl) else rels if isinstance(d, RelationDecl) else funcs
            dest[primed(d.name)] = table[d.name]
        elif isinstance(d, ConstantDecl) and pre.constants[d.name] != post.constants[d.name] or \
                isinstance(d, RelationDecl) and pre.relations[d.name] != post.relations[d.name] or \
                isinstance(d, FunctionDecl) and pre.functions[d.name] != post.functions[d.name]:
            raise LogicError(f'immutable symbol {d.name} differs between pre and post state')
    return TwoStateStructure(Structure(pre.universe, consts, rels, funcs), sig)


# ---------------------------------------------------------------------------
# Evaluation

def eval_term(m: Structure, env: Mapping[str, Element], t: Term) -> Element:
    if isinstance(t, Var):
        try:
            return env[t.name]
        except KeyError:
            raise EvaluationError(f'unbound variable {t.name}') from None
    if isinstance(t, Const):
        return m.constants[t.name]
    return m.functions[t.func][tuple(eval_term(m, env, a) for a in t.args)]


def evaluate(m: Structure, f: Formula, env: Optional[Mapping[str, Element]] = None) -> bool:
    """Tarskian truth value of ``f`` in ``m`` under ``env`` (variable name -> element)."""
    return _ev(m, f, dict(env) if env else {})


def _ev(m: Structure, f: Formula, env: Dict[str, Element]) -> bool:
    if isinstance(f, Rel):
        return tuple(eval_term(m, env, a) for a in f.args) in m.relations[f.name]
    if isinstance(f, Eq):
        return eval_term(m, env, f.left) == eval_term(m, env, f.right)
    if isinstance(f, Not):
        return not _ev(m, f.body, env)
    if isinstance(f, And):
        return all(_ev(m, a, env) for a in f.args)
    if isinstance(f, Or):
        return any(_ev(m, a, env) for a in f.args)
    if isinstance(f, Implies):
        return not _ev(m, f.left, env) or _ev(m, f.right, env)
    if isinstance(f, Iff):
        return _ev(m, f.left, env) == _ev(m, f.right, env)
    if isinstance(f, (Forall, Exists)):
        want = isinstance(f, Exists)
        saved = {v.name: env[v.name] for v in f.vars if v.name in env}
        try:
            for elems in itertools.product(*(range(m.universe[v.sort]) for v in f.vars)):
                for v, e in zip(f.vars, elems):
                    env[v.name] = e
                if _ev(m, f.body, env) == want:
                    return want
            return not want
        finally:
            for v in f.vars:
                env.pop(v.name, None)
            env.update(saved)
    raise TypeError(f'not a formula: {f!r}')


# ---------------------------------------------------------------------------
# Priming

def prime(f: Formula, sig: Signature) -> Formula:
    """Replace every mutable symbol by its primed twin."""
    syms = symbols(f)
    if any(is_primed(s) for s in syms):
        raise LogicError('formula already contains primed symbols')
    mapping = {s: primed(s) for s in syms if sig.is_mutable(s)}
    return rename_symbols(f, mapping) if mapping else f


# ---------------------------------------------------------------------------
# Prenex normal form

@dataclass(frozen=True)
class PrenexFormula:
    prefix: Tuple[Tuple[str, Var], ...]
    matrix: Formula

    def to_formula(self) -> Formula:
        """Fold the prefix back into nested quantifier blocks."""
        f = self.matrix
        blocks: List[Tuple[str, List[Var]]] = []
        for kind, v in self.prefix:
            if blocks and blocks[-1][0] == kind:
                blocks[-1][1].append(v)
            else:
                blocks.append((kind, [v]))
        for kind, vs in reversed(blocks):
            f = quantify(kind, vs, f)
        return f

    def kinds(self) -> Tuple[Tuple[str, str], ...]:
        return tuple((k, v.sort) for k, v in self.prefix)

    def __str__(self) -> str:
        return str(self.to_formula())


def _fresh(base: str, taken: set) -> str:
    if base not in taken:
        return base
    i = 1
    while f'{base}_{i}' in taken:
        i += 1
    return f'{base}_{i}'


def to_prenex(f: Formula) -> PrenexFormula:
    """Equivalent prenex form; quantifiers are pulled out left to right."""
    taken = {v.name for v in free_vars(f)}
    prefix: List[Tuple[str, Var]] = []

    def go(g: Formula, positive: bool, ren: Dict[str, Var]) -> Formula:
        if isinstance(g, (Rel, Eq)):
            if ren:
                g = map_terms(g, lambda t: ren.get(t.name, t) if isinstance(t, Var) else t)
            return g if positive else Not(g)
        if isinstance(g, Not):
            return go(g.body, not positive, ren)
        if isinstance(g, (And, Or)):
            parts = tuple(go(a, positive, ren) for a in g.args)
            return (And if isinstance(g, And) == positive else Or)(parts)
        if isinstance(g, Implies):
            return go(Or((Not(g.left), g.right)), positive, ren)
        if isinstance(g, Iff):
            return go(And((Implies(g.left, g.right), Implies(g.right, g.left))), positive, ren)
        if isinstance(g, (Forall, Exists)):
            kind = FORALL if isinstance(g, Forall) == positive else EXISTS
            inner = dict(ren)
            for v in g.vars:
                name = _fresh(v.name, taken)
                taken.add(name)
                nv = Var(name, v.sort)
                inner[v.name] = nv
                prefix.append((kind, nv))
            return go(g.body, positive, inner)
        raise TypeError(g)

    matrix = go(f, True, {})
    return PrenexFormula(tuple(prefix), matrix)


# ---------------------------------------------------------------------------
# Diagrams

def diagram_vars(m: Structure, sig: Signature) -> Dict[Tuple[str, int], Var]:
    names = {}
    single = len(sig.sorts) == 1
    for s in sig.sorts:
        for e in m.elements(s):
            names[(s, e)] = Var(f'v{e}' if single else f'v_{s}_{e}', s)
    return names


def diagram(m: Structure, sig: Signature, exact: bool = False) -> Formula:
    """Existential description of ``m`` up to embedding (or up to isomorphism if ``exact``)."""
    vs = diagram_vars(m, sig)
    lits: List[Formula] = []
    for s in sig.sorts:
        es = list(m.elements(s))
        for i, j in itertools.combinations(es, 2):
            lits.append(Not(Eq(vs[(s, i)], vs[(s, j)])))
    for r in sig.relations.values():
        for args in itertools.product(*(m.elements(s) for s in r.arity)):
            atom = Rel(r.name, tuple(vs[(s, e)] for s, e in zip(r.arity, args)))
            lits.append(atom if args in m.relations[r.name] else Not(atom))
    for c in sig.constants.values():
        lits.append(Eq(Const(c.name), vs[(c.sort, m.constants[c.name])]))
    for fn in sig.functions.values():
        for args in itertools.product(*(m.elements(s) for s in fn.arity)):
            app = Apply(fn.name, tuple(vs[(s, e)] for s, e in zip(fn.arity, args)))
            lits.append(Eq(app, vs[(fn.sort, m.functions[fn.name][args])]))
    if exact:
        for s in sig.sorts:
            z = Var(f'z_{s}' if len(sig.sorts) > 1 else 'z', s)
            lits.append(Forall((z,), disj(Eq(z, vs[(s, e)]) for e in m.elements(s))))
    ordered = [vs[(s, e)] for s in sig.sorts for e in m.elements(s)]
    return Exists(tuple(ordered), conj(lits) if lits else TRUE)


def isomorphic(a: Structure, b: Structure, sig: Signature) -> bool:
    """Brute-force isomorphism test (small structures only)."""
    if any(a.universe[s] != b.universe[s] for s in sig.sorts):
        return False
    perms = [list(itertools.permutations(range(a.universe[s]))) for s in sig.sorts]
    idx = {s: i for i, s in enumerate(sig.sorts)}
    for choice in itertools.product(*perms):
        def mp(s: str, e: int) -> int:
            return choice[idx[s]][e]
        if all(mp(c.sort, a.constants[c.name]) == b.constants[c.name] for c in sig.constants.values()) and \
           all(frozenset(tuple(mp(s, e) for s, e in zip(r.arity, t)) for t in a.relations[r.name])
               == b.relations[r.name] for r in sig.relations.values()) and \
           all(all(b.functions[f.name][tuple(mp(s, e) for s, e in zip(f.arity, args))] == mp(f.sort, v)
                   for args, v in a.functions[f.name].items()) for f in sig.functions.values()):
            return True
    return False


def all_structures(sig: Signature, sizes: Mapping[str, int]) -> Iterator[Structure]:
    """Every structure over ``sig`` with exactly the given universe sizes."""
    cs = list(sig.constants.values())
    rs = list(sig.relations.values())
    fs = list(sig.functions.values())
    const_choices = [range(sizes[c.sort]) for c in cs]
    rel_choices = []
    for r in rs:
        tuples = list(itertools.product(*(range(sizes[s]) for s in r.arity)))
        rel_choices.append([frozenset(t for t, bit in zip(tuples, bits) if bit)
                            for bits in itertools.product((0, 1), repeat=len(tuples))])
    fun_choices = []
    for f in fs:
        argss = list(itertools.product(*(range(sizes[s]) for s in f.arity)))
        fun_choices.append([dict(zip(argss, vals))
                            for vals in itertools.product(range(sizes[f.sort]), repeat=len(argss))])
    for cv in itertools.product(*const_choices):
        for rv in itertools.product(*rel_choices):
            for fv in itertools.product(*fun_choices):
                yield Structure(sizes, {c.name: v for c, v in zip(cs, cv)},
                                {r.name: v for r, v in zip(rs, rv)},
                                {f.name: v for f, v in zip(fs, fv)})
