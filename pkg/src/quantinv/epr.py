"""Skolem edges of quantifier prefixes and EPR well-formedness checks.

An existential quantifier that follows universals becomes, after
Skolemization, a function from the universals' sorts to its own sort.  A
formula set stays in the decidable EPR fragment when the graph of all such
sort edges has no cycle.
"""

from __future__ import annotations

from typing import FrozenSet, Iterable, List, Set, Tuple

from .logic import And, FORALL, Exists, Forall, Formula, Iff, Implies, Not, Or, Signature

Edge = Tuple[str, str]


def skolem_edges(prefix: Iterable[Tuple[str, str]]) -> FrozenSet[Edge]:
    """Edges ``(S, T)`` for every ``exists T`` preceded by some ``forall S``.

    ``prefix`` is a sequence of (kind, sort) pairs; a :class:`QPrefix` shape
    or a list of PrenexFormula ``(kind, Var)`` items both work via
    :func:`prefix_shape`.
    """
    edges: Set[Edge] = set()
    universals: List[str] = []
    for kind, sort in prefix_shape(prefix):
        if kind == FORALL:
            universals.append(sort)
        else:
            edges.update((u, sort) for u in universals)
    return frozenset(edges)


def prefix_shape(prefix) -> Tuple[Tuple[str, str], ...]:
    if hasattr(prefix, 'shape'):
        return prefix.shape
    out = []
    for item in prefix:
        kind, x = item[0], item[1]
        out.append((kind, x if isinstance(x, str) else x.sort))
    return tuple(out)


def prefix_allowed(prefix, allowed: Iterable[Edge]) -> bool:
    return skolem_edges(prefix) <= frozenset(allowed)


def signature_edges(sig: Signature) -> FrozenSet[Edge]:
    """Edges contributed by function symbols (argument sort to result sort)."""
    return frozenset((a, f.sort) for f in sig.functions.values() for a in f.arity)


def find_cycle(edges: Iterable[Edge]) -> List[str]:
    """A cycle as a list of sorts (first == last), or ``[]`` if acyclic."""
    succ: dict = {}
    for a, b in sorted(set(edges)):
        succ.setdefault(a, []).append(b)
        succ.setdefault(b, [])
    color = {v: 0 for v in succ}
    stack: List[str] = []

    def dfs(v: str) -> List[str]:
        color[v] = 1
        stack.append(v)
        for w in succ[v]:
            if color[w] == 1:
                return stack[stack.index(w):] + [w]
            if color[w] == 0:
                c = dfs(w)
                if c:
                    return c
        stack.pop()
        color[v] = 2
        return []

    for v in sorted(succ):
        if color[v] == 0:
            c = dfs(v)
            if c:
                return c
    return []


def formula_edges(f: Formula, positive: bool = True) -> FrozenSet[Edge]:
    """Skolem edges of ``f`` asserted with the given polarity.

    Works on arbitrary nesting: an existential in positive position (or a
    universal in negative position) gets edges from every enclosing
    universal.  Iff sides are counted in both polarities.
    """
    edges: Set[Edge] = set()

    def go(g: Formula, pos: bool, univ: Tuple[str, ...]) -> None:
        if isinstance(g, Not):
            go(g.body, not pos, univ)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                go(a, pos, univ)
        elif isinstance(g, Implies):
            go(g.left, not pos, univ)
            go(g.right, pos, univ)
        elif isinstance(g, Iff):
            for side in (g.left, g.right):
                go(side, pos, univ)
                go(side, not pos, univ)
        elif isinstance(g, (Forall, Exists)):
            universal = isinstance(g, Forall) == pos
            sorts = tuple(v.sort for v in g.vars)
            if universal:
                go(g.body, pos, univ + sorts)
            else:
                edges.update((u, s) for u in univ for s in sorts)
                go(g.body, pos, univ)

    go(f, positive, ())
    return frozenset(edges)


class EprError(Exception):
    pass


def check_epr_system(system) -> FrozenSet[Edge]:
    """Validate a system for EPR mode and return the edges lemmas may use.

    The returned set is the declared edges plus function edges.  That union
    must be acyclic, and every Skolem edge needed by the system's own
    formulas must be in it.
    """
    allowed = frozenset(system.epr_edges)
    fun = signature_edges(system.signature)
    cyc = find_cycle(allowed | fun)
    if cyc:
        raise EprError('EPR edges are cyclic: ' + ' -> '.join(cyc))
    needed: Set[Edge] = set()
    for f in system.axioms:
        needed |= formula_edges(f, True)
    for _, t in system.transitions:
        needed |= formula_edges(t, True)
    for f in list(system.inits) + list(system.safeties):
        # Init and safety conjuncts become lemmas, which are both assumed
        # and negated in pushing queries.
        needed |= formula_edges(f, True) | formula_edges(f, False)
    missing = sorted(needed - allowed - fun)
    if missing:
        hint = '' if system.epr_edges else ' (the file has no epr-edge declarations)'
        raise EprError('system formulas need undeclared EPR edges: '
                       + ', '.join(f'{a}->{b}' for a, b in missing) + hint)
    return allowed | fun
