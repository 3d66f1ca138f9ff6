"""Seeded random generators shared by the property tests."""

from __future__ import annotations

import itertools
import random
from typing import Dict, List, Sequence

from quantinv.logic import (
    And, Apply, Const, ConstantDecl, Eq, Exists, Forall, FunctionDecl, Iff, Implies, Not, Or, Rel,
    RelationDecl, Signature, Structure, Var,
)

SIG = Signature(
    ['S', 'T'],
    [ConstantDecl('a', 'S', True), ConstantDecl('c', 'T')],
    [RelationDecl('r', ('S',), True), RelationDecl('q', ('S', 'T'), True), RelationDecl('p', (), True),
     RelationDecl('le', ('T', 'T'))],
    [FunctionDecl('f', ('S',), 'T', True)],
)


def random_term(rng: random.Random, sig: Signature, sort: str, env: Sequence[Var], depth: int = 1):
    choices = [v for v in env if v.sort == sort]
    choices += [Const(c.name) for c in sig.constants.values() if c.sort == sort]
    funs = [fn for fn in sig.functions.values() if fn.sort == sort]
    if depth > 0 and funs and rng.random() < 0.3:
        fn = rng.choice(funs)
        return Apply(fn.name, tuple(random_term(rng, sig, s, env, depth - 1) for s in fn.arity))
    if not choices:
        fn = rng.choice(funs)
        return Apply(fn.name, tuple(random_term(rng, sig, s, env, 0) for s in fn.arity))
    return rng.choice(choices)


def random_atom(rng: random.Random, sig: Signature, env: Sequence[Var]):
    rels = list(sig.relations.values())
    if rng.random() < 0.25:
        sort = rng.choice(sig.sorts)
        return Eq(random_term(rng, sig, sort, env), random_term(rng, sig, sort, env))
    r = rng.choice(rels)
    return Rel(r.name, tuple(random_term(rng, sig, s, env) for s in r.arity))


def random_formula(rng: random.Random, sig: Signature, depth: int, env: Sequence[Var] = (),
                   counter: List[int] = None):
    """A random well-sorted formula with free variables drawn from ``env``."""
    counter = counter if counter is not None else [0]
    if depth == 0 or rng.random() < 0.2:
        return random_atom(rng, sig, env)
    k = rng.randrange(7)
    sub = lambda e=env: random_formula(rng, sig, depth - 1, e, counter)
    if k == 0:
        return Not(sub())
    if k == 1:
        return And(tuple(sub() for _ in range(rng.randrange(4))))
    if k == 2:
        return Or(tuple(sub() for _ in range(rng.randrange(4))))
    if k == 3:
        return Implies(sub(), sub())
    if k == 4:
        return Iff(sub(), sub())
    vs = []
    for _ in range(rng.randrange(1, 3)):
        counter[0] += 1
        # Reuse names now and then so shadowing and capture get exercised.
        name = rng.choice(['x', 'y']) if rng.random() < 0.3 else f'v{counter[0]}'
        vs.append(Var(name, rng.choice(sig.sorts)))
    names = {v.name for v in vs}
    if len(names) != len(vs):
        vs = vs[:1]
    inner = [v for v in env if v.name not in names] + vs
    body = sub(inner)
    return (Forall if k == 5 else Exists)(tuple(vs), body)


def random_structure(rng: random.Random, sig: Signature, max_size: int = 2,
                     sizes: Dict[str, int] = None) -> Structure:
    sizes = sizes or {s: rng.randint(1, max_size) for s in sig.sorts}
    consts = {c.name: rng.randrange(sizes[c.sort]) for c in sig.constants.values()}
    rels = {}
    for r in sig.relations.values():
        tuples = itertools.product(*(range(sizes[s]) for s in r.arity))
        rels[r.name] = {t for t in tuples if rng.random() < 0.5}
    funs = {}
    for fn in sig.functions.values():
        funs[fn.name] = {t: rng.randrange(sizes[fn.sort])
                         for t in itertools.product(*(range(sizes[s]) for s in fn.arity))}
    return Structure(sizes, consts, rels, funs)
