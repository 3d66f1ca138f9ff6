from __future__ import annotations

import itertools
import random
import shutil
import threading

import pytest

from quantinv.logic import (
    And, Eq, Exists, Forall, Not, Or, Rel, Structure, Var, all_structures, evaluate,
)
from quantinv.oracle import (
    GrounderPool, Model, Oracle, Query, Unknown, Unsat, UnsatAtBound, bounded_solve, check_initiation,
    check_relative_induction, incremental_solve, is_unsat, size_vectors, verify_trace,
)
from quantinv.smtlib import ExternalConfig, external_check
from quantinv.syntax import parse_system
from quantinv.util import CancelToken

from gen import random_formula

MONOTONE = parse_system(
    '(sort s)(relation r (s) mutable)'
    '(init (forall ((x s)) (not (r x))))'
    "(transition add (exists ((x s)) (and (r' x) (forall ((y s)) (=> (not (= y x)) (= (r' y) (r y)))))))"
    '(safety (and))')
sig = MONOTONE.signature
x, y = Var('x', 's'), Var('y', 's')
r = lambda t: Rel('r', (t,))


def q(*fs, bound=3):
    return Query(sig, fs, bound)


def test_bounded_solve_examples():
    assert isinstance(bounded_solve(q(Exists((x,), And((r(x), Not(r(x))))))), UnsatAtBound)
    res = bounded_solve(q(Exists((x,), r(x)), bound=2))
    assert isinstance(res, Model) and res.structure.relations['r']
    f = Forall((x,), Exists((y,), Not(Eq(y, x))))
    assert bounded_solve(q(f, bound=1)) == UnsatAtBound((('s', 1),))
    res = bounded_solve(q(f, bound=2))
    assert isinstance(res, Model) and res.structure.universe['s'] == 2


def _brute_force_sat(fs, bounds):
    for sizes in itertools.product(*(range(1, b + 1) for _, b in bounds)):
        for m in all_structures(SMALL, dict(zip(SMALL.sorts, sizes))):
            if all(evaluate(m, f) for f in fs):
                return True
    return False


SMALL = parse_system('(sort s)(relation r (s) mutable)(relation e (s s) mutable)(constant a s immutable)').signature


def test_bounded_solve_agrees_with_brute_force():
    rng = random.Random(5)
    bounds = (('s', 2),)
    for _ in range(150):
        fs = [random_formula(rng, SMALL, 3) for _ in range(rng.randint(1, 3))]
        res = bounded_solve(Query(SMALL, fs, 2))
        assert isinstance(res, Model) == _brute_force_sat(fs, bounds)
        if isinstance(res, Model):
            assert all(evaluate(res.structure, f) for f in fs)


def test_smallest_model_first():
    f = Exists((x, y), And((Not(Eq(x, y)), r(x))))
    res = bounded_solve(q(f, bound=3))
    assert res.structure.universe['s'] == 2


def test_size_vector_order():
    vecs = size_vectors((('a', 2), ('b', 3)))
    assert vecs[0] == (1, 1)
    assert vecs == sorted(vecs, key=lambda v: (sum(v), v))
    assert len(vecs) == 6


def test_monotone_in_bound():
    rng = random.Random(9)
    for _ in range(100):
        fs = [random_formula(rng, SMALL, 3)]
        results = [bounded_solve(Query(SMALL, fs, b)) for b in (1, 2, 3)]
        sat = [isinstance(r_, Model) for r_ in results]
        assert sat == sorted(sat)


def test_check_initiation_examples():
    assert check_initiation(And(()), MONOTONE) is None
    cex = check_initiation(Exists((x,), r(x)), MONOTONE)
    assert cex is not None and not cex.relations['r']
    assert check_initiation(Forall((x,), Not(r(x))), MONOTONE) is None


def test_check_relative_induction_examples():
    assert check_relative_induction(And(()), [], MONOTONE) is None
    edge = check_relative_induction(Forall((x,), Not(r(x))), [And(())], MONOTONE, bounds=1)
    assert edge is not None
    assert not edge.pre.relations['r'] and edge.post.relations['r']
    assert check_relative_induction(Exists((x,), r(x)), [Exists((x,), r(x))], MONOTONE) is None


def test_incremental_examples():
    a = Rel('p', ())
    s2 = parse_system('(sort s)(relation p () mutable)(relation b () mutable)').signature
    res = incremental_solve([a, Not(a), Rel('b', ())], [], 1, s2)
    assert is_unsat(res) and len(res.asserted) <= 2
    res = incremental_solve([Or((a, Not(a)))], [a], 1, s2)
    assert isinstance(res, Model) and res.asserted == (a,)


def test_incremental_equivalence_small():
    rng = random.Random(21)
    for _ in range(200):
        fs = [random_formula(rng, SMALL, 3) for _ in range(rng.randint(1, 4))]
        core, opt = fs[:1], fs[1:]
        a = incremental_solve(opt, core, 2, SMALL)
        b = bounded_solve(Query(SMALL, fs, 2))
        assert isinstance(a, Model) == isinstance(b, Model)
        if isinstance(a, Model):
            assert all(evaluate(a.structure, f) for f in fs)


def test_cancellation_returns_unknown():
    tok = CancelToken()
    tok.cancel()
    res = bounded_solve(q(Exists((x,), r(x))), cancel=tok)
    assert res == Unknown('cancelled')


def test_bmc_and_trace():
    o = Oracle(MONOTONE, 2)
    both = Exists((x, y), And((Not(Eq(x, y)), r(x), r(y))))
    assert o.bmc(1, both) is None
    trace = o.bmc(2, both)
    assert trace is not None and len(trace) == 3
    assert verify_trace(MONOTONE, trace) and evaluate(trace[-1], both)


def test_oracle_queries_are_thread_safe():
    o = Oracle(MONOTONE, 3)
    results = []

    def work():
        for _ in range(5):
            results.append(o.initiation(Exists((x,), r(x))) is not None)

    ts = [threading.Thread(target=work) for _ in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert results == [True] * 20


def test_grounder_pool_reuses():
    pool = GrounderPool()
    g = pool.acquire(sig, (('s', 2),))
    pool.release(g)
    assert pool.acquire(sig, (('s', 2),)) is g


needs_z3 = pytest.mark.skipif(shutil.which('z3') is None, reason='z3 binary not installed')


@needs_z3
def test_external_false_is_unsat():
    assert isinstance(external_check(q(Or(())), ExternalConfig(restart_timeout=10)), Unsat)


@needs_z3
def test_external_model_is_validated():
    f = Exists((x, y), And((Not(Eq(x, y)), r(x), Not(r(y)))))
    res = external_check(q(f), ExternalConfig(restart_timeout=10))
    assert isinstance(res, Model) and evaluate(res.structure, f)


def test_external_timeout():
    cfg = ExternalConfig(commands=('sleep 30',), restart_timeout=0.2, portfolio=1, restarts=1)
    assert external_check(q(Exists((x,), r(x))), cfg) == Unknown('external-timeout')


def test_external_bad_model():
    if shutil.which('sh') is None:
        pytest.skip('no shell')
    cfg = ExternalConfig(commands=("sh -c 'cat >/dev/null; echo sat; echo junk'",), restart_timeout=5,
                         portfolio=1)
    assert external_check(q(Exists((x,), r(x))), cfg) == Unknown('model-parse')


def test_external_cancel():
    tok = CancelToken()
    threading.Timer(0.2, tok.cancel).start()
    cfg = ExternalConfig(commands=('sleep 30',), restart_timeout=20, portfolio=1)
    assert external_check(q(Exists((x,), r(x))), cfg, tok) == Unknown('cancelled')


def test_verify_trace_rejects_bad_step():
    s0 = Structure({'s': 2}, {}, {'r': set()})
    s2 = Structure({'s': 2}, {}, {'r': {(0,), (1,)}})
    assert verify_trace(MONOTONE, [s0])
    assert not verify_trace(MONOTONE, [s0, s2])
    assert not verify_trace(MONOTONE, [s2])
