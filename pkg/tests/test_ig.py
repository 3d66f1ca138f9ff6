from __future__ import annotations

import random
import threading
import time

from quantinv.ig import (
    CATEGORIES, ConstraintStore, IGConfig, InductiveGeneralizer, PrefixScheduler, alternations,
    categories_for_mode, order_key, related_constraints, shapes_of_depth, sub_prefixes,
)
from quantinv.corpus import corpus_path
from quantinv.logic import EXISTS, FORALL, And, Structure, evaluate
from quantinv.oracle import Oracle
from quantinv.separation import Negative, PDNFTemplate, Positive, QPrefix, satisfies, separate
from quantinv.syntax import load_system, parse_system
from quantinv.util import CancelToken, EventLog, WorkClock

A, E = FORALL, EXISTS

MONOTONE = parse_system(
    '(sort s)(relation r (s) mutable)'
    '(init (forall ((x s)) (not (r x))))'
    "(transition add (exists ((x s)) (and (r' x) (forall ((y s)) (=> (not (= y x)) (= (r' y) (r y)))))))"
    '(safety (and))')
TWO = parse_system('(sort S)(sort T)(relation q (S T) mutable)').signature
ONE = parse_system('(sort S)(relation q (S) mutable)').signature


def test_sub_prefixes_examples():
    assert sub_prefixes(((A, 'S'), (E, 'T'), (A, 'S')), TWO) == {
        ((E, 'T'), (A, 'S')), ((A, 'S'), (A, 'S')), ((A, 'S'), (E, 'T'))}
    assert sub_prefixes(((A, 'S'), (A, 'S')), TWO) == {((A, 'S'),)}
    assert sub_prefixes(((E, 'T'),), TWO) == {()}


def _neg(n):
    return Negative(Structure({'S': n, 'T': 1}, {}, {'q': set()}))


def test_related_constraints_examples():
    assert related_constraints(((A, 'S'), (A, 'S')), {}, TWO) == []
    c = _neg(1)
    got = related_constraints(((A, 'S'), (A, 'S')), {((A, 'S'),): [c]}, TWO)
    assert c in got
    # Two steps: constraints from depth 1 reach depth 3 once depth 2 has picked them up.
    c2 = _neg(2)
    store = {((A, 'S'),): [c2]}
    store[((A, 'S'), (A, 'S'))] = related_constraints(((A, 'S'), (A, 'S')), store, TWO)
    assert c2 in related_constraints(((A, 'S'), (A, 'S'), (A, 'S')), store, TWO)


def test_related_constraints_deduplicates():
    c = _neg(1)
    cur = {((A, 'S'),): [c], ((E, 'T'),): [c]}
    assert related_constraints(((A, 'S'), (E, 'T')), cur, TWO) == [c]


def test_first_prefix_and_depth_two_order():
    sched = PrefixScheduler(ONE, [CATEGORIES[0]], 2)
    assert sched.next_prefix() == (0, ((A, 'S'),))
    d2 = [sh for sh in shapes_of_depth(ONE, 2)]
    assert d2 == [((A, 'S'), (A, 'S')), ((E, 'S'), (E, 'S')), ((A, 'S'), (E, 'S')), ((E, 'S'), (A, 'S'))]


def test_epr_skipping():
    sched = PrefixScheduler(ONE, CATEGORIES, 3, allowed=frozenset())
    seen = []
    while True:
        nxt = sched.next_prefix()
        if nxt is None:
            break
        seen.append(nxt[1])
        sched.finish(nxt[1], 'unsep')
    assert ((A, 'S'), (E, 'S')) not in seen
    for sh in seen:
        ks = [k for k, _ in sh]
        assert not any(ks[i] == A and E in ks[i + 1:] for i in range(len(ks)))


def test_universal_mode_categories():
    cats = categories_for_mode('universal')
    assert len(cats) == 2
    assert all(alternations(sh) == 0 for c in cats for sh in c.prefixes(TWO, 3))


class _Clock:
    deterministic = True

    def __init__(self):
        self.t = 0.0

    def now(self):
        return self.t

    def tick(self, n=1):
        self.t += n


def test_breadth_first_fairness():
    clock = _Clock()
    rng = random.Random(0)
    sched = PrefixScheduler(TWO, CATEGORIES, 6, clock=clock)
    for step in range(300):
        nxt = sched.next_prefix()
        assert nxt is not None
        clock.tick(rng.uniform(1.0, 2.0))
        sched.finish(nxt[1], 'unsep')
        live = [t for t, ex in zip(sched.accumulated, sched.exhausted) if not ex]
        if step >= 2 * len(CATEGORIES):
            assert max(live) / min(live) <= 3.0


def _check_lemma(system, p, states, frame):
    f = p.to_formula()
    o = Oracle(system, 3)
    assert all(not evaluate(s, f) for s in states)
    assert o.initiation(f) is None
    assert o.relative_induction(f, frame) is None


def test_ig_query_monotone_system():
    o = Oracle(MONOTONE, 3)
    ig = InductiveGeneralizer(o, IGConfig(mode='universal', max_depth=3))
    s = Structure({'s': 2}, {}, {'r': {(0,), (1,)}})
    frame = list(MONOTONE.inits)
    res = ig.query([s], 1, frame)
    assert res.status == 'solved'
    _check_lemma(MONOTONE, res.lemma, [s], frame)
    f = res.lemma.to_formula()
    for c in res.constraints:
        assert satisfies(lambda m: evaluate(m, f), c)


def test_ig_query_initial_state_exhausts():
    o = Oracle(MONOTONE, 2)
    ig = InductiveGeneralizer(o, IGConfig(mode='fol', max_depth=2))
    s = Structure({'s': 1}, {}, {'r': set()})
    assert ig.query([s], 1, list(MONOTONE.inits)).status == 'exhausted'


def test_ig_query_deterministic_single_worker():
    s = Structure({'s': 2}, {}, {'r': {(0,), (1,)}})
    out = []
    for _ in range(2):
        clock = WorkClock()
        o = Oracle(MONOTONE, 3, clock=clock)
        ig = InductiveGeneralizer(o, IGConfig(mode='fol', max_depth=2, rotation=True), EventLog(clock=clock), clock)
        out.append(ig.query([s], 1, list(MONOTONE.inits)).lemma)
    assert out[0] == out[1] and out[0] is not None


def test_ig_query_parallel_workers():
    o = Oracle(MONOTONE, 3)
    ig = InductiveGeneralizer(o, IGConfig(mode='fol', workers=3, max_depth=2))
    s = Structure({'s': 2}, {}, {'r': {(0,), (1,)}})
    res = ig.query([s], 1, list(MONOTONE.inits))
    assert res.status == 'solved'
    _check_lemma(MONOTONE, res.lemma, [s], list(MONOTONE.inits))


def test_ig_query_cancel():
    # An initial state can never be excluded, so only cancellation ends the query.
    system = load_system(corpus_path('ring_id'))
    o = Oracle(system, 3)
    ig = InductiveGeneralizer(o, IGConfig(mode='fol', max_depth=6))
    s = o.bmc(0, And(()))[0]
    tok = CancelToken()
    threading.Timer(0.5, tok.cancel).start()
    t0 = time.monotonic()
    res = ig.query([s], 1, [], tok)
    assert res.status == 'cancelled'
    assert time.monotonic() - t0 < 10


def test_unsep_is_monotone_random():
    rng = random.Random(2)
    sig = ONE
    for _ in range(100):
        p = QPrefix.of([(rng.choice((A, E)), 'S') for _ in range(rng.randint(1, 2))], sig)
        ms = [Structure({'S': n}, {}, {'q': {(i,) for i in range(n) if rng.random() < .5}})
              for n in (rng.randint(1, 2) for _ in range(4))]
        cs = [rng.choice((Positive, Negative))(m) for m in ms]
        if separate(p, PDNFTemplate(1), cs[:3], sig) is None:
            assert separate(p, PDNFTemplate(1), cs, sig) is None


def test_constraint_store_positives_and_dedup():
    st = ConstraintStore()
    m = Structure({'S': 1}, {}, {'q': set()})
    assert st.add_positive(m) and not st.add_positive(m)
    st.add(((A, 'S'),), Negative(m))
    st.add(((A, 'S'),), Negative(m))
    assert st.get(((A, 'S'),)) == [Negative(m)]


def test_order_key_ties_use_declaration_order():
    assert order_key(((A, 'S'),), TWO) < order_key(((A, 'T'),), TWO)
