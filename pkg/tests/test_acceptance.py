"""Acceptance suite: one test per end-to-end criterion, each printing a PASS/FAIL line."""

from __future__ import annotations

import io
import itertools
import json
import random
import statistics
import time

import pytest

from quantinv.cli import run_cli
from quantinv.corpus import benchmarks, corpus_path
from quantinv.epr import check_epr_system, prefix_allowed
from quantinv.ig import CATEGORIES, PrefixScheduler
from quantinv.logic import (
    EXISTS, FORALL, Eq, Rel, RelationDecl, Signature, Structure, Var, evaluate,
)
from quantinv.oracle import Model, Query, bounded_solve, incremental_solve, verify_trace
from quantinv.pdr import PDRConfig, run, verify_invariant
from quantinv.separation import (
    Implication, Negative, PDNFTemplate, Positive, QPrefix, literal_universe, satisfies, separate,
)
from quantinv.syntax import load_system, parse_formulas, parse_system
from quantinv.util import EventLog

from gen import random_formula

A, E = FORALL, EXISTS


@pytest.fixture
def report(capsys):
    def emit(name, ok, detail=''):
        with capsys.disabled():
            print(f'\n[{"PASS" if ok else "FAIL"}] {name}: {detail}')
        assert ok, f'{name}: {detail}'
    return emit


def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def _bump(bound, extra=2):
    return bound + extra


# ---------------------------------------------------------------------------
# End-to-end solves on 4 threads

@pytest.mark.parametrize('name', ['lockserv', 'toy_consensus_forall', 'ring_id'])
def test_end_to_end_solves(name, report):
    t0 = time.monotonic()
    code, out, err = _cli(name, '--threads', '4', '--timeout', '600')
    wall = time.monotonic() - t0
    stats = json.loads(out.strip().splitlines()[-1])
    ok = code == 0 and stats['status'] == 'invariant' and wall <= 600
    if ok:
        system = load_system(corpus_path(name))
        text = '\n'.join(l for l in out.splitlines() if l.startswith('(invariant'))
        inv = parse_formulas(text, system.signature)
        ok = verify_invariant(system, inv, _bump(3)).ok
    report(f'end-to-end {name}', ok,
           f'exit {code}, {wall:.1f}s, {stats.get("invariant_size")} lemmas, '
           f'{stats.get("ig_queries")} IG queries, verified at bound 5')


# ---------------------------------------------------------------------------
# Alternation capability

def test_alternation_lemma_in_epr_mode(report):
    system = load_system(corpus_path('client_server_ae'))
    allowed = check_epr_system(system)
    log = EventLog()
    res = run(system, PDRConfig(mode='epr', threads=4, allowed_edges=allowed, timeout=600), log)
    alt = [e for e in log.of_kind('lemma-added') if e['origin'] == 'learned' and e['alternations'] > 0]
    ok = res.status == 'invariant' and res.verification.ok and bool(alt)
    report('client_server_ae in EPR mode with an alternation lemma', ok,
           f'status {res.status}, alternation lemmas: {[e["prefix"] for e in alt]}')


# ---------------------------------------------------------------------------
# pDNF expressiveness on the six-atom matrix

N6 = 6
ROWS = range(1 << N6)
FULL6 = (1 << (1 << N6)) - 1


def _target(row):
    a, b, c, d, e, f = ((row >> i) & 1 for i in range(N6))
    return (not a) or (not b) or c or (d and e and not f)


def _cube_masks(n):
    """Truth-table mask of every consistent cube over n variables (3^n of them)."""
    out = []
    for spec in itertools.product((None, 0, 1), repeat=n):
        mask = 0
        for row in range(1 << n):
            if all(v is None or ((row >> i) & 1) == v for i, v in enumerate(spec)):
                mask |= 1 << row
        out.append(mask)
    return out


def _min_cover(target, cubes):
    """Fewest implicant cubes whose union is the target (iterative deepening)."""
    imps = sorted({c for c in cubes if c and c & ~target == 0}, key=lambda c: -bin(c).count('1'))
    primes = [c for c in imps if not any(o != c and o & c == c for o in imps)]

    def search(rem, k):
        if rem == 0:
            return True
        if k == 0:
            return False
        low = rem & -rem
        return any(search(rem & ~c, k - 1) for c in primes if c & low)

    return next(k for k in range(1, len(primes) + 1) if search(target, k))


def test_pdnf_expressiveness(report):
    t0 = time.monotonic()
    target = sum(1 << r for r in ROWS if _target(r))
    cubes = _cube_masks(N6)
    min_dnf = _min_cover(target, cubes)
    min_cnf = _min_cover(FULL6 & ~target, cubes)
    # pDNF: not(cube_1) or cube_2 or ... or cube_k.
    min_pdnf = None
    if any(FULL6 & ~c == target for c in cubes):
        min_pdnf = 1
    else:
        implicants = [c for c in cubes if c & ~target == 0]
        if any(FULL6 & ~c1 | c2 == target for c1 in cubes for c2 in implicants):
            min_pdnf = 2
    # The separator agrees: no single clause, but two pDNF terms suffice.
    names = 'abcdef'
    sig = Signature(['S'], [], [RelationDecl(n, ()) for n in names])
    cs = []
    for r in ROWS:
        m = Structure({'S': 1}, {}, {n: ({()} if (r >> i) & 1 else set()) for i, n in enumerate(names)})
        cs.append(Positive(m) if _target(r) else Negative(m))
    k1 = separate(QPrefix(()), PDNFTemplate(1), cs, sig)
    k2 = separate(QPrefix(()), PDNFTemplate(2), cs, sig)
    k2_ok = k2 is not None and all(satisfies(lambda m: evaluate(m, k2.to_formula()), c) for c in cs)
    wall = time.monotonic() - t0
    ok = (min_cnf, min_dnf, min_pdnf) == (3, 4, 2) and k1 is None and k2_ok and wall < 1.0
    report('pDNF expressiveness', ok,
           f'min CNF {min_cnf}, min DNF {min_dnf}, min pDNF k {min_pdnf}, '
           f'separator k=1 {"UNSEP" if k1 is None else "SEP"}, k=2 {"SEP" if k2 else "UNSEP"}, {wall:.2f}s')


# ---------------------------------------------------------------------------
# Separation against brute-force enumeration

FAMILIES = [
    Signature(['S'], [], [RelationDecl('r', ('S',)), RelationDecl('p', ())]),
    Signature(['S'], [], [RelationDecl('r', ('S',))]),
    Signature(['S', 'T'], [], [RelationDecl('e', ('S', 'T')), RelationDecl('p', ())]),
    Signature(['S'], [], [RelationDecl('p', ()), RelationDecl('q', ()), RelationDecl('u', ())]),
]


def _atoms(sig, prefix):
    vs = [Var(name, sort) for _, sort, name in prefix.quantifiers]
    out = []
    for rel in sig.relations.values():
        for args in itertools.product(*([v for v in vs if v.sort == s] for s in rel.arity)):
            out.append(Rel(rel.name, tuple(args)))
    for i, j in itertools.combinations(range(len(vs)), 2):
        if vs[i].sort == vs[j].sort:
            out.append(Eq(vs[i], vs[j]))
    return out


def _expressible(n, k):
    """Bitset over all 2^(2^n) matrix truth tables that some k-term pDNF realizes."""
    rows = 1 << n
    full = (1 << rows) - 1
    cubes = set(_cube_masks(n))
    # A clause with a complementary pair is true; that needs at least one atom.
    level = {full & ~c for c in (cubes | {0} if n else cubes)}
    # Later cubes can be contradictory or absent, i.e. false.
    cubes.add(0)
    for _ in range(k - 1):
        level = {t | c for t in level for c in cubes}
    bits = 0
    for t in level:
        bits |= 1 << t
    return bits


def _tables_with_row(n):
    """For each row, the bitset of truth tables that are true on it."""
    rows = 1 << n
    out = []
    for row in range(rows):
        bits = 0
        for t in range(1 << rows):
            if (t >> row) & 1:
                bits |= 1 << t
        out.append(bits)
    return out


def _truth_set(m, prefix, atoms, row_sets, all_tables):
    """Bitset of the matrix truth tables under which m satisfies the quantified formula."""
    entries = prefix.quantifiers

    def go(i, env):
        if i == len(entries):
            row = sum(1 << j for j, a in enumerate(atoms) if evaluate(m, a, env))
            return row_sets[row]
        kind, sort, name = entries[i]
        vals = [go(i + 1, dict(env, **{name: e})) for e in range(m.universe[sort])]
        acc = all_tables if kind == FORALL else 0
        for v in vals:
            acc = acc & v if kind == FORALL else acc | v
        return acc

    return go(0, {})


def _random_structure(rng, sig):
    sizes = {s: rng.randint(1, 2) for s in sig.sorts}
    rels = {}
    for r in sig.relations.values():
        tuples = itertools.product(*(range(sizes[s]) for s in r.arity))
        rels[r.name] = {t for t in tuples if rng.random() < 0.5}
    return Structure(sizes, {}, rels)


def test_separation_matches_brute_force(report):
    rng = random.Random(2024)
    t0 = time.monotonic()
    tables = {}
    cases = sep_count = mismatches = bad_separators = 0
    while cases < 10_000:
        sig = rng.choice(FAMILIES)
        depth = rng.randint(0, 2)
        prefix = QPrefix.of([(rng.choice((A, E)), rng.choice(sig.sorts)) for _ in range(depth)], sig)
        atoms = _atoms(sig, prefix)
        if len(atoms) > 3:
            continue
        lits = literal_universe(sig, prefix)
        assert len(lits) == 2 * len(atoms) and set(atoms) <= set(lits)
        k = rng.randint(1, 3)
        n = len(atoms)
        if (n, k) not in tables:
            tables[n, k] = (_expressible(n, k), _tables_with_row(n))
        expressible, row_sets = tables[n, k]
        all_tables = (1 << (1 << (1 << n))) - 1
        cs = []
        for _ in range(rng.randint(1, 5)):
            kind = rng.randrange(3)
            m = _random_structure(rng, sig)
            cs.append(Positive(m) if kind == 0 else Negative(m) if kind == 1
                      else Implication(m, _random_structure(rng, sig)))
        feasible = expressible
        for c in cs:
            if isinstance(c, Positive):
                feasible &= _truth_set(c.structure, prefix, atoms, row_sets, all_tables)
            elif isinstance(c, Negative):
                feasible &= ~_truth_set(c.structure, prefix, atoms, row_sets, all_tables)
            else:
                feasible &= (~_truth_set(c.pre, prefix, atoms, row_sets, all_tables)
                             | _truth_set(c.post, prefix, atoms, row_sets, all_tables))
        res = separate(prefix, PDNFTemplate(k), cs, sig)
        cases += 1
        if (res is not None) != bool(feasible):
            mismatches += 1
        if res is not None:
            sep_count += 1
            f = res.to_formula()
            if not all(satisfies(lambda m: evaluate(m, f), c) for c in cs):
                bad_separators += 1
    wall = time.monotonic() - t0
    ok = mismatches == 0 and bad_separators == 0 and wall < 300
    report('separation vs brute force', ok,
           f'{cases} cases ({sep_count} SEP), {mismatches} verdict mismatches, '
           f'{bad_separators} invalid separators, {wall:.1f}s')


# ---------------------------------------------------------------------------
# Frame audit across full runs

AUDIT_RUNS = [
    ('lockserv', 'fol'),
    ('toy_consensus_forall', 'fol'),
    ('ring_id', 'fol'),
    ('client_server_ae', 'epr'),
    ('lockserv_unsafe', 'fol'),
]


@pytest.mark.parametrize('name,mode', AUDIT_RUNS)
def test_frame_audit(name, mode, report):
    system = load_system(corpus_path(name))
    allowed = check_epr_system(system) if mode == 'epr' else None
    res = run(system, PDRConfig(mode=mode, threads=4, debug_audit=True, allowed_edges=allowed, timeout=600))
    expect = 'unsafe' if name.endswith('unsafe') else 'invariant'
    ok = res.status == expect and res.audit is not None and not res.audit.violations
    detail = f'status {res.status}, {res.audit.checks} oracle checks, {len(res.audit.violations)} violations'
    if ok and expect == 'invariant':
        rep = verify_invariant(system, [p.to_formula() for p in res.invariant], _bump(3))
        ok = rep.ok
        detail += f', invariant checked at bound 5: {"ok" if rep.ok else rep.failures}'
    report(f'frame audit {name}', ok, detail)


def test_all_benchmarks_covered():
    assert {n for n, _ in AUDIT_RUNS} == set(benchmarks())


# ---------------------------------------------------------------------------
# Prefix order

TWO_SORTS = parse_system('(sort S)(sort T)(relation q (S T) mutable)').signature


def _reference_prefixes(pred, n, sorts=('S', 'T'), max_depth=6):
    seen, out = set(), []
    for d in range(1, max_depth + 1):
        for qs in itertools.product(itertools.product((A, E), sorts), repeat=d):
            blocks = [sorted(g, key=lambda q: sorts.index(q[1])) for _, g in itertools.groupby(qs, lambda q: q[0])]
            canon = tuple(q for b in blocks for q in b)
            if canon not in seen and pred(canon):
                seen.add(canon)
                out.append(canon)
    alts = lambda sh: sum(a[0] != b[0] for a, b in zip(sh, sh[1:]))
    out.sort(key=lambda sh: (len(sh), alts(sh), sh[0][0] != A, sum(k == E for k, _ in sh),
                             [(sorts.index(s), k != A) for k, s in sh]))
    return out[:n]


def test_prefix_order(report):
    alts = lambda sh: sum(a[0] != b[0] for a, b in zip(sh, sh[1:]))
    twice = lambda sh: all(sum(q == x for _, q in sh) <= 2 for x in ('S', 'T'))
    preds = [
        lambda sh: all(k == A for k, _ in sh),
        lambda sh: all(k == A for k, _ in sh) and twice(sh),
        lambda sh: alts(sh) <= 1 and twice(sh),
        lambda sh: alts(sh) <= 2 and twice(sh),
        lambda sh: alts(sh) <= 2,
    ]
    diffs = []
    for cat, pred in zip(CATEGORIES, preds):
        got = list(itertools.islice(cat.prefixes(TWO_SORTS, 6), 20))
        want = _reference_prefixes(pred, 20)
        if got != want:
            diffs.append(cat.name)
    report('prefix order', not diffs, f'{len(CATEGORIES)} categories x 20 prefixes, mismatched: {diffs}')


# ---------------------------------------------------------------------------
# EPR filtering

def _emitted(sig, allowed, depth=3):
    sched = PrefixScheduler(sig, CATEGORIES, depth, allowed=allowed)
    out = []
    while (nxt := sched.next_prefix()) is not None:
        out.append(nxt[1])
        sched.finish(nxt[1], 'unsep')
    return out


def test_epr_filtering(report):
    none = _emitted(TWO_SORTS, frozenset())
    bad = [sh for sh in none if any(k == A and E in [q[0] for q in sh[i + 1:]] for i, (k, _) in enumerate(sh))]
    st = _emitted(TWO_SORTS, frozenset({('S', 'T')}))
    has_st = ((A, 'S'), (E, 'T')) in st
    has_tt = ((A, 'T'), (E, 'T')) in st
    leaked = [sh for sh in st if not prefix_allowed(sh, {('S', 'T')})]
    ok = not bad and has_st and not has_tt and not leaked and ((A, 'S'), (E, 'S')) not in none
    report('EPR filtering', ok,
           f'allowed=empty: {len(none)} prefixes, {len(bad)} with forall-then-exists; '
           f'allowed={{S->T}}: forall S exists T emitted={has_st}, forall T exists T emitted={has_tt}')


# ---------------------------------------------------------------------------
# Incremental oracle equivalence

SMALL = parse_system('(sort s)(relation r (s) mutable)(relation e (s s) mutable)(constant a s immutable)').signature


def test_incremental_equivalence(report):
    rng = random.Random(77)
    disagree = invalid = sat = 0
    t0 = time.monotonic()
    for _ in range(1000):
        fs = [random_formula(rng, SMALL, 3) for _ in range(rng.randint(1, 4))]
        split = rng.randint(0, len(fs))
        bound = rng.randint(1, 3)
        a = incremental_solve(fs[split:], fs[:split], bound, SMALL)
        b = bounded_solve(Query(SMALL, fs, bound))
        if isinstance(a, Model) != isinstance(b, Model):
            disagree += 1
        if isinstance(a, Model):
            sat += 1
            if not all(evaluate(a.structure, f) for f in fs):
                invalid += 1
    report('incremental vs bounded oracle', disagree == 0 and invalid == 0,
           f'1000 queries ({sat} SAT), {disagree} disagreements, {invalid} invalid models, '
           f'{time.monotonic() - t0:.1f}s')


# ---------------------------------------------------------------------------
# Parallel vs sequential

def test_parallel_vs_sequential(report):
    system = load_system(corpus_path('client_server_ae'))
    allowed = check_epr_system(system)
    seq, par, statuses = [], [], []
    for seed in range(5):
        for sequential, bucket in ((True, seq), (False, par)):
            cfg = PDRConfig(mode='epr', seed=seed, allowed_edges=allowed, sequential=sequential,
                            threads=1 if sequential else 4, timeout=600)
            res = run(system, cfg)
            statuses.append(res.status)
            bucket.append(res.stats['ig_queries'])
    ms, mp = statistics.median(seq), statistics.median(par)
    ok = all(s == 'invariant' for s in statuses) and mp <= ms
    report('parallel vs sequential IG queries', ok,
           f'sequential {seq} (median {ms}), parallel {par} (median {mp})')


# ---------------------------------------------------------------------------
# Unsafe detection

def test_unsafe_mutant(report):
    code, out, _ = _cli('lockserv_unsafe', '--threads', '4')
    system = load_system(corpus_path('lockserv_unsafe'))
    stats = json.loads(out.strip().splitlines()[-1])
    res = run(system, PDRConfig(threads=4))
    trace_ok = (res.status == 'unsafe' and verify_trace(system, res.trace)
                and not all(evaluate(res.trace[-1], f) for f in system.safeties))
    ok = code == 1 and stats.get('trace_checked') is True and trace_ok
    report('unsafe mutant', ok, f'exit {code}, trace of {stats.get("trace_length")} states, '
                                f'every step validated: {stats.get("trace_checked")}')
