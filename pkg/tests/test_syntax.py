from __future__ import annotations

import random

import pytest

from quantinv.corpus import benchmarks, corpus_path
from quantinv.logic import And, Eq, Forall, Not, Rel, SortError, Var, Const
from quantinv.syntax import (
    ParseError, load_system, parse_formula, parse_formulas, parse_system, print_formula, print_system,
)

from gen import SIG, random_formula

GOOD = ("(sort s)(relation r (s) mutable)(init (forall ((x s)) (not (r x))))"
        "(transition t (exists ((x s)) (and (r' x) (forall ((y s)) (=> (not (= y x)) (= (r' y) (r y)))))))"
        "(safety (or true))")


def test_parse_system_example():
    sys = parse_system(GOOD)
    assert len(sys.transitions) == 1
    assert sys.transitions[0][0] == 't'
    assert sys.signature.is_mutable('r')


def test_undeclared_sort():
    with pytest.raises((ParseError, SortError)):
        parse_system('(relation r (s) mutable)')


def test_primed_symbol_outside_transition():
    with pytest.raises(ParseError):
        parse_system("(sort s)(relation r (s) mutable)(init (forall ((x s)) (r' x)))")


def test_parse_error_has_position():
    with pytest.raises(ParseError) as ei:
        parse_system('(sort s)\n(relation r (s) mutable)\n(init (r x)')
    assert 'line' in str(ei.value)


def test_declaration_order_is_free():
    a = parse_system('(init (forall ((x s)) (r x)))(relation r (s) mutable)(sort s)')
    b = parse_system('(sort s)(relation r (s) mutable)(init (forall ((x s)) (r x)))')
    assert a.inits == b.inits and a.signature.sorts == b.signature.sorts


def test_parse_formula_examples():
    sig = parse_system('(sort s)(sort t)(relation r (s) mutable)(constant x0 s immutable)').signature
    x = Var('x', 's')
    assert parse_formula('(forall ((x s)) (r x))', sig) == Forall((x,), Rel('r', (x,)))
    assert parse_formula('(and)', sig) == And(())
    with pytest.raises(SortError):
        parse_formula('(= x y)', sig, free=[Var('x', 's'), Var('y', 't')])


def test_print_formula_examples():
    x = Var('x', 's')
    assert print_formula(Forall((x,), Rel('r', (x,)))) == '(forall ((x s)) (r x))'
    assert print_formula(And(())) == '(and)'
    assert print_formula(Not(Eq(Const('a'), Const('b')))) == '(not (= a b))'


def test_round_trip_random():
    rng = random.Random(11)
    for _ in range(10_000):
        f = random_formula(rng, SIG, 4)
        assert parse_formula(print_formula(f), SIG) == f


def test_parsing_is_deterministic():
    texts = [GOOD, '(sort s)(relation r (s) mutable)(init (r y))', '(sort s) (sort s)', '((']
    for t in texts:
        outs = []
        for _ in range(3):
            try:
                outs.append(print_system(parse_system(t)))
            except (ParseError, SortError) as e:
                outs.append(f'{type(e).__name__}: {e}')
        assert len(set(outs)) == 1


@pytest.mark.parametrize('name', benchmarks())
def test_corpus_round_trip(name):
    sys = load_system(corpus_path(name))
    again = parse_system(print_system(sys), sys.name)
    assert again.inits == sys.inits
    assert again.transitions == sys.transitions
    assert again.safeties == sys.safeties
    assert again.axioms == sys.axioms
    assert again.epr_edges == sys.epr_edges
    inv = corpus_path(name, '.inv')
    if inv:
        with open(inv) as fh:
            assert parse_formulas(fh.read(), sys.signature)


def test_comments_and_iff():
    sys = parse_system('; comment\n(sort s)(relation r (s) mutable)(relation q (s) mutable)\n'
                       '(init (forall ((x s)) (= (r x) (q x)))) ; trailing')
    f = sys.inits[0]
    assert print_formula(f) == '(forall ((x s)) (= (r x) (q x)))'
    assert parse_formula(print_formula(f), sys.signature) == f
