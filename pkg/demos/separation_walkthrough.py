"""Separation on a propositional example.

The matrix  not a or not b or c or (d and e and not f)  needs three CNF
clauses or four DNF terms, but only two pDNF terms: one clause plus one cube.
This script labels all 64 valuations and asks the separator for a formula
with one and then two terms.
"""

from __future__ import annotations

import itertools

from quantinv.logic import RelationDecl, Signature, Structure
from quantinv.separation import Negative, PDNFTemplate, Positive, QPrefix, separate
from quantinv.syntax import print_formula

NAMES = 'abcdef'


def target(v):
    a, b, c, d, e, f = v
    return (not a) or (not b) or c or (d and e and not f)


def main() -> None:
    sig = Signature(['S'], [], [RelationDecl(n, ()) for n in NAMES])
    constraints = []
    for v in itertools.product((False, True), repeat=len(NAMES)):
        m = Structure({'S': 1}, {}, {n: {()} if x else set() for n, x in zip(NAMES, v)})
        constraints.append(Positive(m) if target(v) else Negative(m))
    print(f'{len(constraints)} labelled valuations, '
          f'{sum(isinstance(c, Positive) for c in constraints)} positive')
    for k in (1, 2):
        sep = separate(QPrefix(()), PDNFTemplate(k), constraints, sig)
        shown = print_formula(sep.to_formula()) if sep is not None else 'no separator'
        print(f'k = {k}: {shown}')


if __name__ == '__main__':
    main()
