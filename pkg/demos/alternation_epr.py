"""Learning a forall-exists lemma in the EPR fragment.

The client/server benchmark needs a lemma saying every sent response has a
matching request.  In EPR mode only prefixes whose Skolem functions follow
the declared sort edges are searched; here response -> request is allowed,
so forall node, response. exists request is in bounds.
"""

from __future__ import annotations

from quantinv.corpus import corpus_path
from quantinv.epr import check_epr_system
from quantinv.pdr import PDRConfig, run
from quantinv.syntax import load_system, print_formula
from quantinv.util import EventLog, WorkClock


def main() -> None:
    system = load_system(corpus_path('client_server_ae'))
    allowed = check_epr_system(system)
    print('allowed sort edges:', ', '.join(f'{a} -> {b}' for a, b in sorted(allowed)))
    log = EventLog(clock=WorkClock())
    res = run(system, PDRConfig(mode='epr', sequential=True, allowed_edges=allowed), log)
    print(f'status: {res.status}, IG queries: {res.stats["ig_queries"]}')
    for e in log.of_kind('lemma-added'):
        if e['origin'] == 'learned':
            tag = 'alternating' if e['alternations'] else 'no alternation'
            print(f'  learned ({tag}): {e["formula"]}')
    print('invariant:')
    for p in res.invariant:
        print(f'  {print_formula(p.to_formula())}')


if __name__ == '__main__':
    main()
