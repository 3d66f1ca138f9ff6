"""A deterministic inference run on the lock server benchmark.

Runs the engine in sequential mode with universal lemmas, then replays the
event log: which obligations were blocked, which lemmas were learned and
when the frames converged.  Finally the invariant is re-checked at a
larger universe bound.
"""

from __future__ import annotations

import collections

from quantinv.corpus import corpus_path
from quantinv.pdr import PDRConfig, run, verify_invariant
from quantinv.syntax import load_system, print_formula
from quantinv.util import EventLog, WorkClock


def main() -> None:
    system = load_system(corpus_path('lockserv'))
    log = EventLog(clock=WorkClock())
    res = run(system, PDRConfig(mode='universal', sequential=True, seed=0), log)
    print(f'status: {res.status}')

    counts = collections.Counter(e['event'] for e in log.events)
    for name in ('obligation', 'ig-start', 'multiblock', 'lemma-added', 'pushed', 'promoted-inf', 'bad'):
        print(f'  {name:13} {counts[name]}')

    print('learned lemmas:')
    for e in log.of_kind('lemma-added'):
        if e['origin'] == 'learned':
            print(f'  [frame {e["frame"]}] {e["formula"]}')

    print(f'invariant ({len(res.invariant)} lemmas):')
    for p in res.invariant:
        print(f'  {print_formula(p.to_formula())}')
    report = verify_invariant(system, [p.to_formula() for p in res.invariant], 5)
    print(f'inductive at bound 5: {report.ok}')


if __name__ == '__main__':
    main()
