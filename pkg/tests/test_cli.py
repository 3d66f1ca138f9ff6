from __future__ import annotations

import io
import json
import subprocess
import sys

import pytest

from quantinv.cli import EXIT_INPUT, EXIT_INVARIANT, EXIT_UNKNOWN, EXIT_UNSAFE, InputError, parse_bound, run_cli
from quantinv.corpus import benchmarks, corpus_path


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def _stats(text):
    return json.loads(text.strip().splitlines()[-1])


def test_parse_bound():
    assert parse_bound('4', ['a', 'b']) == 4
    assert parse_bound('a=2', ['a', 'b']) == {'a': 2, 'b': 3}
    for bad in ('0', 'x', 'c=2', 'a=0'):
        with pytest.raises(InputError):
            parse_bound(bad, ['a', 'b'])


def test_bundled_benchmarks():
    assert {'lockserv', 'lockserv_unsafe', 'toy_consensus_forall', 'ring_id', 'client_server_ae'} <= set(benchmarks())
    assert corpus_path('nope') is None


def test_universal_toy_consensus():
    code, out, _ = _run('toy_consensus_forall', '--mode', 'universal', '--sequential')
    assert code == EXIT_INVARIANT
    assert out.startswith('(invariant ')
    stats = _stats(out)
    assert stats['status'] == 'invariant' and stats['ig_queries'] >= 1


def test_epr_mode_requires_edges():
    code, _, err = _run('toy_consensus_forall', '--mode', 'epr')
    assert code == EXIT_INPUT and 'epr' in err


def test_verify_only():
    code, out, _ = _run('lockserv', '--verify-only', corpus_path('lockserv', '.inv'))
    assert code == EXIT_INVARIANT and _stats(out)['status'] == 'verified'


def test_verify_only_rejects_non_invariant(tmp_path):
    inv = tmp_path / 'weak.inv'
    inv.write_text('(forall ((N1 node) (N2 node)) (=> (and (holds_lock N1) (holds_lock N2)) (= N1 N2)))\n')
    code, out, _ = _run('lockserv', '--verify-only', str(inv))
    assert code == EXIT_UNKNOWN and _stats(out)['status'] == 'not-inductive'


@pytest.mark.parametrize('argv', [
    ['--sequential', '--threads', '4'],
    ['--threads', '0'],
    ['--mode', 'universal', '--k', '2'],
    ['--k', '0'],
    ['--seed', '-1'],
    ['--seed', str(2 ** 64)],
    ['--max-depth', '0'],
    ['--timeout', '0'],
    ['--bound', 'zero'],
    ['--mode', 'nonsense'],
])
def test_bad_flags(argv):
    assert _run('lockserv', *argv)[0] == EXIT_INPUT


def test_missing_and_malformed_files(tmp_path):
    assert _run(str(tmp_path / 'missing.fol'))[0] == EXIT_INPUT
    bad = tmp_path / 'bad.fol'
    bad.write_text('(sort s)(relation r (t) mutable)\n')
    code, _, err = _run(str(bad))
    assert code == EXIT_INPUT and 'line' in err


def test_unsafe_exit_code():
    code, out, _ = _run('lockserv_unsafe', '--mode', 'universal', '--sequential')
    assert code == EXIT_UNSAFE
    stats = _stats(out)
    assert stats['status'] == 'unsafe' and stats['trace_checked']
    assert '; state 0:' in out


def test_sequential_log_is_deterministic(tmp_path):
    logs = []
    for i in range(2):
        path = tmp_path / f'run{i}.jsonl'
        code, out, _ = _run('toy_consensus_forall', '--mode', 'universal', '--sequential', '--seed', '5',
                            '--log', str(path))
        assert code == EXIT_INVARIANT
        logs.append((path.read_text(), [l for l in out.splitlines() if l.startswith('(invariant')]))
    assert logs[0] == logs[1]
    events = [json.loads(l) for l in logs[0][0].splitlines()]
    assert events[0]['event'] == 'start'
    assert all(e['t'] == e['seq'] for e in events)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, '-m', 'quantinv', '--help'], capture_output=True, text=True)
    assert proc.returncode == 0 and '--mode' in proc.stdout
