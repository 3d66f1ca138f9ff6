"""Command-line front end.

Exit codes: 0 invariant found and verified, 1 unsafe (with a checked
trace), 2 timeout or unknown, 3 bad input or conflicting flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, TextIO, Union

from .corpus import corpus_path
from .epr import EprError, check_epr_system
from .logic import LogicError, Structure, evaluate
from .oracle import OracleUnknown, verify_trace
from .pdr import PDRConfig, PDRResult, run, verify_invariant
from .smtlib import ExternalConfig
from .syntax import ParseError, TransitionSystem, load_system, parse_formulas, print_formula
from .util import EventLog, WallClock, WorkClock

EXIT_INVARIANT = 0
EXIT_UNSAFE = 1
EXIT_UNKNOWN = 2
EXIT_INPUT = 3


class InputError(Exception):
    pass


def parse_bound(text: str, sorts: Sequence[str]) -> Union[int, Dict[str, int]]:
    """``3`` for every sort, or ``node=3,id=4`` (unlisted sorts get 3)."""
    try:
        if '=' not in text:
            n = int(text)
            if n < 1:
                raise ValueError
            return n
        out = {s: 3 for s in sorts}
        for part in text.split(','):
            name, _, val = part.partition('=')
            name = name.strip()
            if name not in out:
                raise InputError(f'--bound names unknown sort {name!r}')
            out[name] = int(val)
            if out[name] < 1:
                raise ValueError
        return out
    except ValueError:
        raise InputError(f'bad --bound value {text!r}') from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog='quantinv',
        description='Infer a quantified inductive invariant for a .fol transition system.')
    p.add_argument('file', help='.fol system file, or the name of a bundled benchmark')
    p.add_argument('--mode', choices=('universal', 'epr', 'fol'), default='fol',
                   help='lemma language: universal clauses, EPR-safe prefixes, or any prefix')
    p.add_argument('--threads', type=int, default=None, help='worker threads (default: CPU count)')
    p.add_argument('--seed', type=int, default=0, help='seed for lemma selection (unsigned 64-bit)')
    p.add_argument('--bound', default='3', help='universe bound: N, or SORT=N,... (default 3)')
    p.add_argument('--max-depth', type=int, default=6, help='maximum quantifier depth (default 6)')
    p.add_argument('--timeout', type=float, default=600.0, help='wall-clock budget in seconds')
    p.add_argument('--k', type=int, default=None, help='number of pDNF terms for non-universal prefixes')
    p.add_argument('--log', metavar='FILE', help='write JSON-lines events to FILE')
    p.add_argument('--verify-only', metavar='FORMULA-FILE',
                   help='only check that the formulas in FILE form an inductive invariant')
    p.add_argument('--sequential', action='store_true', help='deterministic single-threaded search')
    p.add_argument('--external-solver', metavar='CMD',
                   help='SMT-LIB2 solver command reading a script on stdin, e.g. "z3 -in"')
    p.add_argument('--debug-audit', action='store_true',
                   help='re-check frame conditions with the oracle after every change')
    p.add_argument('-v', '--verbose', action='store_true')
    return p


def _check_flags(args: argparse.Namespace) -> None:
    if args.sequential and args.threads not in (None, 1):
        raise InputError('--sequential runs a single thread; drop --threads or set it to 1')
    if args.threads is not None and args.threads < 1:
        raise InputError('--threads must be positive')
    if args.k is not None:
        if args.k < 1:
            raise InputError('--k must be positive')
        if args.mode == 'universal' and args.k != 1:
            raise InputError('universal mode only uses single clauses (k = 1)')
    if not 0 <= args.seed < 2 ** 64:
        raise InputError('--seed must fit in an unsigned 64-bit integer')
    if args.max_depth < 1:
        raise InputError('--max-depth must be at least 1')
    if args.timeout is not None and args.timeout <= 0:
        raise InputError('--timeout must be positive')


def _load(path: str) -> TransitionSystem:
    if not os.path.exists(path):
        bundled = corpus_path(path)
        if bundled is None:
            raise InputError(f'no such file: {path}')
        path = bundled
    try:
        return load_system(path)
    except (ParseError, LogicError) as e:
        raise InputError(f'{path}: {e}') from None
    except OSError as e:
        raise InputError(str(e)) from None


def format_structure(m: Structure) -> str:
    return repr(m)


def _print_stats(out: TextIO, status: str, stats: Dict[str, object]) -> None:
    rec = {'status': status}
    rec.update(stats)
    out.write(json.dumps(rec, sort_keys=True) + '\n')


def _verify_only(system: TransitionSystem, path: str, bound, out: TextIO) -> int:
    try:
        with open(path) as fh:
            formulas = parse_formulas(fh.read(), system.signature)
    except OSError as e:
        raise InputError(str(e)) from None
    except (ParseError, LogicError) as e:
        raise InputError(f'{path}: {e}') from None
    try:
        report = verify_invariant(system, formulas, bound)
    except OracleUnknown as e:
        out.write(f'; verification undecided: {e.reason}\n')
        return EXIT_UNKNOWN
    for msg in report.failures:
        out.write(f'; {msg}\n')
    _print_stats(out, 'verified' if report.ok else 'not-inductive',
                 {'formulas': len(formulas), 'initiation': report.initiation,
                  'consecution': report.consecution, 'safety': report.safety})
    return EXIT_INVARIANT if report.ok else EXIT_UNKNOWN


def _report(system: TransitionSystem, res: PDRResult, out: TextIO) -> int:
    if res.status == 'invariant':
        for p in res.invariant:
            out.write(f'(invariant {print_formula(p.to_formula())})\n')
        _print_stats(out, 'invariant', res.stats)
        return EXIT_INVARIANT
    if res.status == 'unsafe':
        ok = verify_trace(system, res.trace) and not all(
            evaluate(res.trace[-1], f) for f in system.safeties)
        out.write(f'; unsafe: trace of {len(res.trace)} states\n')
        for i, s in enumerate(res.trace):
            out.write(f'; state {i}: {format_structure(s)}\n')
        _print_stats(out, 'unsafe', dict(res.stats, trace_length=len(res.trace), trace_checked=ok))
        return EXIT_UNSAFE if ok else EXIT_UNKNOWN
    if res.reason:
        out.write(f'; {res.reason}\n')
    _print_stats(out, 'unknown', res.stats)
    return EXIT_UNKNOWN


def run_cli(argv: Optional[List[str]] = None, out: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_INVARIANT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        _check_flags(args)
        system = _load(args.file)
        bound = parse_bound(args.bound, system.signature.sorts)
        if args.verify_only:
            return _verify_only(system, args.verify_only, bound, out)
        allowed = None
        if args.mode == 'epr':
            try:
                allowed = check_epr_system(system)
            except EprError as e:
                raise InputError(f'--mode epr: {e}') from None
    except InputError as e:
        err.write(f'quantinv: error: {e}\n')
        return EXIT_INPUT

    threads = 1 if args.sequential else (args.threads or os.cpu_count() or 2)
    config = PDRConfig(
        mode=args.mode, threads=threads, seed=args.seed, bound=bound, max_depth=args.max_depth,
        timeout=args.timeout, k=args.k, sequential=args.sequential, debug_audit=args.debug_audit,
        allowed_edges=allowed,
        external=ExternalConfig(commands=(args.external_solver,)) if args.external_solver else None)
    sink = None
    try:
        if args.log:
            try:
                sink = open(args.log, 'w')
            except OSError as e:
                err.write(f'quantinv: error: {e}\n')
                return EXIT_INPUT
        log = EventLog(sink, WorkClock() if args.sequential else WallClock())
        log.keep = False
        res = run(system, config, log)
    finally:
        if sink is not None:
            sink.close()
    return _report(system, res, out)


def main() -> None:
    sys.exit(run_cli())
