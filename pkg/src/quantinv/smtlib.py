"""SMT-LIB2 export and an external-solver portfolio.

A query is written out as plain SMT-LIB2 (uninterpreted sorts and
functions only) and handed to one or more solver subprocesses.  The first
definitive answer wins.  For SAT answers the universe is pinned down with a
cardinality bound per sort and the model is read back with ``get-value``
over every ground atom, then re-validated with the evaluator.
"""

from __future__ import annotations

import itertools
import logging
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .logic import (
    And, Const, Eq, Exists, Forall, Formula, Iff, Implies, Not, Or, Rel, Signature,
    Structure, Var, evaluate,
)
from .util import CancelToken

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExternalConfig:
    commands: Tuple[str, ...] = ('z3 -in',)
    restart_timeout: float = 30.0
    portfolio: int = 2
    restarts: int = 1


def quote(name: str) -> str:
    return f'|{name}|'


def term_to_smt(t) -> str:
    if isinstance(t, Var):
        return quote('v_' + t.name)
    if isinstance(t, Const):
        return quote(t.name)
    return '(' + ' '.join([quote(t.func)] + [term_to_smt(a) for a in t.args]) + ')'


def formula_to_smt(f: Formula) -> str:
    if isinstance(f, Rel):
        if not f.args:
            return quote(f.name)
        return '(' + ' '.join([quote(f.name)] + [term_to_smt(a) for a in f.args]) + ')'
    if isinstance(f, Eq):
        return f'(= {term_to_smt(f.left)} {term_to_smt(f.right)})'
    if isinstance(f, Not):
        return f'(not {formula_to_smt(f.body)})'
    if isinstance(f, And):
        return '(and ' + ' '.join(map(formula_to_smt, f.args)) + ' true)'
    if isinstance(f, Or):
        return '(or ' + ' '.join(map(formula_to_smt, f.args)) + ' false)'
    if isinstance(f, Implies):
        return f'(=> {formula_to_smt(f.left)} {formula_to_smt(f.right)})'
    if isinstance(f, Iff):
        return f'(= {formula_to_smt(f.left)} {formula_to_smt(f.right)})'
    if isinstance(f, (Forall, Exists)):
        q = 'forall' if isinstance(f, Forall) else 'exists'
        binds = ' '.join(f'({quote("v_" + v.name)} {quote(v.sort)})' for v in f.vars)
        return f'({q} ({binds}) {formula_to_smt(f.body)})'
    raise TypeError(f'not a formula: {f!r}')


def declarations(sig: Signature) -> List[str]:
    out = [f'(declare-sort {quote(s)} 0)' for s in sig.sorts]
    for c in sig.constants.values():
        out.append(f'(declare-fun {quote(c.name)} () {quote(c.sort)})')
    for r in sig.relations.values():
        args = ' '.join(quote(s) for s in r.arity)
        out.append(f'(declare-fun {quote(r.name)} ({args}) Bool)')
    for fn in sig.functions.values():
        args = ' '.join(quote(s) for s in fn.arity)
        out.append(f'(declare-fun {quote(fn.name)} ({args}) {quote(fn.sort)})')
    return out


def elem_name(sort: str, i: int) -> str:
    return f'e_{sort}_{i}'


def model_script(sig: Signature, assertions: Sequence[Formula], sizes: Dict[str, int]) -> Tuple[str, List[Tuple[str, tuple, str]]]:
    """Script that fixes the universe sizes and asks for every ground fact."""
    lines = ['(set-option :produce-models true)'] + declarations(sig)
    for s in sig.sorts:
        es = [quote(elem_name(s, i)) for i in range(sizes[s])]
        for e in es:
            lines.append(f'(declare-fun {e} () {quote(s)})')
        if len(es) > 1:
            lines.append(f'(assert (distinct {" ".join(es)}))')
        z = quote('v_z')
        eqs = ' '.join(f'(= {z} {e})' for e in es)
        lines.append(f'(assert (forall (({z} {quote(s)})) (or {eqs} false)))')
    for a in assertions:
        lines.append(f'(assert {formula_to_smt(a)})')
    lines.append('(check-sat)')
    asks: List[Tuple[str, tuple, str]] = []
    for c in sig.constants.values():
        for i in range(sizes[c.sort]):
            asks.append((c.name, (i,), f'(= {quote(c.name)} {quote(elem_name(c.sort, i))})'))
    for r in sig.relations.values():
        for args in itertools.product(*(range(sizes[s]) for s in r.arity)):
            app = quote(r.name) if not args else '(' + ' '.join(
                [quote(r.name)] + [quote(elem_name(s, a)) for s, a in zip(r.arity, args)]) + ')'
            asks.append((r.name, args, app))
    for fn in sig.functions.values():
        for args in itertools.product(*(range(sizes[s]) for s in fn.arity)):
            app = '(' + ' '.join([quote(fn.name)] + [quote(elem_name(s, a)) for s, a in zip(fn.arity, args)]) + ')'
            for i in range(sizes[fn.sort]):
                asks.append((fn.name, args + (i,), f'(= {app} {quote(elem_name(fn.sort, i))})'))
    for _, _, expr in asks:
        lines.append(f'(get-value ({expr}))')
    return '\n'.join(lines) + '\n(exit)\n', asks


class ModelParseError(Exception):
    pass


def parse_values(output: str, count: int) -> List[bool]:
    """Read ``count`` Boolean ``get-value`` answers following ``sat``."""
    lines = [l.strip() for l in output.splitlines() if l.strip()]
    if not lines or lines[0] != 'sat':
        raise ModelParseError(f'expected sat, got {lines[:1]}')
    vals = []
    for l in lines[1:]:
        if not (l.startswith('((') and l.endswith('))')):
            raise ModelParseError(f'unexpected line {l!r}')
        body = l[:-2].rstrip()
        if body.endswith('true'):
            vals.append(True)
        elif body.endswith('false'):
            vals.append(False)
        else:
            raise ModelParseError(f'non-Boolean value {l!r}')
    if len(vals) != count:
        raise ModelParseError(f'expected {count} values, got {len(vals)}')
    return vals


def build_structure(sig: Signature, sizes: Dict[str, int], asks, vals: Sequence[bool]) -> Structure:
    consts: Dict[str, int] = {}
    rels: Dict[str, set] = {r: set() for r in sig.relations}
    funcs: Dict[str, dict] = {f: {} for f in sig.functions}
    for (name, args, _), v in zip(asks, vals):
        if not v:
            continue
        if name in sig.constants:
            consts[name] = args[0]
        elif name in sig.relations:
            rels[name].add(args)
        else:
            funcs[name][args[:-1]] = args[-1]
    try:
        return Structure(sizes, consts, rels, funcs)
    except Exception as e:
        raise ModelParseError(str(e)) from e


def _run(cmd: str, script: str, timeout: float, cancel: Optional[CancelToken]) -> Optional[str]:
    """Run one solver process; None on timeout, crash or cancellation."""
    try:
        proc = subprocess.Popen(shlex.split(cmd), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                stderr=subprocess.DEVNULL, text=True)
    except OSError as e:
        logger.warning('cannot start %s: %s', cmd, e)
        return None
    if cancel is not None:
        cancel.on_cancel(proc.kill)
    try:
        out, _ = proc.communicate(script, timeout=timeout)
        return out
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.communicate()
        return None
    except (BrokenPipeError, OSError):
        proc.kill()
        return None
    finally:
        if cancel is not None:
            cancel.remove_callback(proc.kill)


def _portfolio(cmds: Sequence[str], script: str, timeout: float,
               cancel: Optional[CancelToken], accept) -> Optional[str]:
    """Run all commands in parallel; return the first output ``accept`` likes."""
    result: List[str] = []
    done = threading.Event()
    lock = threading.Lock()
    local = CancelToken(cancel)

    def worker(c: str) -> None:
        out = _run(c, script, timeout, local)
        if out is not None and accept(out):
            with lock:
                if not result:
                    result.append(out)
                    local.cancel()
        done.set()

    threads = [threading.Thread(target=worker, args=(c,), daemon=True) for c in cmds]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return result[0] if result else None


def _verdict(out: str) -> Optional[str]:
    first = out.strip().split('\n', 1)[0].strip() if out.strip() else ''
    return first if first in ('sat', 'unsat') else None


def external_check(q, config: Optional[ExternalConfig] = None, cancel: Optional[CancelToken] = None):
    """Decide ``q`` with external solvers; models are rebuilt at the query's bounds."""
    from .oracle import Model, Unknown, Unsat, UnsatAtBound, size_vectors

    config = config or ExternalConfig()
    cmds = [config.commands[i % len(config.commands)] for i in range(max(1, config.portfolio))]
    sig = q.signature
    script = '\n'.join(declarations(sig) + [f'(assert {formula_to_smt(a)})' for a in q.assertions]
                       + ['(check-sat)', '(exit)']) + '\n'
    out = None
    for _ in range(config.restarts + 1):
        out = _portfolio(cmds, script, config.restart_timeout, cancel, lambda o: _verdict(o) is not None)
        if out is not None or cancel is not None and cancel.cancelled:
            break
    if cancel is not None and cancel.cancelled:
        return Unknown('cancelled')
    if out is None:
        return Unknown('external-timeout')
    if _verdict(out) == 'unsat':
        return Unsat(tuple(q.assertions))
    # Satisfiable: look for a model inside the bounds, smallest first.
    for vec in size_vectors(q.universe_bounds):
        sizes = dict(zip((s for s, _ in q.universe_bounds), vec))
        mscript, asks = model_script(sig, q.assertions, sizes)
        mout = _portfolio(cmds, mscript, config.restart_timeout, cancel, lambda o: _verdict(o) is not None)
        if mout is None:
            return Unknown('external-timeout')
        if _verdict(mout) == 'unsat':
            continue
        try:
            m = build_structure(sig, sizes, asks, parse_values(mout, len(asks)))
        except ModelParseError as e:
            logger.warning('bad model from external solver: %s', e)
            return Unknown('model-parse')
        if not all(evaluate(m, a) for a in q.assertions):
            return Unknown('model-parse')
        return Model(m, tuple(q.assertions))
    return UnsatAtBound(q.universe_bounds, tuple(q.assertions))
