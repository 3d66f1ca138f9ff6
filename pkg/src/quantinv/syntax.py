"""S-expression surface syntax for transition systems and formulas.

    (sort node)
    (constant leader node mutable)
    (relation voted (node) mutable)
    (function id (node) ident immutable)
    (axiom F) (init F) (transition NAME F) (safety F) (epr-edge node ident)

Formulas: ``(forall ((x s) ...) F)``, ``(exists ...)``, ``(and F*)``,
``(or F*)``, ``(not F)``, ``(=> F F)``, ``(= T T)``, ``(= F F)`` (iff),
``(REL T*)``, bare nullary relations, ``true``/``false``.  Inside a
transition, ``r'`` names the post-state copy of a mutable symbol.
Comments run from ``;`` to the end of the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Mapping, Sequence, Tuple, Union

from .logic import (
    FALSE, TRUE, And, Apply, Const, ConstantDecl, Eq, Exists, Forall, Formula, FunctionDecl, Iff,
    Implies, Not, Or, Rel, RelationDecl, Signature, SortError, Term, Var, disj, is_primed,
    sort_check, unprimed,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0) -> None:
        super().__init__(f'line {line}, column {col}: {message}' if line else message)
        self.line = line
        self.col = col


class Sym(str):
    line = 0
    col = 0


class SList(list):
    line = 0
    col = 0


SExpr = Union[Sym, SList]


def _at(obj, line: int, col: int):
    obj.line, obj.col = line, col
    return obj


def read_sexprs(text: str) -> List[SExpr]:
    """Tokenize and read every top-level s-expression in ``text``."""
    stack: List[SList] = [SList()]
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == '\n':
            line, col = line + 1, 1
            i += 1
            continue
        if ch in ' \t\r':
            i += 1
            col += 1
            continue
        if ch == ';':
            while i < n and text[i] != '\n':
                i += 1
            continue
        if ch == '(':
            stack.append(_at(SList(), line, col))
            i += 1
            col += 1
            continue
        if ch == ')':
            if len(stack) == 1:
                raise ParseError('unbalanced )', line, col)
            done = stack.pop()
            stack[-1].append(done)
            i += 1
            col += 1
            continue
        j = i
        while j < n and text[j] not in ' \t\r\n();':
            j += 1
        stack[-1].append(_at(Sym(text[i:j]), line, col))
        col += j - i
        i = j
    if len(stack) != 1:
        open_ = stack[-1]
        raise ParseError('unclosed (', open_.line, open_.col)
    return stack[0]


def _err(msg: str, node: object) -> ParseError:
    return ParseError(msg, getattr(node, 'line', 0), getattr(node, 'col', 0))


# ---------------------------------------------------------------------------
# Transition systems

@dataclass(frozen=True)
class TransitionSystem:
    signature: Signature
    axioms: Tuple[Formula, ...] = ()
    inits: Tuple[Formula, ...] = ()
    transitions: Tuple[Tuple[str, Formula], ...] = ()
    safeties: Tuple[Formula, ...] = ()
    epr_edges: Tuple[Tuple[str, str], ...] = ()
    name: str = ''
    comments: Tuple[str, ...] = field(default=(), compare=False)

    @cached_property
    def doubled(self) -> Signature:
        return self.signature.doubled()

    @cached_property
    def transition_relation(self) -> Formula:
        """Disjunction of all transitions (``FALSE`` when there are none)."""
        if not self.transitions:
            return FALSE
        return disj(f for _, f in self.transitions)


class _FormulaParser:
    def __init__(self, sig: Signature, allow_primed: bool, what: str) -> None:
        self.sig = sig
        self.allow_primed = allow_primed
        self.what = what

    def _check_name(self, name: Sym) -> None:
        if is_primed(name):
            if not self.allow_primed:
                raise _err(f'primed symbol {name} outside a transition ({self.what})', name)
            base = self.sig.symbol(unprimed(name))
            if base is not None and not base.mutable:
                raise _err(f'immutable symbol {unprimed(name)} cannot be primed', name)

    def formula(self, e: SExpr, env: Mapping[str, Var]) -> Formula:
        if isinstance(e, Sym):
            if e == 'true':
                return TRUE
            if e == 'false':
                return FALSE
            self._check_name(e)
            r = self.sig.relations.get(e)
            if r is not None:
                if r.arity:
                    raise _err(f'relation {e} expects {len(r.arity)} arguments', e)
                return Rel(str(e), ())
            raise _err(f'expected a formula, got {e}', e)
        if not e:
            raise _err('empty form', e)
        head = e[0]
        if not isinstance(head, Sym):
            raise _err('expected an operator', e)
        args = e[1:]
        if head in ('forall', 'exists'):
            if len(args) != 2 or not isinstance(args[0], SList) or not args[0]:
                raise _err(f'malformed {head}', e)
            vs: List[Var] = []
            inner = dict(env)
            for b in args[0]:
                if not (isinstance(b, SList) and len(b) == 2 and all(isinstance(x, Sym) for x in b)):
                    raise _err('malformed variable binding', b)
                name, sort = b
                if sort not in self.sig.sorts:
                    raise _err(f'undeclared sort {sort}', sort)
                v = Var(str(name), str(sort))
                vs.append(v)
                inner[str(name)] = v
            body = self.formula(args[1], inner)
            return (Forall if head == 'forall' else Exists)(tuple(vs), body)
        if head == 'and':
            return And(tuple(self.formula(a, env) for a in args))
        if head == 'or':
            return Or(tuple(self.formula(a, env) for a in args))
        if head == 'not':
            if len(args) != 1:
                raise _err('not takes one argument', e)
            return Not(self.formula(args[0], env))
        if head == '=>':
            if len(args) != 2:
                raise _err('=> takes two arguments', e)
            return Implies(self.formula(args[0], env), self.formula(args[1], env))
        if head == '=':
            if len(args) != 2:
                raise _err('= takes two arguments', e)
            if self._is_formula(args[0], env):
                return Iff(self.formula(args[0], env), self.formula(args[1], env))
            return Eq(self.term(args[0], env), self.term(args[1], env))
        self._check_name(head)
        r = self.sig.relations.get(head)
        if r is None:
            raise _err(f'unknown relation {head}', head)
        if len(r.arity) != len(args):
            raise _err(f'relation {head} expects {len(r.arity)} arguments, got {len(args)}', e)
        return Rel(str(head), tuple(self.term(a, env) for a in args))

    def _is_formula(self, e: SExpr, env: Mapping[str, Var]) -> bool:
        if isinstance(e, Sym):
            return e in ('true', 'false') or (e not in env and e in self.sig.relations)
        return bool(e) and isinstance(e[0], Sym) and e[0] not in self.sig.functions

    def term(self, e: SExpr, env: Mapping[str, Var]) -> Term:
        if isinstance(e, Sym):
            if e in env:
                return env[e]
            self._check_name(e)
            if e in self.sig.constants:
                return Const(str(e))
            raise _err(f'unknown variable or constant {e}', e)
        if not e or not isinstance(e[0], Sym):
            raise _err('malformed term', e)
        self._check_name(e[0])
        fd = self.sig.functions.get(e[0])
        if fd is None:
            raise _err(f'unknown function {e[0]}', e[0])
        if len(fd.arity) != len(e) - 1:
            raise _err(f'function {e[0]} expects {len(fd.arity)} arguments', e)
        return Apply(str(e[0]), tuple(self.term(a, env) for a in e[1:]))


def _checked(f: Formula, sig: Signature, node: object) -> Formula:
    try:
        sort_check(f, sig)
    except SortError as exc:
        line, col = getattr(node, 'line', 0), getattr(node, 'col', 0)
        raise SortError(f'{line}:{col}: {exc}', exc.term, exc.expected, exc.actual) from None
    return f


def _mutability(e: SExpr, form: SExpr) -> bool:
    if e == 'mutable':
        return True
    if e == 'immutable':
        return False
    raise _err('expected mutable or immutable', e if isinstance(e, Sym) else form)


def _sort_list(e: SExpr, form: SExpr) -> Tuple[str, ...]:
    if not isinstance(e, SList) or not all(isinstance(x, Sym) for x in e):
        raise _err('expected a list of sorts', form)
    return tuple(str(x) for x in e)


def parse_system(text: str, name: str = '') -> TransitionSystem:
    """Parse a ``.fol`` transition system; declarations may come in any order."""
    forms = read_sexprs(text)
    sorts: List[str] = []
    consts: List[ConstantDecl] = []
    rels: List[RelationDecl] = []
    funcs: List[FunctionDecl] = []
    bodies: List[Tuple[str, SList]] = []
    edges: List[Tuple[str, str]] = []
    sysname = name
    for form in forms:
        if not isinstance(form, SList) or not form or not isinstance(form[0], Sym):
            raise _err('expected a declaration', form)
        head, args = form[0], form[1:]
        if head == 'sort':
            if len(args) != 1 or not isinstance(args[0], Sym):
                raise _err('malformed sort declaration', form)
            if args[0] in sorts:
                raise _err(f'duplicate sort {args[0]}', form)
            sorts.append(str(args[0]))
        elif head == 'constant':
            if len(args) != 3 or not isinstance(args[0], Sym) or not isinstance(args[1], Sym):
                raise _err('malformed constant declaration', form)
            consts.append(ConstantDecl(str(args[0]), str(args[1]), _mutability(args[2], form)))
        elif head == 'relation':
            if len(args) != 3 or not isinstance(args[0], Sym):
                raise _err('malformed relation declaration', form)
            rels.append(RelationDecl(str(args[0]), _sort_list(args[1], form), _mutability(args[2], form)))
        elif head == 'function':
            if len(args) != 4 or not isinstance(args[0], Sym) or not isinstance(args[2], Sym):
                raise _err('malformed function declaration', form)
            arity = _sort_list(args[1], form)
            if not arity:
                raise _err('functions need at least one argument sort', form)
            funcs.append(FunctionDecl(str(args[0]), arity, str(args[2]), _mutability(args[3], form)))
        elif head in ('axiom', 'init', 'safety'):
            if len(args) != 1:
                raise _err(f'{head} takes one formula', form)
            bodies.append((str(head), form))
        elif head == 'transition':
            if len(args) != 2 or not isinstance(args[0], Sym):
                raise _err('malformed transition', form)
            bodies.append(('transition', form))
        elif head == 'epr-edge':
            if len(args) != 2 or not all(isinstance(a, Sym) for a in args):
                raise _err('malformed epr-edge', form)
            edges.append((str(args[0]), str(args[1])))
        elif head == 'system':
            if len(args) != 1 or not isinstance(args[0], Sym):
                raise _err('malformed system name', form)
            sysname = str(args[0])
        else:
            raise _err(f'unknown declaration {head}', form)
    for form in forms:
        for s in _declared_sorts(form[0], form[1:]):
            if s not in sorts:
                raise _err(f'undeclared sort {s}', form)
    for a, b in edges:
        for s in (a, b):
            if s not in sorts:
                raise ParseError(f'undeclared sort {s} in epr-edge')
    try:
        sig = Signature(sorts, consts, rels, funcs)
    except SortError as exc:
        raise ParseError(str(exc)) from None
    doubled = sig.doubled()
    axioms, inits, safeties = [], [], []
    transitions = []
    for kind, form in bodies:
        if kind == 'transition':
            f = _FormulaParser(doubled, True, 'transition').formula(form[2], {})
            transitions.append((str(form[1]), _checked(f, doubled, form)))
        else:
            f = _checked(_FormulaParser(sig, False, kind).formula(form[1], {}), sig, form)
            {'axiom': axioms, 'init': inits, 'safety': safeties}[kind].append(f)
    names = [t for t, _ in transitions]
    if len(set(names)) != len(names):
        raise ParseError('duplicate transition name')
    comments = tuple(l.strip()[1:].strip() for l in text.splitlines() if l.strip().startswith(';'))
    return TransitionSystem(sig, tuple(axioms), tuple(inits), tuple(transitions), tuple(safeties),
                            tuple(sorted(set(edges))), sysname, comments)


def _declared_sorts(head: str, args: Sequence[SExpr]) -> List[str]:
    if head == 'constant':
        return [str(args[1])]
    if head == 'relation':
        return list(args[1]) if isinstance(args[1], SList) else []
    if head == 'function':
        return (list(args[1]) if isinstance(args[1], SList) else []) + [str(args[2])]
    return []


def load_system(path: str) -> TransitionSystem:
    import os
    with open(path, encoding='utf-8') as fh:
        text = fh.read()
    return parse_system(text, os.path.splitext(os.path.basename(path))[0])


def parse_formula(text: str, sig: Signature, free: Iterable[Var] = (),
                  allow_primed: bool = False) -> Formula:
    """Parse a single formula; ``free`` lists variables that may occur unbound."""
    forms = read_sexprs(text)
    if len(forms) != 1:
        raise ParseError(f'expected exactly one formula, found {len(forms)}')
    env = {v.name: v for v in free}
    f = _FormulaParser(sig, allow_primed, 'formula').formula(forms[0], env)
    return _checked(f, sig, forms[0])


def parse_formulas(text: str, sig: Signature) -> List[Formula]:
    """Parse a sequence of formulas; ``(invariant F)`` wrappers are accepted."""
    out = []
    for form in read_sexprs(text):
        if isinstance(form, SList) and form and form[0] == 'invariant':
            if len(form) != 2:
                raise _err('invariant takes one formula', form)
            form = form[1]
        out.append(_checked(_FormulaParser(sig, False, 'invariant').formula(form, {}), sig, form))
    return out


# ---------------------------------------------------------------------------
# Printing

def print_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        return t.name
    return '(' + ' '.join([t.func] + [print_term(a) for a in t.args]) + ')'


def print_formula(f: Formula) -> str:
    """Canonical text; ``parse_formula(print_formula(f))`` rebuilds ``f`` exactly."""
    if isinstance(f, Rel):
        if not f.args:
            return f.name
        return '(' + ' '.join([f.name] + [print_term(a) for a in f.args]) + ')'
    if isinstance(f, Eq):
        return f'(= {print_term(f.left)} {print_term(f.right)})'
    if isinstance(f, Not):
        return f'(not {print_formula(f.body)})'
    if isinstance(f, (And, Or)):
        op = 'and' if isinstance(f, And) else 'or'
        return '(' + ' '.join([op] + [print_formula(a) for a in f.args]) + ')'
    if isinstance(f, Implies):
        return f'(=> {print_formula(f.left)} {print_formula(f.right)})'
    if isinstance(f, Iff):
        return f'(= {print_formula(f.left)} {print_formula(f.right)})'
    if isinstance(f, (Forall, Exists)):
        q = 'forall' if isinstance(f, Forall) else 'exists'
        binds = ' '.join(f'({v.name} {v.sort})' for v in f.vars)
        return f'({q} ({binds}) {print_formula(f.body)})'
    raise TypeError(f'not a formula: {f!r}')


def print_system(sys: TransitionSystem) -> str:
    sig = sys.signature
    mut = {True: 'mutable', False: 'immutable'}
    lines = [f'; {c}' for c in sys.comments]
    if sys.name:
        lines.append(f'(system {sys.name})')
    lines += [f'(sort {s})' for s in sig.sorts]
    lines += [f'(constant {c.name} {c.sort} {mut[c.mutable]})' for c in sig.constants.values()]
    lines += [f'(relation {r.name} ({" ".join(r.arity)}) {mut[r.mutable]})' for r in sig.relations.values()]
    lines += [f'(function {g.name} ({" ".join(g.arity)}) {g.sort} {mut[g.mutable]})'
              for g in sig.functions.values()]
    lines += [f'(epr-edge {a} {b})' for a, b in sys.epr_edges]
    lines += [f'(axiom {print_formula(a)})' for a in sys.axioms]
    lines += [f'(init {print_formula(a)})' for a in sys.inits]
    lines += [f'(transition {n} {print_formula(t)})' for n, t in sys.transitions]
    lines += [f'(safety {print_formula(a)})' for a in sys.safeties]
    return '\n'.join(lines) + '\n'
