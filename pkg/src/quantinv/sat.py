"""Thin incremental SAT interface over PySAT.

Everything above this module talks to :class:`SatSolver` only: fresh
variables, clauses, and solving under assumptions.
"""

from __future__ import annotations

from typing import Iterable, List, Optional, Sequence

from pysat.solvers import Solver

DEFAULT_BACKEND = 'glucose4'
# Backends whose PySAT bindings support conflict budgets and interrupts.
INTERRUPTIBLE = frozenset({'glucose3', 'glucose4', 'minisat22', 'minicard', 'maplechrono', 'maplecm', 'maplesat', 'lingeling', 'mergesat3'})


class SatSolver:
    def __init__(self, backend: str = DEFAULT_BACKEND, record: bool = False) -> None:
        self.backend = backend
        self._solver = Solver(name=backend)
        self._nvars = 0
        self._nclauses = 0
        self._model: Optional[List[int]] = None
        self._values: Optional[bytearray] = None
        self.clauses: Optional[List[List[int]]] = [] if record else None

    def new_var(self) -> int:
        self._nvars += 1
        return self._nvars

    def reserve(self, top: int) -> None:
        """Account for variables ``<= top`` allocated by an external encoder."""
        self._nvars = max(self._nvars, top)

    def set_phases(self, lits: Sequence[int]) -> None:
        """Preferred polarity for decisions (a hint, not a constraint)."""
        try:
            self._solver.set_phases(list(lits))
        except NotImplementedError:
            pass

    @property
    def num_vars(self) -> int:
        return self._nvars

    @property
    def num_clauses(self) -> int:
        return self._nclauses

    def add_clause(self, lits: Sequence[int]) -> None:
        self._solver.add_clause(lits)
        self._nclauses += 1
        if self.clauses is not None:
            self.clauses.append(list(lits))

    def solve(self, assumptions: Iterable[int] = (), conflict_budget: Optional[int] = None) -> Optional[bool]:
        """True/False, or None when the conflict budget ran out or the call was interrupted."""
        self._model = None
        self._values = None
        assumptions = list(assumptions)
        if self.backend not in INTERRUPTIBLE:
            res = self._solver.solve(assumptions=assumptions)
        else:
            self._solver.conf_budget(-1 if conflict_budget is None else conflict_budget)
            res = self._solver.solve_limited(assumptions=assumptions, expect_interrupt=True)
            self._solver.clear_interrupt()
        if res:
            self._model = self._solver.get_model()
        return res

    def interrupt(self) -> None:
        try:
            self._solver.interrupt()
        except NotImplementedError:
            pass

    def value(self, lit: int) -> bool:
        """Truth value of ``lit`` in the last model (unassigned variables read as false)."""
        if self._values is None:
            if self._model is None:
                raise RuntimeError('no model available')
            vals = bytearray(self._nvars + 1)
            for l in self._model:
                if l > 0 and l <= self._nvars:
                    vals[l] = 1
            self._values = vals
        v = abs(lit)
        b = self._values[v] if v < len(self._values) else 0
        return bool(b) if lit > 0 else not b

    def core(self) -> List[int]:
        return list(self._solver.get_core() or [])

    def dump_dimacs(self, path: str, assumptions: Iterable[int] = ()) -> None:
        """Write the recorded clauses (plus assumptions as units) in DIMACS format."""
        if self.clauses is None:
            raise RuntimeError('solver was created without clause recording')
        units = [[a] for a in assumptions]
        with open(path, 'w') as fh:
            fh.write(f'p cnf {self._nvars} {len(self.clauses) + len(units)}\n')
            for c in self.clauses + units:
                fh.write(' '.join(map(str, c)) + ' 0\n')

    def close(self) -> None:
        self._solver.delete()

    def __del__(self) -> None:
        try:
            self._solver.delete()
        except Exception:
            pass
