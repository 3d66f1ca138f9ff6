"""Inference of quantified inductive invariants for first-order transition systems.

The pieces, bottom up: ``logic`` (formulas and finite structures),
``syntax`` (the ``.fol`` format), ``oracle`` (bounded model finding over
SAT), ``separation`` (SAT-based formula learning from structures), ``epr``
(Skolem-edge checks), ``ig`` (prefix-parallel inductive generalization) and
``pdr`` (the frame-based driver).
"""

from __future__ import annotations

from .logic import Signature, Structure, PrenexFormula
from .syntax import TransitionSystem, load_system, parse_system, parse_formula, print_formula
from .oracle import Oracle
from .pdr import PDRConfig, PDRResult, run, verify_invariant

__all__ = [
    'Signature', 'Structure', 'PrenexFormula', 'TransitionSystem', 'load_system', 'parse_system',
    'parse_formula', 'print_formula', 'Oracle', 'PDRConfig', 'PDRResult', 'run', 'verify_invariant',
]
__version__ = '0.1.0'
