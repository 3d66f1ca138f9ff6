"""Bundled benchmark systems (``.fol``) and hand-written invariants (``.inv``)."""

from __future__ import annotations

import os
from typing import List, Optional

_DIR = os.path.dirname(os.path.abspath(__file__))


def corpus_dir() -> str:
    return _DIR


def benchmarks() -> List[str]:
    return sorted(f[:-4] for f in os.listdir(_DIR) if f.endswith('.fol'))


def corpus_path(name: str, ext: str = '.fol') -> Optional[str]:
    """Path of a bundled file by benchmark name, or None."""
    base = os.path.basename(name)
    if base.endswith(ext):
        base = base[:-len(ext)]
    path = os.path.join(_DIR, base + ext)
    return path if os.path.exists(path) else None
