"""Readable value functions and coefficient sparsification."""
from __future__ import annotations

import numpy as np

from ..dictionaries import MonomialBasis


def _fmt(c: float, digits: int) -> str:
    s = f"{abs(c):.{digits}g}"
    return s


def format_value_function(w, basis: MonomialBasis, names=None, digits: int = 4,
                          tol: float = 0.0) -> str:
    """``V(x) = ...`` with terms ordered by decreasing |coefficient|.

    Coefficients with magnitude <= ``tol`` are omitted.
    """
    w = np.asarray(w, dtype=float)
    terms = basis.term_names(names)
    order = sorted(range(len(w)), key=lambda k: (-abs(w[k]), k))
    parts = []
    for k in order:
        c = w[k]
        if abs(c) <= tol or c == 0.0:
            continue
        mag = _fmt(c, digits)
        term = terms[k]
        body = mag if term == "1" else (term if mag == "1" else f"{mag}{term}")
        sign = "-" if c < 0 else "+"
        parts.append((sign, body))
    if not parts:
        return "V(x) = 0"
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return "V(x) = " + out


def term_indices(basis: MonomialBasis, terms, names=None) -> list[int]:
    """Indices of named terms (e.g. ``["1", "y^2", "z^2"]``)."""
    table = {t: k for k, t in enumerate(basis.term_names(names))}
    out = []
    for t in terms:
        key = t.replace(" ", "").replace("**", "^")
        if key not in table:
            raise KeyError(f"unknown term {t!r}; available: {list(table)}")
        out.append(table[key])
    return out


def sparsify(w, basis: MonomialBasis, keep=None, zero=None, names=None) -> np.ndarray:
    """Copy of ``w`` keeping only ``keep`` terms, or with ``zero`` terms removed."""
    w = np.asarray(w, dtype=float).copy()
    if keep is not None:
        mask = np.zeros(len(w), dtype=bool)
        mask[term_indices(basis, keep, names)] = True
        w[~mask] = 0.0
    if zero is not None:
        w[term_indices(basis, zero, names)] = 0.0
    return w
