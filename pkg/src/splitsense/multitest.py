"""Multiplicity corrections: Bonferroni, Holm, Benjamini-Hochberg.

Hypotheses are identified by their 0-based position in the p-value
vector.  Each procedure returns the rejected positions as a sorted
integer array; ties are broken by position via a stable sort, so results
are deterministic.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidAlphaError

__all__ = ["bh_reject", "bonferroni_reject", "holm_reject"]


def _checked(pvalues, alpha: float) -> np.ndarray:
    if not 0.0 < alpha < 1.0:
        raise InvalidAlphaError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    p = np.asarray(pvalues, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"need a non-empty 1-d p-value vector, got shape {p.shape}")
    if np.any(np.isnan(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("p-values must lie in [0, 1]")
    return p


def bonferroni_reject(pvalues, alpha: float) -> np.ndarray:
    """Positions with ``p <= alpha / m``, sorted ascending."""
    p = _checked(pvalues, alpha)
    return np.flatnonzero(p <= alpha / p.size)


def holm_reject(pvalues, alpha: float) -> np.ndarray:
    """Step-down rejections: walk p-values ascending, stop at the first failure.

    The j-th smallest (1-based) must satisfy ``p <= alpha / (m - j + 1)``.
    """
    p = _checked(pvalues, alpha)
    m = p.size
    order = np.lexsort((np.arange(m), p))
    ok = p[order] <= alpha / (m - np.arange(m))
    failures = np.flatnonzero(~ok)
    keep = m if failures.size == 0 else int(failures[0])
    return np.sort(order[:keep])


def bh_reject(pvalues, alpha: float) -> tuple[np.ndarray, int]:
    """Step-up rejections with the false discovery rate held at ``alpha``.

    Finds the largest rank ``l`` (1-based) with ``p_(l) <= l * alpha / m``
    and rejects the ``l`` smallest p-values.

    Returns:
        ``(rejected positions sorted ascending, l)``; ``l`` is 0 when
        nothing qualifies.
    """
    p = _checked(pvalues, alpha)
    m = p.size
    order = np.lexsort((np.arange(m), p))
    qualifies = p[order] <= (np.arange(1, m + 1) / m) * alpha
    hits = np.flatnonzero(qualifies)
    l_star = 0 if hits.size == 0 else int(hits[-1]) + 1
    return np.sort(order[:l_star]), l_star
