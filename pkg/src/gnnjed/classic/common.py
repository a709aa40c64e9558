"""Shared constants and the Jacobian logarithm."""

from __future__ import annotations

import numpy as np

LLR_MAX = 30.0
# Internal BP messages get a much wider bound than the LLRs a receiver reports:
# clipping them at LLR_MAX would pull large but exact APPs below the clip.
MESSAGE_MAX = 1e4


def max_star(a, b=None, exact: bool = True, axis: int = -1):
    """Jacobian logarithm.

    ``max_star(a, b)`` is ``max(a, b) + log(1 + exp(-|a - b|))`` (or just the
    max with ``exact=False``).  With ``b`` omitted it reduces ``a`` over
    ``axis``, i.e. ``log(sum(exp(a)))``.
    """
    if b is not None:
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        m = np.maximum(a, b)
        if not exact:
            return m
        with np.errstate(invalid="ignore"):
            d = np.abs(a - b)
        return np.where(np.isfinite(m), m + np.log1p(np.exp(-np.where(np.isnan(d), np.inf, d))), m)
    a = np.asarray(a, dtype=np.float64)
    m = a.max(axis=axis, keepdims=True)
    if not exact:
        return m.squeeze(axis)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - safe).sum(axis=axis, keepdims=True)) + safe
    return out.squeeze(axis)


def hard_decision(llr) -> np.ndarray:
    """Bits from LLRs log P(0)/P(1); ties decide 0."""
    return (np.asarray(llr) < 0).astype(np.int8)
