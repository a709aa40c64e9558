"""Binary cross-entropy objectives and the bitwise mutual information estimate."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

PROB_CLAMP = 1e-7
_LN2 = math.log(2.0)


def bce_loss(probs, bits) -> Tensor:
    """Mean binary cross-entropy in bits.

    ``probs`` are estimates of P(bit = 1), clamped to [1e-7, 1 - 1e-7].
    """
    bits = np.asarray(bits, dtype=T._data(probs).dtype)
    if bits.shape != T._data(probs).shape:
        raise ValueError(f"shape mismatch: probs {T._data(probs).shape} vs bits {bits.shape}")
    p = T.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP)
    ce = T.add(T.mul(bits, T.log(p)), T.mul(1 - bits, T.log(T.sub(1.0, p))))
    return T.scale(T.mean(ce), -1.0 / _LN2)


def bce_with_logits(logits, bits) -> Tensor:
    """BCE in bits from logits ``l`` with P(bit = 1) = sigmoid(l).

    Uses softplus(l) - c*l, which stays finite for any logit magnitude.
    """
    bits = np.asarray(bits, dtype=T._data(logits).dtype)
    if bits.shape != T._data(logits).shape:
        raise ValueError(f"shape mismatch: logits {T._data(logits).shape} vs bits {bits.shape}")
    ce = T.sub(T.softplus(logits), T.mul(bits, logits))
    return T.scale(T.mean(ce), 1.0 / _LN2)


def multi_loss(losses) -> Tensor:
    """Average of per-iteration losses."""
    losses = list(losses)
    if not losses:
        raise ValueError("multi_loss needs at least one loss term")
    total = losses[0]
    for term in losses[1:]:
        total = T.add(total, term)
    return T.scale(total, 1.0 / len(losses))


def _bce_bits_np(llrs: np.ndarray, bits: np.ndarray, alpha: float) -> float:
    # P(bit=1) = sigmoid(-alpha*llr) for llr = log P(0)/P(1)
    z = -alpha * llrs
    ce = np.logaddexp(0, z) - bits * z
    # clamp per-bit loss to the probability clamp used by bce_loss
    ce = np.minimum(ce, -math.log(PROB_CLAMP))
    return float(ce.mean() / _LN2)


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-4, max_iter: int = 200) -> float:
    """Maximizer of a unimodal ``f`` on [lo, hi]."""
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return (a + b) / 2


def bmi_estimate(llrs, bits, damping: float | None = None, bounds=(1e-3, 10.0)) -> tuple[float, float]:
    """Bitwise mutual information 1 - BCE in bits/channel use.

    ``llrs`` follow the log P(0)/P(1) convention.  With ``damping=None`` the
    LLRs are scaled by the factor in ``bounds`` that maximizes the estimate
    (golden-section search, never worse than no scaling).  Returns
    ``(bmi, damping)``.
    """
    llrs = np.asarray(llrs, dtype=np.float64).ravel()
    bits = np.asarray(bits, dtype=np.float64).ravel()
    if llrs.shape != bits.shape:
        raise ValueError("llrs and bits must have the same number of entries")
    if damping is not None:
        if damping <= 0:
            raise ValueError("damping must be positive")
        return 1.0 - _bce_bits_np(llrs, bits, damping), float(damping)
    score = lambda a: 1.0 - _bce_bits_np(llrs, bits, a)
    best = golden_section_max(score, *bounds)
    candidates = [(score(best), best), (score(1.0), 1.0)]
    bmi, alpha = max(candidates)
    return bmi, alpha
