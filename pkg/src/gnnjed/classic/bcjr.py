"""Log-domain BCJR (symbol-wise MAP) equalizer on the ISI channel trellis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import BOUNDARY_SYMBOL
from .common import LLR_MAX, max_star


@dataclass(frozen=True, eq=False)
class Trellis:
    """State = last L symbols as bits (bit 1 <-> symbol -1), newest in bit 0."""

    taps: np.ndarray
    next_state: np.ndarray  # (S, 2)
    output: np.ndarray  # (S, 2) noiseless channel output for input bit b
    prev_state: np.ndarray  # (S, 2)
    prev_bit: np.ndarray  # (S, 2)

    @classmethod
    def from_taps(cls, taps) -> "Trellis":
        taps = np.asarray(taps, dtype=np.float64).ravel()
        L = taps.size - 1
        S = 1 << L
        next_state = np.zeros((S, 2), dtype=np.int64)
        output = np.zeros((S, 2))
        for s in range(S):
            past = [1.0 - 2.0 * ((s >> i) & 1) for i in range(L)]  # x_{k-1}, ..., x_{k-L}
            for b in (0, 1):
                x = 1.0 - 2.0 * b
                output[s, b] = taps[0] * x + sum(taps[i + 1] * past[i] for i in range(L))
                next_state[s, b] = ((s << 1) | b) & (S - 1) if L else 0
        prev_state = np.zeros((S, 2), dtype=np.int64)
        prev_bit = np.zeros((S, 2), dtype=np.int64)
        fill = np.zeros(S, dtype=np.int64)
        for s in range(S):
            for b in (0, 1):
                t = next_state[s, b]
                prev_state[t, fill[t]] = s
                prev_bit[t, fill[t]] = b
                fill[t] += 1
        if not np.all(fill == 2):
            raise AssertionError("every trellis state must have two predecessors")
        return cls(taps, next_state, output, prev_state, prev_bit)

    @property
    def memory(self) -> int:
        return self.taps.size - 1

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def known_state(self) -> int:
        # all-known-symbol state
        return 0 if BOUNDARY_SYMBOL > 0 else self.num_states - 1


def bcjr_equalize(trellis: Trellis, y, noise_variance, apriori=None, exact: bool = True):
    """Symbol APP LLRs (log P(x=+1)/P(x=-1)) and extrinsic LLRs.

    ``y`` has shape (..., N+L); the trellis starts in the known state and is
    terminated by the L trailing known symbols.  Returns ``(app, extrinsic)``
    of shape (..., N), clipped to +-LLR_MAX.
    """
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    B, n_obs = y.shape
    L = trellis.memory
    n = n_obs - L
    if n < 1:
        raise ValueError("observation vector too short for the channel memory")
    sigma2 = np.broadcast_to(np.asarray(noise_variance, dtype=np.float64), (B,)).copy()
    if np.any(sigma2 <= 0):
        raise ValueError("noise variance must be positive")
    if apriori is None:
        apriori = np.zeros((B, n))
    apriori = np.atleast_2d(np.asarray(apriori, dtype=np.float64))
    if apriori.shape != (B, n):
        raise ValueError(f"apriori shape {apriori.shape} != {(B, n)}")
    reduce = (lambda a, axis: max_star(a, axis=axis)) if exact else (lambda a, axis: np.max(a, axis=axis))

    S = trellis.num_states
    n_steps = n + L
    sign = np.array([1.0, -1.0])
    # branch metrics gamma[k, b, s, bit]
    diff = y[:, :, None, None] - trellis.output[None, None]
    gamma = -diff ** 2 / (2 * sigma2[:, None, None, None])
    gamma[:, :n] += 0.5 * apriori[:, :, None, None] * sign
    gamma[:, n:, :, 1] = -np.inf  # trailing known symbols
    start = trellis.known_state

    alpha = np.full((n_steps + 1, B, S), -np.inf)
    alpha[0, :, start] = 0.0
    ps, pb = trellis.prev_state, trellis.prev_bit
    for k in range(n_steps):
        cand = alpha[k][:, ps] + gamma[:, k][:, ps, pb]  # (B, S, 2)
        a = reduce(cand, -1)
        alpha[k + 1] = a - a.max(axis=1, keepdims=True)
    beta = np.full((n_steps + 1, B, S), -np.inf)
    beta[n_steps, :, start] = 0.0
    ns = trellis.next_state
    for k in range(n_steps - 1, -1, -1):
        cand = gamma[:, k] + beta[k + 1][:, ns]  # (B, S, 2)
        b = reduce(cand, -1)
        beta[k] = b - b.max(axis=1, keepdims=True)
    # joint metric per (k, s, bit) for the data steps
    joint = alpha[:n, :, :, None] + np.moveaxis(gamma[:, :n], 0, 1) + beta[1: n + 1][:, :, ns]
    joint = joint.reshape(n, B, S, 2)
    m0 = reduce(joint[..., 0], -1)
    m1 = reduce(joint[..., 1], -1)
    app = np.clip((m0 - m1).T, -LLR_MAX, LLR_MAX)
    ext = np.clip(app - apriori, -LLR_MAX, LLR_MAX)
    if single:
        return app[0], ext[0]
    return app, ext
