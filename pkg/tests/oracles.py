"""Independent reference computations used by the tests.

Nothing here imports the package's algorithms; each oracle is a direct,
brute-force restatement of the quantity being checked.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def logsumexp(a, axis=-1):
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    return (np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m).squeeze(axis)


def convolve_framed(taps, x_tilde):
    """y_k = sum_l h_l x_{k+L-l} for k = 0..N+L-1 (numpy 'valid' convolution)."""
    return np.convolve(np.asarray(x_tilde, float), np.asarray(taps, float), mode="valid")


def exhaustive_map_llr(taps, y, sigma2, n, apriori=None):
    """log P(bit=0|y)/P(bit=1|y) for every data bit by enumerating all 2^n sequences."""
    taps = np.asarray(taps, float)
    L = taps.size - 1
    seqs = np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.int64)
    x = 1.0 - 2.0 * seqs
    framed = np.concatenate([np.ones((len(x), L)), x, np.ones((len(x), L))], axis=1)
    out = np.array([convolve_framed(taps, f) for f in framed])
    metric = -np.sum((np.asarray(y)[None] - out) ** 2, axis=1) / (2 * sigma2)
    if apriori is not None:
        # prior log P(b) up to a constant: +La/2 for b=0, -La/2 for b=1
        metric = metric + np.sum(np.asarray(apriori)[None] * x / 2.0, axis=1)
    llr = np.empty(n)
    for i in range(n):
        llr[i] = logsumexp(metric[seqs[:, i] == 0]) - logsumexp(metric[seqs[:, i] == 1])
    return llr


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def gf2_matmul(a, b):
    return (np.asarray(a, np.int64) @ np.asarray(b, np.int64)) % 2


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar f at x (x is modified in place and restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b, floor: float = 1e-6):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def hamming_7_4_pcm():
    """The textbook (7,4) Hamming parity-check matrix (columns = binary 1..7)."""
    return np.array([[(c >> r) & 1 for c in range(1, 8)] for r in range(3)], dtype=np.int8)


class ThresholdDetector:
    """Sign detector for a memoryless channel, in the Monte-Carlo receiver protocol."""

    receiver_id = "threshold"

    def staged_bit_llrs(self, batch):
        return [np.asarray(batch.observations, float)]

    def target_bits(self, batch):
        return batch.symbol_bits

    def stage_latency(self):
        return [0]


def awgn_ber(ebn0_db: float) -> float:
    """Uncoded BPSK bit error rate Q(sqrt(2 Eb/N0))."""
    return q_function(math.sqrt(2.0 * 10.0 ** (ebn0_db / 10.0)))
