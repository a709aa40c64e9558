"""ISI channel model, BPSK mapping and frame generation.

Conventions used throughout the package:

* BPSK maps bit 0 -> +1 and bit 1 -> -1; LLRs are log P(bit=0)/P(bit=1).
* A block of ``N`` data symbols is framed by ``L`` known +1 symbols on each
  side, giving the length ``N + 2L`` sequence ``x_tilde`` and ``N + L``
  observations ``y = H @ x_tilde + z``.
* Every frame draws from its own generator seeded by
  ``(run_seed, stream, frame_index)``, so results do not depend on how frames
  are split across batches or workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

PROAKIS_C = (0.227, 0.460, 0.688, 0.460, 0.227)
PROAKIS_B = (0.407, 0.815, 0.407)
TAP_PRESETS = {
    "proakis-c": PROAKIS_C,
    "proakis-b": PROAKIS_B,
    "awgn": (1.0,),
}
BOUNDARY_SYMBOL = 1.0


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Tapped delay line ``h`` (length L+1) with AWGN of variance ``noise_variance``."""

    taps: np.ndarray
    noise_variance: float = 1.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64).ravel()
        if taps.size == 0:
            raise ValueError("channel needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("channel taps must be finite")
        if not self.noise_variance > 0:
            raise ValueError(f"noise variance must be positive, got {self.noise_variance}")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @classmethod
    def from_preset(cls, name: str, noise_variance: float = 1.0) -> "ChannelModel":
        try:
            taps = TAP_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown channel preset {name!r}; known: {sorted(TAP_PRESETS)}") from None
        return cls(np.array(taps), noise_variance)

    @property
    def memory(self) -> int:
        return self.taps.size - 1

    @property
    def energy(self) -> float:
        return float(np.sum(self.taps ** 2))

    def with_noise_variance(self, noise_variance: float) -> "ChannelModel":
        return replace(self, noise_variance=noise_variance)

    def __repr__(self):
        return f"ChannelModel(taps={self.taps.tolist()}, noise_variance={self.noise_variance:g})"


def bpsk_map(bits) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bpsk_map expects bits in {0, 1}")
    return 1.0 - 2.0 * bits.astype(np.float64)


def pad_boundary(symbols, memory: int) -> np.ndarray:
    """Frame ``symbols`` (..., N) with ``memory`` known symbols on each side."""
    symbols = np.asarray(symbols, dtype=np.float64)
    pad = [(0, 0)] * (symbols.ndim - 1) + [(memory, memory)]
    return np.pad(symbols, pad, constant_values=BOUNDARY_SYMBOL)


def toeplitz(model: ChannelModel, n: int) -> np.ndarray:
    """Convolution matrix of shape (N+L, N+2L) with ``H[k, j] = h[k - j + L]``."""
    if n < 1:
        raise ValueError("block length must be >= 1")
    L = model.memory
    H = np.zeros((n + L, n + 2 * L))
    for k in range(n + L):
        for l in range(L + 1):
            H[k, k - l + L] = model.taps[l]
    return H


def noiseless_output(model: ChannelModel, x_tilde) -> np.ndarray:
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    L = model.memory
    n_obs = x_tilde.shape[-1] - L
    if n_obs < L + 1:
        raise ValueError(f"framed sequence of length {x_tilde.shape[-1]} is too short for memory {L}")
    y = np.zeros(x_tilde.shape[:-1] + (n_obs,))
    for l, h in enumerate(model.taps):
        y += h * x_tilde[..., L - l: L - l + n_obs]
    return y


def apply_isi(model: ChannelModel, x_tilde, rng: np.random.Generator | None = None) -> np.ndarray:
    """Observations ``y_k = sum_l h_l x_{k-l} + z_k`` for a framed sequence.

    ``rng=None`` returns the noiseless channel output.
    """
    y = noiseless_output(model, x_tilde)
    if rng is not None:
        y = y + rng.standard_normal(y.shape) * np.sqrt(model.noise_variance)
    return y


def sigma_from_ebn0(ebn0_db, rate: float = 1.0, symbol_energy: float = 1.0):
    """Noise variance per real dimension for a given E_b/N_0 in dB."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    if not symbol_energy > 0:
        raise ValueError("symbol energy must be positive")
    ebn0 = 10.0 ** (np.asarray(ebn0_db, dtype=np.float64) / 10.0)
    out = symbol_energy / (2.0 * rate * ebn0)
    return float(out) if np.ndim(out) == 0 else out


def frame_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


@dataclass
class TransmissionFrame:
    info_bits: np.ndarray
    code_bits: np.ndarray
    symbols: np.ndarray
    observations: np.ndarray
    noise_seed: tuple


@dataclass
class FrameBatch:
    """A batch of frames stacked along axis 0."""

    info_bits: np.ndarray  # (B, K)
    code_bits: np.ndarray  # (B, N_code)
    symbol_bits: np.ndarray  # (B, N) bits carried by the transmitted symbols
    symbols: np.ndarray  # (B, N + 2L)
    observations: np.ndarray  # (B, N + L)
    noise_variance: np.ndarray  # (B,)
    ebn0_db: np.ndarray  # (B,)
    indices: np.ndarray = field(default=None)

    def __len__(self):
        return self.observations.shape[0]

    def frame(self, i: int) -> TransmissionFrame:
        return TransmissionFrame(self.info_bits[i], self.code_bits[i], self.symbols[i],
                                 self.observations[i], tuple(np.atleast_1d(self.indices[i]).tolist()))


class Transmitter:
    """bits -> (LDPC codeword -> interleaver) -> BPSK -> ISI channel + AWGN.

    Without a code the frame carries ``n_symbols`` uncoded random bits.
    """

    def __init__(self, taps, n_symbols: int | None = None, code=None, interleaver=None):
        self.taps = np.asarray(taps, dtype=np.float64)
        self.code = code
        if code is not None:
            n_tx = code.n_transmitted
            if n_symbols is not None and n_symbols != n_tx:
                raise ValueError(f"code transmits {n_tx} bits but n_symbols={n_symbols}")
            n_symbols = n_tx
            if interleaver is None:
                from .code import Interleaver

                interleaver = Interleaver.identity(n_tx)
            if len(interleaver) != n_tx:
                raise ValueError("interleaver length must equal the number of transmitted bits")
        if n_symbols is None or n_symbols < 1:
            raise ValueError("n_symbols must be >= 1")
        self.n_symbols = int(n_symbols)
        self.interleaver = interleaver

    @property
    def memory(self) -> int:
        return self.taps.size - 1

    @property
    def rate(self) -> float:
        return 1.0 if self.code is None else self.code.k / self.n_symbols

    @property
    def n_info(self) -> int:
        return self.n_symbols if self.code is None else self.code.k

    def symbol_bits(self, code_bits: np.ndarray) -> np.ndarray:
        if self.code is None:
            return code_bits
        tx = code_bits[..., self.code.transmit_mask]
        return self.interleaver.interleave(tx)

    def generate(self, n_frames: int, ebn0_db, seed: int, start: int = 0, stream: int = 0) -> FrameBatch:
        """Generate frames ``start .. start+n_frames-1`` of the run ``seed``.

        ``ebn0_db`` is either a scalar or a ``(lo, hi)`` range sampled
        uniformly per frame.
        """
        lo, hi = (ebn0_db, ebn0_db) if np.ndim(ebn0_db) == 0 else tuple(ebn0_db)
        if lo > hi:
            raise ValueError("SNR range must satisfy lo <= hi")
        K = self.n_info
        n_obs = self.n_symbols + self.memory
        info = np.empty((n_frames, K), dtype=np.int8)
        snr = np.empty(n_frames)
        noise = np.empty((n_frames, n_obs))
        for i in range(n_frames):
            rng = frame_rng(seed, start + i, stream)
            info[i] = rng.integers(0, 2, size=K, dtype=np.int8)
            snr[i] = lo if lo == hi else rng.uniform(lo, hi)
            noise[i] = rng.standard_normal(n_obs)
        code_bits = info if self.code is None else self.code.encode(info)
        sym_bits = self.symbol_bits(code_bits)
        x_tilde = pad_boundary(bpsk_map(sym_bits), self.memory)
        sigma2 = np.asarray(sigma_from_ebn0(snr, self.rate), dtype=np.float64)
        model = ChannelModel(self.taps, 1.0)
        y = noiseless_output(model, x_tilde) + noise * np.sqrt(sigma2)[:, None]
        return FrameBatch(info, code_bits, sym_bits, x_tilde, y, sigma2, snr,
                          np.arange(start, start + n_frames))
