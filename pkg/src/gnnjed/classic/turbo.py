"""Iterative (turbo) receivers: BCJR-BP and the neural BP equalizer + BP decoder variant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import tensor as T
from .bcjr import Trellis, bcjr_equalize
from .bp import bp_messages
from .common import LLR_MAX
from .ldpc import _TannerLayout, ldpc_bp_decode, ldpc_messages


def symbols_to_code_llr(code, interleaver, sym_llr: np.ndarray) -> np.ndarray:
    """Map per-symbol LLRs (B, N) onto code positions (B, n); punctured bits get 0."""
    out = np.zeros(sym_llr.shape[:-1] + (code.n,))
    out[..., code.transmitted_positions] = interleaver.deinterleave(sym_llr)
    return out


def code_to_symbol_llr(code, interleaver, code_llr: np.ndarray) -> np.ndarray:
    return interleaver.interleave(code_llr[..., code.transmitted_positions])


@dataclass
class TurboOutput:
    decoder_llr: np.ndarray  # (B, n) decoder APP after this outer iteration
    equalizer_llr: np.ndarray  # (B, N) equalizer APP after this outer iteration


def turbo_bcjr_bp(trellis: Trellis, code, interleaver, y, noise_variance, outer: int = 3, inner: int = 5,
                  variant: str = "sum-product", exact: bool = True) -> list[TurboOutput]:
    """BCJR equalization and LDPC BP decoding exchanging extrinsic LLRs.

    The decoder restarts from its channel input at each outer iteration.
    Returns one :class:`TurboOutput` per outer iteration.
    """
    if outer < 1 or inner < 1:
        raise ValueError("turbo schedule needs outer >= 1 and inner >= 1")
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    B = y.shape[0]
    apriori = np.zeros((B, code.n_transmitted))
    outs = []
    for _ in range(outer):
        app_eq, ext_eq = bcjr_equalize(trellis, y, noise_variance, apriori, exact)
        ch = symbols_to_code_llr(code, interleaver, ext_eq)
        dec = ldpc_bp_decode(code, ch, inner, variant)
        app_dec = dec[-1].llr
        ext_dec = np.clip(app_dec - ch, -LLR_MAX, LLR_MAX)
        apriori = code_to_symbol_llr(code, interleaver, ext_dec)
        outs.append(TurboOutput(app_dec, app_eq))
    return outs


class DuiddReceiver:
    """Neural BP equalizer + BP decoder with trainable weights on the handoff edges.

    Trainable tensors:

    * ``eq_weights`` (outer, inner_eq, num_eq_edges): NBP FN->VN weights
    * ``to_decoder`` (outer, N): scale of each equalizer extrinsic entering the decoder
    * ``to_equalizer`` (outer, N): scale of each decoder extrinsic fed back as a priori
    """

    def __init__(self, graph, code, interleaver, taps, outer: int = 2, inner_eq: int = 5, inner_dec: int = 5,
                 exact: bool = True):
        if min(outer, inner_eq, inner_dec) < 1:
            raise ValueError("DUIDD schedule entries must be >= 1")
        self.graph = graph
        self.code = code
        self.interleaver = interleaver
        self.taps = np.asarray(taps, dtype=np.float64)
        self.outer, self.inner_eq, self.inner_dec = outer, inner_eq, inner_dec
        self.exact = exact
        N = code.n_transmitted
        self.eq_weights = T.Tensor(np.ones((outer, inner_eq, graph.num_edges), dtype=np.float32), requires_grad=True, name="eq_weights")
        self.to_decoder = T.Tensor(np.ones((outer, N), dtype=np.float32), requires_grad=True, name="to_decoder")
        self.to_equalizer = T.Tensor(np.ones((outer, N), dtype=np.float32), requires_grad=True, name="to_equalizer")
        self._layout = _TannerLayout(code)
        # symbol k -> code row; code rows without a symbol read the zero pad row
        sym_of_code = np.full(code.n, N)
        sym_of_code[code.transmitted_positions[interleaver.perm]] = np.arange(N)
        self._sym_of_code = sym_of_code
        self._code_of_sym = code.transmitted_positions[interleaver.perm]

    def parameters(self) -> dict[str, T.Tensor]:
        return {"eq_weights": self.eq_weights, "to_decoder": self.to_decoder, "to_equalizer": self.to_equalizer}

    def load_state_dict(self, arrays: dict) -> None:
        for k, t in self.parameters().items():
            arr = np.asarray(arrays[k], dtype=np.float32)
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {t.shape}")
            t.data = arr.copy()

    def forward(self, y, noise_variance):
        """Per-outer-iteration decoder APP tensors of shape (n, B)."""
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        B = y.shape[0]
        N = self.code.n_transmitted
        apriori = T.Tensor(np.zeros((N, B)))
        outs = []
        for o in range(self.outer):
            w = T.getitem(self.eq_weights, o)
            app_eq = bp_messages(self.graph, y, noise_variance, self.taps, None, self.inner_eq, w,
                                 exact=self.exact, prior_tensor=apriori)[-1]
            ext_eq = T.sub(app_eq, apriori)
            ext_eq = T.mul(ext_eq, T.reshape(T.getitem(self.to_decoder, o), (-1, 1)))
            padded = T.concat([ext_eq, np.zeros((1, B))], axis=0)
            ch = T.take(padded, self._sym_of_code, axis=0)
            app_dec = ldpc_messages(self.code, ch, self.inner_dec, layout=self._layout)[-1]
            ext_dec = T.clip(T.sub(app_dec, ch), -LLR_MAX, LLR_MAX)
            fb = T.take(ext_dec, self._code_of_sym, axis=0)
            apriori = T.mul(fb, T.reshape(T.getitem(self.to_equalizer, o), (-1, 1)))
            outs.append(app_dec)
        return outs

    def decode(self, y, noise_variance) -> list[np.ndarray]:
        return [o.data.T for o in self.forward(y, noise_variance)]
