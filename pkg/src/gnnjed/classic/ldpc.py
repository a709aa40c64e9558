"""Flooding LDPC belief propagation (sum-product and min-sum)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..factor_graph import _padded_table
from ..nn import tensor as T
from .common import LLR_MAX, hard_decision

_TANH_MAX = np.tanh(LLR_MAX / 2)


@dataclass
class DecoderOutput:
    llr: np.ndarray  # (B, n) APP LLRs
    hard: np.ndarray  # (B, n) bits
    syndrome_ok: np.ndarray  # (B,)


class _TannerLayout:
    def __init__(self, code):
        rows, cols = code.edges()
        self.rows = rows
        self.cols = cols
        E = rows.size
        self.num_edges = E
        self.check_tab = _padded_table(rows, cols, code.m)  # (m, dc)
        self.vn_tab = _padded_table(cols, rows, code.n)  # (n, dv)
        dc = self.check_tab.shape[1]
        slot = np.zeros(E, dtype=np.int64)
        r, s = np.nonzero(self.check_tab >= 0)
        slot[self.check_tab[r, s]] = s
        self.flat_index = rows * dc + slot
        self.pad_tab = np.where(self.check_tab < 0, E, self.check_tab)


def _leave_one_out(values, combine):
    """For a list of tensors v_0..v_{d-1}: out_s = combine of all v_j, j != s."""
    d = len(values)
    prefix = [None] * d
    suffix = [None] * d
    for s in range(1, d):
        prefix[s] = values[s - 1] if prefix[s - 1] is None else combine(prefix[s - 1], values[s - 1])
    for s in range(d - 2, -1, -1):
        suffix[s] = values[s + 1] if suffix[s + 1] is None else combine(suffix[s + 1], values[s + 1])
    out = []
    for s in range(d):
        if prefix[s] is None:
            out.append(suffix[s])
        elif suffix[s] is None:
            out.append(prefix[s])
        else:
            out.append(combine(prefix[s], suffix[s]))
    return out


def _check_update(lay: _TannerLayout, v2c, variant: str):
    batch = v2c.shape[1]
    dc = lay.check_tab.shape[1]
    if variant == "sum-product":
        t = T.tanh(T.scale(v2c, 0.5))
        padded = T.concat([t, np.ones((1, batch))], axis=0)
        grid = T.take(padded, lay.pad_tab, axis=0)  # (m, dc, B)
        cols = [T.getitem(grid, (slice(None), s)) for s in range(dc)]
        ext = _leave_one_out(cols, T.mul)
        ext = [T.scale(T.atanh(T.clip(e, -_TANH_MAX, _TANH_MAX)), 2.0) for e in ext]
    elif variant == "min-sum":
        data = T._data(v2c)
        mag = T.tabs(v2c)
        sgn = np.where(data < 0, -1.0, 1.0)
        padded_mag = T.concat([mag, np.full((1, batch), LLR_MAX)], axis=0)
        grid = T.take(padded_mag, lay.pad_tab, axis=0)
        sgrid = np.concatenate([sgn, np.ones((1, batch))], axis=0)[lay.pad_tab]
        mins = _leave_one_out([T.getitem(grid, (slice(None), s)) for s in range(dc)], T.minimum)
        signs = _leave_one_out([sgrid[:, s] for s in range(dc)], np.multiply)
        ext = [T.mul(m, s) for m, s in zip(mins, signs)]
    else:
        raise ValueError(f"unknown check-node variant {variant!r}")
    if dc == 1:
        # degree-1 checks force the bit to 0
        ext = [T.Tensor(np.full((lay.check_tab.shape[0], batch), LLR_MAX))]
    stacked = T.stack(ext, axis=1)
    return T.take(T.reshape(stacked, (-1, batch)), lay.flat_index, axis=0)


def ldpc_messages(code, channel_llr, iters: int, variant: str = "sum-product", layout=None):
    """Differentiable flooding BP; returns per-iteration APP tensors of shape (n, B)."""
    lay = layout or _TannerLayout(code)
    ch = channel_llr if isinstance(channel_llr, T.Tensor) else T.Tensor(np.asarray(channel_llr, dtype=np.float64))
    if ch.shape[0] != code.n:
        raise ValueError(f"channel LLRs must have {code.n} rows")
    batch = ch.shape[1]
    c2v = np.zeros((lay.num_edges, batch))
    total = ch
    outs = []
    for _ in range(iters):
        v2c = T.clip(T.sub(T.take(total, lay.cols, axis=0), c2v), -LLR_MAX, LLR_MAX)
        c2v = _check_update(lay, v2c, variant) if lay.num_edges else c2v
        agg = T.table_sum(c2v, lay.vn_tab) if lay.num_edges else np.zeros((code.n, batch))
        total = T.clip(T.add(ch, agg), -LLR_MAX, LLR_MAX)
        outs.append(total)
    return outs


def ldpc_bp_decode(code, channel_llr, iters: int = 20, variant: str = "sum-product",
                   early_stop: bool = True) -> list[DecoderOutput]:
    """Decode LLRs (log P(0)/P(1), punctured positions 0) of shape (B, n) or (n,).

    Returns one :class:`DecoderOutput` per iteration.  With ``early_stop``
    a frame whose hard decision satisfies all checks is frozen, and once
    every frame is frozen the remaining iterations repeat the final output.
    """
    llr = np.asarray(channel_llr, dtype=np.float64)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    if llr.shape[1] != code.n:
        raise ValueError(f"expected {code.n} LLRs per frame, got {llr.shape[1]}")
    if iters < 1:
        raise ValueError("need at least one decoding iteration")
    lay = _TannerLayout(code)
    B = llr.shape[0]
    ch = llr.T
    c2v = np.zeros((lay.num_edges, B))
    total = ch
    done = np.zeros(B, dtype=bool)
    frozen = np.zeros_like(llr)
    outs = []
    for it in range(iters):
        active = np.flatnonzero(~done)
        if active.size:
            v2c = np.clip(total[lay.cols][:, active] - c2v[:, active], -LLR_MAX, LLR_MAX)
            if lay.num_edges:
                c2v_a = _check_update_np(lay, v2c, variant, active.size)
                c2v[:, active] = c2v_a
                agg = T.table_sum(c2v_a, lay.vn_tab).data
            else:
                agg = 0.0
            total = total.copy()
            total[:, active] = np.clip(ch[:, active] + agg, -LLR_MAX, LLR_MAX)
        app = total.T.copy()
        hard = hard_decision(app)
        ok = code.is_codeword(hard) if code.m else np.ones(B, dtype=bool)
        if early_stop:
            newly = ok & ~done
            frozen[newly] = app[newly]
            done |= ok
            app = np.where(done[:, None], frozen, app)
            hard = hard_decision(app)
        outs.append(DecoderOutput(app, hard, ok | done))
        if early_stop and done.all():
            outs.extend(outs[-1] for _ in range(iters - it - 1))
            break
    if single:
        outs = [DecoderOutput(o.llr[0], o.hard[0], o.syndrome_ok[0]) for o in outs]
    return outs


def _check_update_np(lay, v2c, variant, batch):
    return _check_update(lay, T.Tensor(v2c), variant).data
