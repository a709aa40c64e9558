"""Belief propagation equalizers on the Forney and Ungerboeck factor graphs.

Messages are LLRs (log P(+1)/P(-1)) stored per edge with layout
``(num_edges, batch)``.  All updates are written with the tensor ops of
:mod:`gnnjed.nn.tensor`, so the same code runs plain BP, neural BP with
per-edge weights, and differentiates through either when a tape is active.

Schedule per iteration (flooding): every FN computes its FN->VN messages
from the current VN->FN messages, then every VN forms its APP
``apriori + sum(weight * FN->VN)`` and the extrinsic VN->FN messages.
"""

from __future__ import annotations

import numpy as np

from ..factor_graph import FactorGraph, FnKind, UngerboeckData
from ..nn import tensor as T
from .common import LLR_MAX, MESSAGE_MAX

_MASKED = -1e30


def _as_items_first(a, n_items: int, batch: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None]
    if a.shape != (batch, n_items):
        raise ValueError(f"expected shape {(batch, n_items)}, got {a.shape}")
    return a.T


class _FfgKernel:
    """FN->VN updates on a Forney graph: exact marginalization over 2^(L+1) window configs."""

    def __init__(self, graph: FactorGraph, taps, y: np.ndarray, sigma2: np.ndarray, exact: bool):
        L = graph.memory
        taps = np.asarray(taps, dtype=np.float64)
        if taps.size != L + 1:
            raise ValueError("tap count does not match graph memory")
        n_cfg = 1 << (L + 1)
        bits = (np.arange(n_cfg)[:, None] >> np.arange(L + 1)[None]) & 1
        C = 1.0 - 2.0 * bits  # C[c, l] = symbol at offset l
        out = C @ taps
        n_fn = graph.num_fn
        tab = np.full((n_fn, L + 1), -1, dtype=np.int64)
        tab[graph.edge_fn, graph.edge_role] = np.arange(graph.num_edges)
        # configs that put -1 on a pruned (known +1) position are impossible
        mask = np.where(((tab[:, None, :] < 0) & (C[None] < 0)).any(axis=2), _MASKED, 0.0)  # (n_fn, n_cfg)
        obs = y[graph.fn_payload]  # (n_fn, B)
        metric = -((obs[:, :, None] - out[None, None]) ** 2) / (2 * sigma2[None, :, None])
        self.base = metric + mask[:, None, :]
        self.C = C
        self.half_ct = C.T / 2.0
        self.tab = np.where(tab < 0, graph.num_edges, tab)
        self.pos = [np.flatnonzero(C[:, l] > 0) for l in range(L + 1)]
        self.neg = [np.flatnonzero(C[:, l] < 0) for l in range(L + 1)]
        self.flat_index = graph.edge_fn * (L + 1) + graph.edge_role
        self.exact = exact
        self.L = L

    def __call__(self, v2f):
        batch = v2f.shape[1]
        padded = T.concat([v2f, np.zeros((1, batch))], axis=0)
        lam = T.take(padded, self.tab, axis=0)  # (n_fn, L+1, B)
        lam = T.transpose(lam, (0, 2, 1))  # (n_fn, B, L+1)
        total = T.add(self.base, T.matmul(lam, self.half_ct))
        red = T.logsumexp if self.exact else T.tmax
        slots = []
        for l in range(self.L + 1):
            own = T.mul(T.getitem(lam, (Ellipsis, slice(l, l + 1))), self.C[:, l] / 2.0)
            ext = T.sub(total, own)
            plus = red(T.take(ext, self.pos[l], axis=2), axis=-1)
            minus = red(T.take(ext, self.neg[l], axis=2), axis=-1)
            slots.append(T.sub(plus, minus))
        stacked = T.stack(slots, axis=1)  # (n_fn, L+1, B)
        flat = T.reshape(stacked, (-1, batch))
        return T.take(flat, self.flat_index, axis=0)


class _UfgKernel:
    """FN->VN updates on an Ungerboeck graph (self and pairwise factors)."""

    def __init__(self, graph: FactorGraph, data: UngerboeckData, sigma2: np.ndarray, exact: bool):
        E = graph.num_edges
        kind = graph.fn_kind[graph.edge_fn]
        self_e = np.flatnonzero(kind == FnKind.UFG_SELF)
        pair_e = np.flatnonzero(kind == FnKind.UFG_PAIR)
        chi = np.asarray(data.chi, dtype=np.float64)
        if chi.ndim == 1:
            chi = chi[None]
        chi = chi.T  # (N, B)
        # ln F(+1) - ln F(-1) with ln F(x) = (2 chi x - G_kk x^2) / (2 sigma^2)
        g_self = np.diag(data.gram)[graph.edge_vn[self_e]]
        fp = (2 * chi[graph.edge_vn[self_e]] - g_self[:, None]) / (2 * sigma2)
        fm = (-2 * chi[graph.edge_vn[self_e]] - g_self[:, None]) / (2 * sigma2)
        self.self_msg = fp - fm
        # partner edge of each pair edge; pair factor ln I = -G_ij x_i x_j / sigma^2
        partner = np.full(E, -1)
        for p_fn in np.unique(graph.edge_fn[pair_e]):
            es = np.flatnonzero(graph.edge_fn == p_fn)
            partner[es[0]], partner[es[1]] = es[1], es[0]
        pairs = graph.pairs[graph.fn_payload[graph.edge_fn[pair_e]]]
        g = data.gram[pairs[:, 0], pairs[:, 1]]
        self.coupling = (g[:, None] / sigma2[None, :])  # (P_e, B)
        self.self_e = self_e
        self.pair_e = pair_e
        self.partner = partner[pair_e]
        order = np.concatenate([self_e, pair_e])
        self.unperm = np.argsort(order)
        self.exact = exact

    def __call__(self, v2f):
        lam = T.scale(T.take(v2f, self.partner, axis=0), 0.5)
        c = self.coupling
        # x_i = +1: x_j = +1 -> -c + lam/2 ; x_j = -1 -> +c - lam/2
        plus = T.stack([T.sub(lam, c), T.sub(c, lam)], axis=-1)
        minus = T.stack([T.add(lam, c), T.sub(T.neg(c), lam)], axis=-1)
        red = T.logsumexp if self.exact else T.tmax
        pair_msg = T.sub(red(plus, axis=-1), red(minus, axis=-1))
        both = T.concat([self.self_msg, pair_msg], axis=0)
        return T.take(both, self.unperm, axis=0)


def _kernel(graph, obs, taps, sigma2, exact):
    kinds = set(graph.kinds())
    if kinds <= {FnKind.FFG_OBS}:
        if isinstance(obs, UngerboeckData):
            raise ValueError("Forney graph needs raw observations, not Ungerboeck statistics")
        y = np.asarray(obs, dtype=np.float64)
        y = (y[None] if y.ndim == 1 else y).T
        if y.shape[0] != graph.n_symbols + graph.memory:
            raise ValueError("observation length does not match the graph")
        return _FfgKernel(graph, taps, y, sigma2, exact), y.shape[1]
    if kinds <= {FnKind.UFG_SELF, FnKind.UFG_PAIR}:
        if not isinstance(obs, UngerboeckData):
            obs = UngerboeckData.from_observations(taps, obs, graph.n_symbols)
        chi = np.asarray(obs.chi)
        batch = 1 if chi.ndim == 1 else chi.shape[0]
        return _UfgKernel(graph, obs, sigma2, exact), batch
    raise ValueError(f"BP equalization needs an FFG or UFG, got FN kinds {sorted(k.label for k in kinds)}")


def bp_messages(graph: FactorGraph, obs, noise_variance, taps=None, apriori=None, iters: int = 5,
                weights=None, damping: float = 0.0, exact: bool = True, prior_tensor=None):
    """Run (neural) BP and return the per-iteration APP LLRs as tensors of shape (N, B).

    ``weights`` (optional) has shape (iters, num_edges); FN->VN messages are
    scaled by it before VN aggregation.  ``damping`` mixes the previous
    FN->VN message into the new one.  ``prior_tensor`` replaces ``apriori``
    with an items-first (N, B) tensor so gradients can flow into it.
    """
    if iters < 1:
        raise ValueError("BP needs at least one iteration")
    if weights is not None and T._data(weights).shape != (iters, graph.num_edges):
        raise ValueError(f"weights must have shape {(iters, graph.num_edges)}, got {T._data(weights).shape}")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    sigma2_in = np.asarray(noise_variance, dtype=np.float64)
    if np.any(sigma2_in <= 0):
        raise ValueError("noise variance must be positive")
    # batch size is resolved by the kernel; build it with a provisional sigma first
    probe_batch = _infer_batch(obs)
    sigma2 = np.broadcast_to(sigma2_in, (probe_batch,)).astype(np.float64)
    kernel, batch = _kernel(graph, obs, taps, sigma2, exact)
    N = graph.num_vn
    if prior_tensor is not None:
        prior = prior_tensor
    else:
        prior = np.zeros((N, batch)) if apriori is None else _as_items_first(apriori, N, batch)
    table = graph.vn_table(graph.kinds())
    # vn_table indexes the per-kind concatenation; map it back to edge ids
    order = np.concatenate([graph.edge_ids(k) for k in graph.kinds()])
    vn_tab = np.where(table >= 0, order[np.maximum(table, 0)], -1)
    edge_vn = graph.edge_vn

    v2f = T.take(prior, edge_vn, axis=0) if isinstance(prior, T.Tensor) else T.Tensor(prior[edge_vn])
    f2v_prev = None
    outputs = []
    for t in range(iters):
        f2v = kernel(v2f)
        f2v = T.clip(f2v, -MESSAGE_MAX, MESSAGE_MAX)
        if damping and f2v_prev is not None:
            f2v = T.add(T.scale(f2v, 1.0 - damping), T.scale(f2v_prev, damping))
        f2v_prev = f2v
        if weights is not None:
            w = T.getitem(weights, t) if isinstance(weights, T.Tensor) else np.asarray(weights)[t]
            f2v = T.mul(f2v, T.reshape(w, (-1, 1)) if isinstance(w, T.Tensor) else np.asarray(w)[:, None])
        app = T.add(prior, T.table_sum(f2v, vn_tab))
        v2f = T.clip(T.sub(T.take(app, edge_vn, axis=0), f2v), -MESSAGE_MAX, MESSAGE_MAX)
        outputs.append(T.clip(app, -LLR_MAX, LLR_MAX))
    return outputs


def _infer_batch(obs) -> int:
    if isinstance(obs, UngerboeckData):
        chi = np.asarray(obs.chi)
        return 1 if chi.ndim == 1 else chi.shape[0]
    y = np.asarray(obs)
    return 1 if y.ndim == 1 else y.shape[0]


def bp_equalize(graph: FactorGraph, obs, noise_variance, taps=None, apriori=None, iters: int = 5,
                damping: float = 0.0, exact: bool = True) -> list[np.ndarray]:
    """Per-iteration APP LLRs of plain BP, each of shape (B, N) (or (N,) for one frame)."""
    outs = bp_messages(graph, obs, noise_variance, taps, apriori, iters, None, damping, exact)
    return _finish(outs, obs)


def nbp_equalize(graph: FactorGraph, obs, noise_variance, weights, taps=None, apriori=None,
                 damping: float = 0.0, exact: bool = True) -> list[np.ndarray]:
    """Neural BP: like :func:`bp_equalize` with per-iteration, per-edge FN->VN weights."""
    w = np.asarray(T._data(weights), dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weights must have shape (iters, num_edges)")
    outs = bp_messages(graph, obs, noise_variance, taps, apriori, w.shape[0], w, damping, exact)
    return _finish(outs, obs)


def _finish(outs, obs) -> list[np.ndarray]:
    single = _infer_batch(obs) == 1 and np.ndim(obs.chi if isinstance(obs, UngerboeckData) else obs) == 1
    res = [o.data.T for o in outs]
    return [r[0] for r in res] if single else res
