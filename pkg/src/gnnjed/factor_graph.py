"""Bipartite factor graphs for equalization (Forney / Ungerboeck) and decoding.

A graph stores factor nodes (FNs) with a kind and a payload index, variable
nodes (VNs) and a FN-major edge list.  Each edge also carries a *role*
within its FN kind:

* ``ffg_obs``: the tap offset ``l = k - i`` linking observation ``k`` to symbol ``i``
* ``ufg_self``: always 0
* ``ufg_pair``: ``2*(j - i - 1) + side`` for pair ``(i, j)``, side 0 for ``i`` and 1 for ``j``
* ``check``: always 0

Roles let the learned receivers give each kind of edge its own attribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class FnKind(IntEnum):
    FFG_OBS = 0
    UFG_SELF = 1
    UFG_PAIR = 2
    CHECK = 3

    @property
    def label(self) -> str:
        return self.name.lower()


EQUALIZER_KINDS = (FnKind.FFG_OBS, FnKind.UFG_SELF, FnKind.UFG_PAIR)


@dataclass(eq=False)
class FactorGraph:
    num_vn: int
    fn_kind: np.ndarray
    fn_payload: np.ndarray
    edge_fn: np.ndarray
    edge_vn: np.ndarray
    edge_role: np.ndarray
    vn_symbol: np.ndarray  # transmitted symbol index per VN, -1 if punctured
    memory: int = 0
    n_symbols: int = 0
    pairs: np.ndarray | None = None  # (P, 2) endpoints of ufg_pair payloads
    virtual_vn: int = 0  # pruned boundary VNs
    virtual_fn: int = 0  # FNs that only touched pruned VNs
    virtual_edges: int = 0  # edges removed by pruning
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.fn_kind = np.asarray(self.fn_kind, dtype=np.int64)
        self.fn_payload = np.asarray(self.fn_payload, dtype=np.int64)
        self.edge_fn = np.asarray(self.edge_fn, dtype=np.int64)
        self.edge_vn = np.asarray(self.edge_vn, dtype=np.int64)
        self.edge_role = np.asarray(self.edge_role, dtype=np.int64)
        self.vn_symbol = np.asarray(self.vn_symbol, dtype=np.int64)
        E = self.edge_fn.size
        if not (self.edge_vn.size == E and self.edge_role.size == E):
            raise ValueError("edge arrays must have equal length")
        if self.fn_kind.size != self.fn_payload.size:
            raise ValueError("fn_kind and fn_payload must have equal length")
        if self.vn_symbol.size != self.num_vn:
            raise ValueError("vn_symbol must have one entry per VN")
        if E:
            if self.edge_fn.min() < 0 or self.edge_fn.max() >= self.num_fn:
                raise ValueError("edge references an unknown FN")
            if self.edge_vn.min() < 0 or self.edge_vn.max() >= self.num_vn:
                raise ValueError("edge references an unknown VN")
            keys = self.edge_fn * max(self.num_vn, 1) + self.edge_vn
            if np.unique(keys).size != E:
                raise ValueError("duplicate (FN, VN) edge")

    # -- sizes ------------------------------------------------------------------
    @property
    def num_fn(self) -> int:
        return self.fn_kind.size

    @property
    def num_edges(self) -> int:
        return self.edge_fn.size

    @property
    def num_nodes(self) -> int:
        return self.num_vn + self.num_fn

    def size(self) -> int:
        """Nodes plus edges of the graph as built (boundary VNs pruned)."""
        return self.num_nodes + self.num_edges

    def accumulated_size(self) -> int:
        """Nodes plus edges including the pruned boundary (virtual) VNs."""
        return self.size() + self.virtual_vn + self.virtual_fn + self.virtual_edges

    def kinds(self) -> list[FnKind]:
        return [FnKind(k) for k in np.unique(self.fn_kind)]

    def fn_ids(self, kind) -> np.ndarray:
        return np.flatnonzero(self.fn_kind == int(kind))

    def edge_ids(self, kind) -> np.ndarray:
        """Edges whose FN has ``kind``, in edge-list order."""
        return np.flatnonzero(self.fn_kind[self.edge_fn] == int(kind))

    def num_roles(self, kind) -> int:
        e = self.edge_ids(kind)
        return int(self.edge_role[e].max()) + 1 if e.size else 0

    def fn_degree(self) -> np.ndarray:
        return np.bincount(self.edge_fn, minlength=self.num_fn)

    def vn_degree(self, kinds=None) -> np.ndarray:
        e = self._edges_of(kinds)
        return np.bincount(self.edge_vn[e], minlength=self.num_vn)

    def _edges_of(self, kinds):
        if kinds is None:
            return np.arange(self.num_edges)
        kinds = [int(k) for k in kinds]
        return np.flatnonzero(np.isin(self.fn_kind[self.edge_fn], kinds))

    # -- adjacency ----------------------------------------------------------------
    def fn_edges(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.edge_fn == j)

    def vn_edges(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.edge_vn == i)

    def neighbors_of_fn(self, j: int) -> np.ndarray:
        return np.sort(self.edge_vn[self.edge_fn == j])

    def neighbors_of_vn(self, i: int) -> np.ndarray:
        return np.sort(self.edge_fn[self.edge_vn == i])

    def fn_table(self, kind) -> tuple[np.ndarray, np.ndarray]:
        """Padded incidence table for the FNs of ``kind``.

        Returns ``(fn_ids, table)``; ``table[a, s]`` is the position (within
        :meth:`edge_ids` of the kind) of the ``s``-th edge of FN ``fn_ids[a]``,
        ordered by VN index, or -1 for padding.
        """
        key = ("fn_table", int(kind))
        if key not in self._cache:
            fns = self.fn_ids(kind)
            eids = self.edge_ids(kind)
            local = np.full(self.num_fn, -1)
            local[fns] = np.arange(fns.size)
            self._cache[key] = (fns, _padded_table(local[self.edge_fn[eids]], self.edge_vn[eids], fns.size))
        return self._cache[key]

    def vn_table(self, kinds) -> np.ndarray:
        """Padded table of incoming edges per VN restricted to ``kinds``.

        Entries index the concatenation of ``edge_ids(k)`` for ``k`` in
        ``kinds`` (in the given order); each row is ordered by FN index.
        """
        kinds = tuple(int(k) for k in kinds)
        key = ("vn_table", kinds)
        if key not in self._cache:
            eids = np.concatenate([self.edge_ids(k) for k in kinds]) if kinds else np.zeros(0, np.int64)
            self._cache[key] = _padded_table(self.edge_vn[eids], self.edge_fn[eids], self.num_vn)
        return self._cache[key]

    def shuffled(self, rng: np.random.Generator) -> "FactorGraph":
        """Same graph with the edge list in random order (for invariance tests)."""
        p = rng.permutation(self.num_edges)
        return FactorGraph(self.num_vn, self.fn_kind, self.fn_payload, self.edge_fn[p], self.edge_vn[p],
                           self.edge_role[p], self.vn_symbol, self.memory, self.n_symbols, self.pairs,
                           self.virtual_vn, self.virtual_fn, self.virtual_edges)


def _padded_table(owner: np.ndarray, order_key: np.ndarray, n_rows: int) -> np.ndarray:
    """Group positions 0..len(owner)-1 by ``owner``, sorted by ``order_key``."""
    idx = np.lexsort((order_key, owner))
    counts = np.bincount(owner, minlength=n_rows) if owner.size else np.zeros(n_rows, np.int64)
    width = int(counts.max()) if counts.size and counts.max() > 0 else 0
    table = np.full((n_rows, width), -1, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]) if n_rows else np.zeros(0, np.int64)
    sorted_owner = owner[idx]
    slot = np.arange(idx.size) - starts[sorted_owner] if idx.size else idx
    table[sorted_owner, slot] = idx
    return table


def build_ffg(n: int, memory: int) -> FactorGraph:
    """Forney factor graph for ``n`` symbols and channel memory ``L``.

    One FN per observation ``k = 0..n+L-1`` connected to symbols
    ``k-L..k`` inside ``[0, n)``; the 2L boundary VNs are pruned.
    """
    if n < 1 or memory < 0:
        raise ValueError("need n >= 1 and memory >= 0")
    L = memory
    efn, evn, erole = [], [], []
    for k in range(n + L):
        for i in range(max(0, k - L), min(n - 1, k) + 1):
            efn.append(k)
            evn.append(i)
            erole.append(k - i)
    n_fn = n + L
    return FactorGraph(
        num_vn=n,
        fn_kind=np.full(n_fn, FnKind.FFG_OBS),
        fn_payload=np.arange(n_fn),
        edge_fn=efn, edge_vn=evn, edge_role=erole,
        vn_symbol=np.arange(n),
        memory=L, n_symbols=n,
        virtual_vn=2 * L, virtual_fn=0,
        virtual_edges=(n + L) * (L + 1) - len(efn),
    )


def build_ufg(n: int, memory: int) -> FactorGraph:
    """Ungerboeck factor graph: one self FN per symbol and one FN per pair
    ``(i, j)`` with ``0 < j - i <= L`` (stored once)."""
    if n < 1 or memory < 0:
        raise ValueError("need n >= 1 and memory >= 0")
    L = memory
    pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, min(n, i + L + 1))], dtype=np.int64).reshape(-1, 2)
    efn = list(range(n))
    evn = list(range(n))
    erole = [0] * n
    for p, (i, j) in enumerate(pairs):
        role = 2 * (j - i - 1)
        efn += [n + p, n + p]
        evn += [i, j]
        erole += [role, role + 1]
    kinds = np.concatenate([np.full(n, FnKind.UFG_SELF), np.full(len(pairs), FnKind.UFG_PAIR)])
    payload = np.concatenate([np.arange(n), np.arange(len(pairs))])
    # unpruned graph: n + 2L VNs, each with a self FN, pairs within distance L
    m = n + 2 * L
    full_pairs = m * L - L * (L + 1) // 2
    return FactorGraph(
        num_vn=n, fn_kind=kinds, fn_payload=payload,
        edge_fn=efn, edge_vn=evn, edge_role=erole,
        vn_symbol=np.arange(n), memory=L, n_symbols=n, pairs=pairs,
        virtual_vn=2 * L,
        virtual_fn=(m - n) + (full_pairs - len(pairs)),
        virtual_edges=(m - n) + 2 * (full_pairs - len(pairs)),
    )


def build_tanner(code) -> FactorGraph:
    rows, cols = code.edges()
    vn_symbol = np.full(code.n, -1)
    vn_symbol[code.transmitted_positions] = np.arange(code.n_transmitted)
    return FactorGraph(
        num_vn=code.n, fn_kind=np.full(code.m, FnKind.CHECK), fn_payload=np.arange(code.m),
        edge_fn=rows, edge_vn=cols, edge_role=np.zeros(rows.size, np.int64), vn_symbol=vn_symbol,
    )


def build_joint(eq_graph: FactorGraph, code, interleaver=None) -> FactorGraph:
    """Join an equalizer graph and the code's Tanner graph on shared VNs.

    Symbol ``k`` carries transmitted code bit ``interleaver.perm[k]``; the
    equalizer FNs attach to that code-bit VN.  Punctured VNs only see checks.
    """
    n_tx = code.n_transmitted
    if eq_graph.num_vn != n_tx:
        raise ValueError(f"equalizer graph has {eq_graph.num_vn} VNs but the code transmits {n_tx} bits")
    perm = np.arange(n_tx) if interleaver is None else np.asarray(interleaver.perm)
    if perm.size != n_tx:
        raise ValueError("interleaver length mismatch")
    tx_pos = code.transmitted_positions
    symbol_to_vn = tx_pos[perm]
    vn_symbol = np.full(code.n, -1)
    vn_symbol[symbol_to_vn] = np.arange(n_tx)

    e_fn, e_vn, e_role = [], [], []
    # equalizer edges, re-sorted by new VN id within each FN
    new_vn = symbol_to_vn[eq_graph.edge_vn]
    order = np.lexsort((new_vn, eq_graph.edge_fn))
    e_fn.append(eq_graph.edge_fn[order])
    e_vn.append(new_vn[order])
    e_role.append(eq_graph.edge_role[order])
    rows, cols = code.edges()
    e_fn.append(rows + eq_graph.num_fn)
    e_vn.append(cols)
    e_role.append(np.zeros(rows.size, np.int64))
    return FactorGraph(
        num_vn=code.n,
        fn_kind=np.concatenate([eq_graph.fn_kind, np.full(code.m, FnKind.CHECK)]),
        fn_payload=np.concatenate([eq_graph.fn_payload, np.arange(code.m)]),
        edge_fn=np.concatenate(e_fn), edge_vn=np.concatenate(e_vn), edge_role=np.concatenate(e_role),
        vn_symbol=vn_symbol, memory=eq_graph.memory, n_symbols=eq_graph.n_symbols, pairs=eq_graph.pairs,
        virtual_vn=eq_graph.virtual_vn, virtual_fn=eq_graph.virtual_fn, virtual_edges=eq_graph.virtual_edges,
    )


@dataclass
class UngerboeckData:
    """Matched-filter statistics restricted to the data symbols.

    ``gram`` is the (N, N) block of H^T H over data columns and ``chi`` is
    H^T y for the data symbols with the known boundary symbols' interference
    already subtracted, so the data-symbol likelihood is
    ``exp((2 chi^T x - x^T G x) / (2 sigma^2))``.
    """

    gram: np.ndarray
    chi: np.ndarray  # (..., N)

    @classmethod
    def from_observations(cls, taps, y, n: int) -> "UngerboeckData":
        from .channel import BOUNDARY_SYMBOL, ChannelModel, toeplitz

        taps = np.asarray(taps, dtype=np.float64)
        L = taps.size - 1
        H = toeplitz(ChannelModel(taps), n)
        G_full = H.T @ H
        chi_full = np.asarray(y, dtype=np.float64) @ H
        data = slice(L, L + n)
        known = np.r_[0:L, L + n: n + 2 * L]
        b = np.full(known.size, BOUNDARY_SYMBOL)
        chi = chi_full[..., data] - G_full[data][:, known] @ b
        return cls(G_full[data, data], chi)

    def pair_values(self, pairs: np.ndarray) -> np.ndarray:
        return self.gram[pairs[:, 0], pairs[:, 1]]
