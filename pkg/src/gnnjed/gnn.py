"""Graph neural network receivers on factor graphs.

Each node kind and each directed edge kind owns one MLP, shared over all
nodes/edges of that kind and over iterations.  One iteration over a set of
active FN kinds runs four phases:

1. FN update   ``s_F <- f_F(s_F, mean(m_{V->F}), g_F)``
2. FN->VN edges ``m_{F->V} <- f_{F->V}(s_F, s_V, g_{F->V}[role])``
3. VN update   ``s_V <- f_V(s_V, mean(m_{F->V} over active kinds), g_V)``
4. VN->FN edges ``m_{V->F} <- f_{V->F}(s_V, s_F, g_{V->F}[role])``

FN states start from a linear projection of the channel observation seen by
the FN; VN states, check FN states and all messages start at zero.  After
every VN update the VN states are read out as logits ``v^T s_V`` with
P(bit = 1) = sigmoid(logit), i.e. LLR (log P(0)/P(1)) = -logit.

Tensors use an items-first layout ``(num_items, batch, d)``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .factor_graph import FactorGraph, FnKind, UngerboeckData
from .nn import tensor as T
from .nn.layers import Mlp
from .nn.tensor import Tensor

HIDDEN = (64, 64)


@dataclass(frozen=True)
class ScheduleSpec:
    """``(outer, inner)``: ``inner`` of length 1 is flooding, ``(eq, dec)`` is sequential."""

    outer: int
    inner: tuple = (1,)

    def __post_init__(self):
        inner = tuple(int(i) for i in np.atleast_1d(self.inner))
        object.__setattr__(self, "inner", inner)
        if self.outer < 0:
            raise ValueError("outer iterations must be >= 0")
        if len(inner) not in (1, 2) or min(inner) < 0:
            raise ValueError(f"invalid inner schedule {inner}")
        if len(inner) == 1 and inner[0] != 1:
            raise ValueError("flooding schedules use a single inner iteration, e.g. (10, 1)")
        if len(inner) == 2 and sum(inner) == 0 and self.outer > 0:
            raise ValueError("sequential schedule performs no iterations")

    @property
    def flooding(self) -> bool:
        return len(self.inner) == 1

    @property
    def num_readouts(self) -> int:
        return self.outer * sum(self.inner)

    @classmethod
    def parse(cls, text: str) -> "ScheduleSpec":
        """Parse ``"10,1"``, ``"(10, 1)"`` or ``"3,[3,5]"``."""
        cleaned = text.replace("(", "").replace(")", "").replace("[", " ").replace("]", " ").replace(",", " ")
        nums = [int(t) for t in cleaned.split()]
        if len(nums) not in (2, 3):
            raise ValueError(f"cannot parse schedule {text!r}")
        return cls(nums[0], tuple(nums[1:]))

    def __str__(self):
        if self.flooding:
            return f"({self.outer},{self.inner[0]})"
        return f"({self.outer},[{self.inner[0]},{self.inner[1]}])"


def _param_rng(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(key.encode())])


class GnnParams:
    """All trainable tensors of a GNN receiver.

    ``roles`` maps each FN kind present to its number of edge roles.  Node
    attributes start at zero; edge attributes and the projection vectors are
    drawn from N(0, 0.1^2); MLP weights use Glorot-uniform initialization.
    Every tensor is seeded from ``(seed, name)``, so adding kinds does not
    change the initialization of the others.
    """

    def __init__(self, roles: dict, feature_size: int = 16, hidden=HIDDEN, seed: int = 0,
                 dtype=np.float32, zero: bool = False):
        self.roles = {FnKind(k): int(v) for k, v in roles.items()}
        self.d = int(feature_size)
        self.hidden = tuple(int(h) for h in hidden)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        d = self.d
        widths = (3 * d,) + self.hidden + (d,)
        self.mlps: dict[str, Mlp] = {}
        self.vectors: dict[str, Tensor] = {}

        def mlp(key):
            self.mlps[key] = Mlp(widths, _param_rng(seed, key), dtype=self.dtype, name=key, zero=zero)

        def vec(key, shape, std):
            data = np.zeros(shape) if std == 0 or zero else _param_rng(seed, key).normal(0.0, std, size=shape)
            self.vectors[key] = Tensor(data.astype(self.dtype), requires_grad=True, name=key)

        mlp("vn")
        vec("g/vn", (d,), 0.0)
        vec("v", (d,), 0.1)
        for kind in sorted(self.roles):
            label = kind.label
            for part in ("fn", "f2v", "v2f"):
                mlp(f"{part}/{label}")
            vec(f"g/fn/{label}", (d,), 0.0)
            vec(f"g/f2v/{label}", (max(self.roles[kind], 1), d), 0.1)
            vec(f"g/v2f/{label}", (max(self.roles[kind], 1), d), 0.1)
            if kind != FnKind.CHECK:
                vec(f"w/{label}", (d,), 0.1)

    @classmethod
    def for_graph(cls, graph: FactorGraph, feature_size: int = 16, hidden=HIDDEN, seed: int = 0,
                  dtype=np.float32, zero: bool = False) -> "GnnParams":
        roles = {k: graph.num_roles(k) for k in graph.kinds()}
        return cls(roles, feature_size, hidden, seed, dtype, zero)

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for key in sorted(self.mlps):
            out.update(self.mlps[key].parameters())
        for key in sorted(self.vectors):
            out[key] = self.vectors[key]
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors().items()}

    def load_state_dict(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        own = self.tensors()
        missing = sorted(set(own) - set(arrays))
        extra = sorted(set(arrays) - set(own))
        if strict and (missing or extra):
            raise KeyError(f"parameter mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for k, t in own.items():
            if k in arrays:
                arr = np.asarray(arrays[k])
                if arr.shape != t.shape:
                    raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {t.shape}")
                t.data = arr.astype(self.dtype).copy()

    def spec(self) -> dict:
        return {"feature_size": self.d, "hidden": list(self.hidden), "seed": self.seed,
                "dtype": self.dtype.name, "roles": {k.label: v for k, v in sorted(self.roles.items())}}

    @classmethod
    def from_spec(cls, spec: dict) -> "GnnParams":
        roles = {FnKind[k.upper()]: v for k, v in spec["roles"].items()}
        return cls(roles, spec["feature_size"], spec["hidden"], spec.get("seed", 0), spec.get("dtype", "float32"))

    def copy(self) -> "GnnParams":
        other = GnnParams(self.roles, self.d, self.hidden, self.seed, self.dtype)
        other.load_state_dict(self.state_dict())
        return other

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors().values()))


def gnn_inputs(graph: FactorGraph, observations, taps=None) -> dict:
    """Scalar input per equalizer FN, keyed by FN kind, each of shape (n_fn_kind, B).

    Forney FNs see their observation ``y_k``; Ungerboeck self FNs see
    ``chi_i`` and pair FNs see ``G_ij`` (same for the whole batch).
    """
    kinds = graph.kinds()
    out = {}
    if FnKind.FFG_OBS in kinds:
        y = np.atleast_2d(np.asarray(observations, dtype=np.float64)).T  # (N+L, B)
        out[FnKind.FFG_OBS] = y[graph.fn_payload[graph.fn_ids(FnKind.FFG_OBS)]]
    if FnKind.UFG_SELF in kinds or FnKind.UFG_PAIR in kinds:
        data = observations if isinstance(observations, UngerboeckData) else \
            UngerboeckData.from_observations(taps, observations, graph.n_symbols)
        chi = np.atleast_2d(data.chi).T
        out[FnKind.UFG_SELF] = chi[graph.fn_payload[graph.fn_ids(FnKind.UFG_SELF)]]
        pairs = graph.pairs[graph.fn_payload[graph.fn_ids(FnKind.UFG_PAIR)]]
        gvals = data.gram[pairs[:, 0], pairs[:, 1]] if len(pairs) else np.zeros(0)
        out[FnKind.UFG_PAIR] = np.repeat(gvals[:, None], chi.shape[1], axis=1)
    return out


@dataclass
class GnnState:
    vn: Tensor
    fn: dict
    v2f: dict
    f2v: dict


class _KindIndex:
    def __init__(self, graph: FactorGraph, kind: FnKind):
        self.kind = kind
        self.fns = graph.fn_ids(kind)
        self.eids = graph.edge_ids(kind)
        local = np.full(graph.num_fn, -1)
        local[self.fns] = np.arange(self.fns.size)
        self.edge_fn = local[graph.edge_fn[self.eids]]
        self.edge_vn = graph.edge_vn[self.eids]
        self.edge_role = graph.edge_role[self.eids]
        self.fn_table = graph.fn_table(kind)[1]


class GnnReceiver:
    """Runs a :class:`GnnParams` set on one graph (FFG, UFG or joint)."""

    def __init__(self, graph: FactorGraph, params: GnnParams):
        self.graph = graph
        self.params = params
        self.kinds = sorted(graph.kinds())
        for k in self.kinds:
            if k not in params.roles:
                raise ValueError(f"parameters have no weights for FN kind {k.label}")
            if graph.num_roles(k) > max(params.roles[k], 1):
                raise ValueError(f"graph uses {graph.num_roles(k)} edge roles for {k.label}, parameters have {params.roles[k]}")
        self.index = {k: _KindIndex(graph, k) for k in self.kinds}
        self.eq_kinds = [k for k in self.kinds if k != FnKind.CHECK]
        self.check_kinds = [k for k in self.kinds if k == FnKind.CHECK]

    # -- phases -------------------------------------------------------------------
    def init_state(self, inputs: dict, batch: int | None = None) -> GnnState:
        p = self.params
        d, dt = p.d, p.dtype
        if batch is None:
            batch = next(iter(inputs.values())).shape[1] if inputs else 1
        fn = {}
        for k in self.kinds:
            n_k = self.index[k].fns.size
            if k == FnKind.CHECK:
                fn[k] = Tensor(np.zeros((n_k, batch, d), dtype=dt))
                continue
            x = np.asarray(inputs[k], dtype=dt)
            if x.shape != (n_k, batch):
                raise ValueError(f"input for {k.label} has shape {x.shape}, expected {(n_k, batch)}")
            fn[k] = T.mul(x[:, :, None], p.vectors[f"w/{k.label}"])
        zeros = lambda n: Tensor(np.zeros((n, batch, d), dtype=dt))
        return GnnState(
            vn=zeros(self.graph.num_vn),
            fn=fn,
            v2f={k: zeros(self.index[k].eids.size) for k in self.kinds},
            f2v={k: zeros(self.index[k].eids.size) for k in self.kinds},
        )

    def update_fn(self, state: GnnState, kind) -> None:
        p, ix = self.params, self.index[kind]
        agg = T.table_mean(state.v2f[kind], ix.fn_table)
        state.fn[kind] = p.mlps[f"fn/{kind.label}"](state.fn[kind], agg, p.vectors[f"g/fn/{kind.label}"])

    def _edge_attr(self, key, ix):
        g = T.take(self.params.vectors[key], ix.edge_role, axis=0)  # (E, d)
        return T.reshape(g, (ix.edge_role.size, 1, self.params.d))

    def update_f2v(self, state: GnnState, kind) -> None:
        p, ix = self.params, self.index[kind]
        src = T.take(state.fn[kind], ix.edge_fn, axis=0)
        dst = T.take(state.vn, ix.edge_vn, axis=0)
        state.f2v[kind] = p.mlps[f"f2v/{kind.label}"](src, dst, self._edge_attr(f"g/f2v/{kind.label}", ix))

    def update_vn(self, state: GnnState, active) -> None:
        p = self.params
        active = [k for k in self.kinds if k in active]
        if active:
            msgs = state.f2v[active[0]] if len(active) == 1 else T.concat([state.f2v[k] for k in active], axis=0)
            agg = T.table_mean(msgs, self.graph.vn_table(active))
        else:
            agg = Tensor(np.zeros(state.vn.shape, dtype=p.dtype))
        state.vn = p.mlps["vn"](state.vn, agg, p.vectors["g/vn"])

    def update_v2f(self, state: GnnState, kind) -> None:
        p, ix = self.params, self.index[kind]
        src = T.take(state.vn, ix.edge_vn, axis=0)
        dst = T.take(state.fn[kind], ix.edge_fn, axis=0)
        state.v2f[kind] = p.mlps[f"v2f/{kind.label}"](src, dst, self._edge_attr(f"g/v2f/{kind.label}", ix))

    def readout(self, state: GnnState) -> Tensor:
        """Logits ``v^T s_V`` of shape (num_vn, B)."""
        v = T.reshape(self.params.vectors["v"], (self.params.d, 1))
        out = T.matmul(state.vn, v)
        return T.reshape(out, out.shape[:2])

    def iteration(self, state: GnnState, active) -> Tensor:
        active = [k for k in self.kinds if k in active]
        for k in active:
            self.update_fn(state, k)
        for k in active:
            self.update_f2v(state, k)
        self.update_vn(state, active)
        for k in active:
            self.update_v2f(state, k)
        return self.readout(state)

    # -- schedules ----------------------------------------------------------------
    def run(self, inputs: dict, schedule: ScheduleSpec, batch: int | None = None) -> list[Tensor]:
        """Per-readout logits (num_vn, B) for the given schedule."""
        state = self.init_state(inputs, batch)
        outs = []
        for _ in range(schedule.outer):
            if schedule.flooding:
                outs.append(self.iteration(state, self.kinds))
            else:
                n_eq, n_dec = schedule.inner
                for _ in range(n_eq):
                    outs.append(self.iteration(state, self.eq_kinds))
                for _ in range(n_dec):
                    outs.append(self.iteration(state, self.check_kinds))
        return outs

    def run_iterations(self, inputs: dict, n_iter: int, batch: int | None = None) -> list[Tensor]:
        return self.run(inputs, ScheduleSpec(n_iter, (1,)), batch)


def run_equalizer(graph: FactorGraph, observations, params: GnnParams, n_iter: int, taps=None) -> list[Tensor]:
    """GNN equalization: ``n_iter`` flooding iterations on an FFG/UFG, logits per iteration.

    With ``n_iter = 0`` the readout of the initial (zero) VN states is returned.
    """
    if FnKind.CHECK in graph.kinds():
        raise ValueError("run_equalizer expects a graph without check nodes")
    rx = GnnReceiver(graph, params)
    inputs = gnn_inputs(graph, observations, taps)
    if n_iter == 0:
        state = rx.init_state(inputs)
        return [rx.readout(state)]
    return rx.run_iterations(inputs, n_iter)


def run_jed(graph: FactorGraph, observations, params: GnnParams, schedule: ScheduleSpec, taps=None) -> list[Tensor]:
    """Joint equalization and decoding on a joint graph, logits per readout."""
    rx = GnnReceiver(graph, params)
    return rx.run(gnn_inputs(graph, observations, taps), schedule)


def logits_to_llr(logits) -> np.ndarray:
    """(num_vn, B) logits -> (B, num_vn) LLRs in the log P(0)/P(1) convention."""
    return -np.asarray(T._data(logits), dtype=np.float64).T
