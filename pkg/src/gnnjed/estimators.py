"""Receivers with a scikit-learn style estimator interface.

``X`` is a batch of observation vectors of shape (B, N+L) (or a
:class:`~gnnjed.channel.FrameBatch`, which also carries the noise
variance).  All receivers expose

* ``fit(X=None, y=None)``: build graphs/trellises; learned receivers train
  on freshly simulated frames (``X``/``y`` are not used)
* ``decision_function(X)``: LLRs log P(0)/P(1) of the final readout
* ``staged_decision_function(X)``: LLRs after every readout
* ``predict_proba(X)``: P(bit = 1); ``predict(X)``: hard bits

Equalizers estimate the N transmitted bits; coded receivers estimate all
code bits.  The Monte-Carlo harness scores equalizers on transmitted bits
and coded receivers on the information bits.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .channel import FrameBatch
from .classic.bcjr import Trellis, bcjr_equalize
from .classic.bp import bp_equalize, nbp_equalize
from .classic.common import LLR_MAX, hard_decision
from .classic.ldpc import ldpc_bp_decode
from .classic.turbo import DuiddReceiver, symbols_to_code_llr, turbo_bcjr_bp
from .code import Interleaver, LdpcCode, load_code
from .evaluation import latency_cycles
from .factor_graph import build_joint
from .gnn import GnnParams, GnnReceiver, ScheduleSpec, gnn_inputs
from .nn.tensor import _sigmoid
from .training import (TrainConfig, equalizer_graph, extend_params, load_gnn, train_duidd,
                       train_equalizer, train_jed, train_nbp)


def _resolve_code(code) -> LdpcCode:
    return code if isinstance(code, LdpcCode) else load_code(code)


def _resolve_interleaver(interleaver, n: int) -> Interleaver:
    if interleaver is None:
        return Interleaver.identity(n)
    if isinstance(interleaver, Interleaver):
        if len(interleaver) != n:
            raise ValueError(f"interleaver has length {len(interleaver)}, expected {n}")
        return interleaver
    return Interleaver.random(n, int(interleaver))


class _Receiver(BaseEstimator):
    """Shared input validation and output conventions."""

    coded = False

    def _n_obs(self) -> int:
        return self.n_symbols_ + len(self.taps) - 1

    def _check_X(self, X, noise_variance=None):
        check_is_fitted(self, "n_symbols_")
        if isinstance(X, FrameBatch):
            noise_variance = X.noise_variance if noise_variance is None else noise_variance
            X = X.observations
        X = check_array(X, dtype=np.float64, ensure_2d=False)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self._n_obs():
            raise ValueError(f"expected {self._n_obs()} observations per frame, got {X.shape[1]}")
        sigma2 = None
        if noise_variance is not None:
            sigma2 = np.broadcast_to(np.asarray(noise_variance, dtype=np.float64), (X.shape[0],)).copy()
            if np.any(sigma2 <= 0):
                raise ValueError("noise variance must be positive")
        elif self._needs_noise:
            raise ValueError(f"{type(self).__name__} needs the noise variance")
        return X, sigma2, single

    _needs_noise = True

    def staged_decision_function(self, X, noise_variance=None) -> list[np.ndarray]:
        X, sigma2, single = self._check_X(X, noise_variance)
        stages = self._staged(X, sigma2)
        return [s[0] for s in stages] if single else stages

    def decision_function(self, X, noise_variance=None) -> np.ndarray:
        return self.staged_decision_function(X, noise_variance)[-1]

    def predict_proba(self, X, noise_variance=None) -> np.ndarray:
        return _sigmoid(-self.decision_function(X, noise_variance))

    def predict(self, X, noise_variance=None) -> np.ndarray:
        return hard_decision(self.decision_function(X, noise_variance))

    # -- Monte-Carlo protocol ------------------------------------------------------
    @property
    def receiver_id(self) -> str:
        return getattr(self, "name", None) or self._kind

    def staged_bit_llrs(self, batch: FrameBatch) -> list[np.ndarray]:
        stages = self.staged_decision_function(batch)
        if self.coded:
            return [s[:, self.code_.systematic_positions] for s in stages]
        return stages

    def target_bits(self, batch: FrameBatch) -> np.ndarray:
        return batch.info_bits if self.coded else batch.symbol_bits


class _Equalizer(_Receiver):
    def _fit_common(self, n_symbols):
        if n_symbols is None or int(n_symbols) < 1:
            raise ValueError("n_symbols must be >= 1")
        self.n_symbols_ = int(n_symbols)
        self.n_features_in_ = self._n_obs()


class BcjrEqualizer(_Equalizer):
    """Symbol-wise MAP equalization on the channel trellis."""

    _kind = "bcjr"

    def __init__(self, taps=(1.0,), n_symbols: int = 132, exact: bool = True, name: str | None = None):
        self.taps = taps
        self.n_symbols = n_symbols
        self.exact = exact
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_common(self.n_symbols)
        self.trellis_ = Trellis.from_taps(self.taps)
        return self

    def _staged(self, X, sigma2):
        app, _ = bcjr_equalize(self.trellis_, X, sigma2, exact=self.exact)
        return [np.atleast_2d(app)]

    def stage_latency(self) -> list[int]:
        return [latency_cycles("bcjr", self.n_symbols_, len(self.taps) - 1)]


class BpEqualizer(_Equalizer):
    """Belief propagation on a Forney (``ffg``) or Ungerboeck (``ufg``) graph."""

    _kind = "bp"

    def __init__(self, taps=(1.0,), n_symbols: int = 132, graph: str = "ffg", n_iter: int = 5,
                 damping: float = 0.0, exact: bool = True, name: str | None = None):
        self.taps = taps
        self.n_symbols = n_symbols
        self.graph = graph
        self.n_iter = n_iter
        self.damping = damping
        self.exact = exact
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_common(self.n_symbols)
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        self.graph_ = equalizer_graph(self.graph, self.n_symbols_, len(self.taps) - 1)
        return self

    def _staged(self, X, sigma2):
        return bp_equalize(self.graph_, X, sigma2, self.taps, iters=self.n_iter, damping=self.damping,
                           exact=self.exact)

    def stage_latency(self) -> list[int]:
        return [latency_cycles("bp", iters=t) for t in range(1, self.n_iter + 1)]


class _Trainable:
    def _train_config(self, **extra) -> TrainConfig:
        lo, hi = self.snr_range
        values = dict(batch_size=self.batch_size, learning_rate=self.learning_rate, steps=self.steps,
                      snr_lo=float(lo), snr_hi=float(hi), seed=self.seed, graph=self.graph,
                      validation_interval=self.validation_interval, checkpoint_path=self.checkpoint_path or "")
        values.update(extra)
        return TrainConfig(**values)


class NbpEqualizer(_Trainable, _Equalizer):
    """BP with learned per-iteration, per-edge FN->VN weights."""

    _kind = "nbp"

    def __init__(self, taps=(1.0,), n_symbols: int = 132, graph: str = "ffg", n_iter: int = 5, weights=None,
                 steps: int = 0, batch_size: int = 64, learning_rate: float = 1e-3, snr_range=(10.0, 14.0),
                 seed: int = 0, validation_interval: int = 1000, checkpoint_path: str | None = None,
                 exact: bool = True, name: str | None = None):
        self.taps = taps
        self.n_symbols = n_symbols
        self.graph = graph
        self.n_iter = n_iter
        self.weights = weights
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.snr_range = snr_range
        self.seed = seed
        self.validation_interval = validation_interval
        self.checkpoint_path = checkpoint_path
        self.exact = exact
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_common(self.n_symbols)
        self.graph_ = equalizer_graph(self.graph, self.n_symbols_, len(self.taps) - 1)
        init = np.ones((self.n_iter, self.graph_.num_edges)) if self.weights is None else np.asarray(self.weights)
        if init.shape != (self.n_iter, self.graph_.num_edges):
            raise ValueError(f"weights must have shape {(self.n_iter, self.graph_.num_edges)}")
        self.training_ = None
        if self.steps > 0:
            cfg = self._train_config(schedule=f"({self.n_iter},1)", n_symbols=self.n_symbols_)
            init, self.training_ = train_nbp(cfg, self.taps, init)
        self.weights_ = np.asarray(init, dtype=np.float32)
        return self

    def _staged(self, X, sigma2):
        return nbp_equalize(self.graph_, X, sigma2, self.weights_, self.taps, exact=self.exact)

    def stage_latency(self) -> list[int]:
        return [latency_cycles("nbp", iters=t) for t in range(1, self.n_iter + 1)]


class GnnEqualizer(_Trainable, _Equalizer):
    """GNN equalizer on an FFG or UFG; trains on simulated frames in :meth:`fit`."""

    _kind = "gnn"
    _needs_noise = False

    def __init__(self, taps=(1.0,), n_symbols: int = 132, graph: str = "ffg", n_iter: int = 10,
                 feature_size: int = 16, steps: int = 0, batch_size: int = 256, learning_rate: float = 1e-4,
                 snr_range=(10.0, 14.0), seed: int = 0, validation_interval: int = 1000,
                 checkpoint_path: str | None = None, init_params: GnnParams | None = None,
                 init_checkpoint: str | None = None, name: str | None = None):
        self.taps = taps
        self.n_symbols = n_symbols
        self.graph = graph
        self.n_iter = n_iter
        self.feature_size = feature_size
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.snr_range = snr_range
        self.seed = seed
        self.validation_interval = validation_interval
        self.checkpoint_path = checkpoint_path
        self.init_params = init_params
        self.init_checkpoint = init_checkpoint
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_common(self.n_symbols)
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")
        self.graph_ = equalizer_graph(self.graph, self.n_symbols_, len(self.taps) - 1)
        params = self.init_params.copy() if self.init_params is not None else None
        if self.init_checkpoint:
            params, _ = load_gnn(self.init_checkpoint, self.graph_)
        if params is None:
            params = GnnParams.for_graph(self.graph_, self.feature_size, seed=self.seed)
        self.training_ = None
        if self.steps > 0:
            cfg = self._train_config(schedule=f"({self.n_iter},1)", n_symbols=self.n_symbols_,
                                     feature_size=params.d)
            params, self.training_ = train_equalizer(cfg, self.taps, params)
        self.params_ = params
        self.receiver_ = GnnReceiver(self.graph_, params)
        return self

    def _staged(self, X, sigma2):
        inputs = gnn_inputs(self.graph_, X, self.taps)
        if self.n_iter == 0:
            state = self.receiver_.init_state(inputs, X.shape[0])
            logits = [self.receiver_.readout(state)]
        else:
            logits = self.receiver_.run_iterations(inputs, self.n_iter, X.shape[0])
        return [-np.asarray(lg.data, dtype=np.float64).T for lg in logits]

    def stage_latency(self) -> list[int]:
        return [latency_cycles("gnn", iters=t) for t in range(1, max(self.n_iter, 1) + 1)]


class _Coded(_Receiver):
    coded = True

    def _fit_code(self):
        self.code_ = _resolve_code(self.code)
        self.interleaver_ = _resolve_interleaver(self.interleaver, self.code_.n_transmitted)
        self.n_symbols_ = self.code_.n_transmitted
        self.n_features_in_ = self._n_obs()


class TurboReceiver(_Coded):
    """Iterative BCJR equalization and LDPC BP decoding (extrinsic exchange)."""

    _kind = "turbo"

    def __init__(self, taps=(1.0,), code="ldpc132", interleaver=0, outer: int = 3, inner: int = 5,
                 variant: str = "sum-product", exact: bool = True, name: str | None = None):
        self.taps = taps
        self.code = code
        self.interleaver = interleaver
        self.outer = outer
        self.inner = inner
        self.variant = variant
        self.exact = exact
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_code()
        self.trellis_ = Trellis.from_taps(self.taps)
        return self

    def _staged(self, X, sigma2):
        outs = turbo_bcjr_bp(self.trellis_, self.code_, self.interleaver_, X, sigma2, self.outer, self.inner,
                             self.variant, self.exact)
        return [o.decoder_llr for o in outs]

    def stage_latency(self) -> list[int]:
        return [latency_cycles("turbo", self.n_symbols_, len(self.taps) - 1, schedule=(t, self.inner))
                for t in range(1, self.outer + 1)]


class DisjointReceiver(_Coded):
    """A fitted equalizer followed by LDPC BP decoding of its (deinterleaved) LLRs."""

    _kind = "disjoint"

    def __init__(self, equalizer=None, code="ldpc132", interleaver=0, dec_iters: int = 10,
                 variant: str = "sum-product", name: str | None = None):
        self.equalizer = equalizer
        self.code = code
        self.interleaver = interleaver
        self.dec_iters = dec_iters
        self.variant = variant
        self.name = name

    @property
    def taps(self):
        return self.equalizer.taps

    @property
    def _needs_noise(self):
        return self.equalizer_._needs_noise

    def fit(self, X=None, y=None):
        if self.equalizer is None:
            raise ValueError("DisjointReceiver needs an equalizer")
        self._fit_code()
        eq = self.equalizer
        if not hasattr(eq, "n_symbols_"):
            eq.fit()
        if eq.n_symbols_ != self.n_symbols_:
            raise ValueError(f"equalizer handles {eq.n_symbols_} symbols, code transmits {self.n_symbols_}")
        self.equalizer_ = eq
        return self

    def _staged(self, X, sigma2):
        sym = self.equalizer_.decision_function(X, sigma2)
        ch = np.clip(symbols_to_code_llr(self.code_, self.interleaver_, np.atleast_2d(sym)), -LLR_MAX, LLR_MAX)
        return [o.llr for o in ldpc_bp_decode(self.code_, ch, self.dec_iters, self.variant, early_stop=True)]

    def stage_latency(self) -> list[int]:
        eq = self.equalizer_.stage_latency()[-1]
        return [eq + latency_cycles("ldpc-bp", iters=t) for t in range(1, self.dec_iters + 1)]


class GnnJed(_Trainable, _Coded):
    """Joint GNN equalizer and decoder on the combined graph."""

    _kind = "jed"
    _needs_noise = False

    def __init__(self, taps=(1.0,), code="ldpc132", interleaver=0, graph: str = "ffg", schedule="(10,1)",
                 feature_size: int = 16, steps: int = 0, batch_size: int = 256, learning_rate: float = 1e-4,
                 snr_range=(10.0, 13.0), seed: int = 0, validation_interval: int = 1000,
                 checkpoint_path: str | None = None, init_params: GnnParams | None = None,
                 init_checkpoint: str | None = None, name: str | None = None):
        self.taps = taps
        self.code = code
        self.interleaver = interleaver
        self.graph = graph
        self.schedule = schedule
        self.feature_size = feature_size
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.snr_range = snr_range
        self.seed = seed
        self.validation_interval = validation_interval
        self.checkpoint_path = checkpoint_path
        self.init_params = init_params
        self.init_checkpoint = init_checkpoint
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_code()
        self.schedule_ = self.schedule if isinstance(self.schedule, ScheduleSpec) else ScheduleSpec.parse(str(self.schedule))
        eq = equalizer_graph(self.graph, self.n_symbols_, len(self.taps) - 1)
        self.graph_ = build_joint(eq, self.code_, self.interleaver_)
        params = None
        if self.init_params is not None:
            params = extend_params(self.init_params, self.graph_)
        if self.init_checkpoint:
            loaded, _ = load_gnn(self.init_checkpoint)
            params = extend_params(loaded, self.graph_)
        if params is None:
            params = GnnParams.for_graph(self.graph_, self.feature_size, seed=self.seed)
        self.training_ = None
        if self.steps > 0:
            cfg = self._train_config(schedule=str(self.schedule_), feature_size=params.d)
            params, self.training_ = train_jed(cfg, self.taps, self.code_, self.interleaver_, params)
        self.params_ = params
        self.receiver_ = GnnReceiver(self.graph_, params)
        return self

    def _staged(self, X, sigma2):
        logits = self.receiver_.run(gnn_inputs(self.graph_, X, self.taps), self.schedule_, X.shape[0])
        return [-np.asarray(lg.data, dtype=np.float64).T for lg in logits]

    def stage_latency(self) -> list[int]:
        return [latency_cycles("jed", iters=t) for t in range(1, self.schedule_.num_readouts + 1)]


class DuiddEstimator(_Trainable, _Coded):
    """NBP equalizer + BP decoder with trainable weights on the handoff edges."""

    _kind = "duidd"

    def __init__(self, taps=(1.0,), code="ldpc132", interleaver=0, graph: str = "ffg", schedule="(2,[5,5])",
                 steps: int = 0, batch_size: int = 64, learning_rate: float = 1e-3, snr_range=(10.0, 13.0),
                 seed: int = 0, validation_interval: int = 1000, checkpoint_path: str | None = None,
                 name: str | None = None):
        self.taps = taps
        self.code = code
        self.interleaver = interleaver
        self.graph = graph
        self.schedule = schedule
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.snr_range = snr_range
        self.seed = seed
        self.validation_interval = validation_interval
        self.checkpoint_path = checkpoint_path
        self.name = name

    def fit(self, X=None, y=None):
        self._fit_code()
        sched = self.schedule if isinstance(self.schedule, ScheduleSpec) else ScheduleSpec.parse(str(self.schedule))
        if sched.flooding:
            raise ValueError("DUIDD needs a schedule (outer,[inner_eq,inner_dec])")
        self.schedule_ = sched
        eq = equalizer_graph(self.graph, self.n_symbols_, len(self.taps) - 1)
        rx = DuiddReceiver(eq, self.code_, self.interleaver_, self.taps, sched.outer, *sched.inner)
        self.training_ = None
        if self.steps > 0:
            cfg = self._train_config(schedule=str(sched))
            rx, self.training_ = train_duidd(cfg, self.taps, self.code_, self.interleaver_, rx)
        self.receiver_ = rx
        return self

    def _staged(self, X, sigma2):
        return self.receiver_.decode(X, sigma2)

    def stage_latency(self) -> list[int]:
        s = self.schedule_
        return [latency_cycles("duidd", schedule=(t, list(s.inner))) for t in range(1, s.outer + 1)]
