"""Online-data training loops for the learned receivers.

Every step draws a fresh batch (one step = one batch = one "epoch"), runs
the receiver, averages the BCE over all readouts and applies one Adam
update.  Frames come from counter-based per-frame RNG streams, so a run is
a pure function of its :class:`TrainConfig`.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import FrameBatch, Transmitter
from .classic.bp import bp_messages
from .classic.turbo import DuiddReceiver
from .factor_graph import FactorGraph, build_ffg, build_joint, build_ufg
from .gnn import GnnParams, GnnReceiver, ScheduleSpec, gnn_inputs
from .nn import tensor as T
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.losses import bce_with_logits, multi_loss
from .nn.optim import Adam
from .nn.tensor import Tape, Tensor

log = logging.getLogger(__name__)

TRAIN_STREAM = 0
VALIDATION_STREAM = 1


class TrainingDiverged(FloatingPointError):
    """Raised when the loss or a gradient becomes non-finite."""

    def __init__(self, step: int, result: "TrainResult"):
        super().__init__(f"training diverged at step {step}")
        self.step = step
        self.result = result


@dataclass
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-4
    lr_final: float = -1.0  # < 0: constant learning rate; else cosine decay to this value
    steps: int = 50_000
    snr_lo: float = 10.0
    snr_hi: float = 14.0
    schedule: str = "(10,1)"
    stage2_schedule: str = ""
    seed: int = 0
    feature_size: int = 16
    graph: str = "ffg"
    n_symbols: int = 132
    checkpoint_path: str = ""
    checkpoint_interval: int = 1000
    validation_interval: int = 1000
    validation_frames: int = 256
    clip_norm: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.snr_lo > self.snr_hi:
            raise ValueError(f"SNR range must satisfy lo <= hi, got [{self.snr_lo}, {self.snr_hi}]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.graph not in ("ffg", "ufg"):
            raise ValueError(f"graph must be 'ffg' or 'ufg', got {self.graph!r}")
        self.schedule_spec()
        if self.stage2_schedule:
            ScheduleSpec.parse(self.stage2_schedule)

    def schedule_spec(self) -> ScheduleSpec:
        return ScheduleSpec.parse(self.schedule)

    def lr_at(self, step: int) -> float:
        if self.lr_final < 0 or self.steps <= 1:
            return self.learning_rate
        frac = step / (self.steps - 1)
        return self.lr_final + 0.5 * (self.learning_rate - self.lr_final) * (1 + math.cos(math.pi * frac))

    @property
    def snr_range(self) -> tuple[float, float]:
        return (self.snr_lo, self.snr_hi)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(fields))
        if unknown:
            raise KeyError(f"unknown training option(s): {', '.join(unknown)}")
        typed = {}
        for k, v in values.items():
            kind = type(getattr(cls, k)) if hasattr(cls, k) else str
            typed[k] = kind(v) if not isinstance(v, kind) else v
        return cls(**typed)

    @classmethod
    def from_file(cls, path, section: str = "train") -> "TrainConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        if not parser.has_section(section):
            return cls()
        return cls.from_dict(dict(parser.items(section)))

    def write(self, path, section: str = "train") -> None:
        parser = configparser.ConfigParser()
        parser[section] = {k: str(v) for k, v in self.to_dict().items()}
        with open(path, "w") as fh:
            parser.write(fh)


@dataclass
class TrainResult:
    loss_trace: list = field(default_factory=list)
    validation: list = field(default_factory=list)  # (step, loss)
    best_step: int = -1
    best_validation: float = math.inf
    steps_done: int = 0
    checkpoints: list = field(default_factory=list)


# -- tasks: what to run and how to score it --------------------------------------------


class _GnnTask:
    def __init__(self, graph: FactorGraph, params: GnnParams, schedule: ScheduleSpec, taps, coded: bool):
        self.graph = graph
        self.params = params
        self.schedule = schedule
        self.taps = np.asarray(taps, dtype=np.float64)
        self.coded = coded
        self.rx = GnnReceiver(graph, params)

    def tensors(self) -> dict[str, Tensor]:
        return self.params.tensors()

    def loss(self, batch: FrameBatch) -> Tensor:
        bits = (batch.code_bits if self.coded else batch.symbol_bits).T
        inputs = gnn_inputs(self.graph, batch.observations, self.taps)
        logits = self.rx.run(inputs, self.schedule, batch=len(batch))
        return multi_loss([bce_with_logits(lg, bits) for lg in logits])

    def meta(self) -> dict:
        return {"receiver": "gnn", "params": self.params.spec(), "schedule": str(self.schedule),
                "graph": {"num_vn": self.graph.num_vn, "num_fn": self.graph.num_fn,
                          "num_edges": self.graph.num_edges, "memory": self.graph.memory,
                          "n_symbols": self.graph.n_symbols,
                          "kinds": [k.label for k in self.graph.kinds()]}}


class _NbpTask:
    def __init__(self, graph: FactorGraph, weights: Tensor, taps):
        self.graph = graph
        self.weights = weights
        self.taps = np.asarray(taps, dtype=np.float64)

    def tensors(self) -> dict[str, Tensor]:
        return {"weights": self.weights}

    def loss(self, batch: FrameBatch) -> Tensor:
        apps = bp_messages(self.graph, batch.observations, batch.noise_variance, self.taps,
                           iters=self.weights.shape[0], weights=self.weights)
        bits = batch.symbol_bits.T
        return multi_loss([bce_with_logits(T.neg(a), bits) for a in apps])

    def meta(self) -> dict:
        return {"receiver": "nbp", "iters": int(self.weights.shape[0]), "num_edges": self.graph.num_edges,
                "kinds": [k.label for k in self.graph.kinds()]}


class _DuiddTask:
    def __init__(self, receiver: DuiddReceiver):
        self.receiver = receiver

    def tensors(self) -> dict[str, Tensor]:
        return self.receiver.parameters()

    def loss(self, batch: FrameBatch) -> Tensor:
        apps = self.receiver.forward(batch.observations, batch.noise_variance)
        bits = batch.code_bits.T
        return multi_loss([bce_with_logits(T.neg(a), bits) for a in apps])

    def meta(self) -> dict:
        r = self.receiver
        return {"receiver": "duidd", "outer": r.outer, "inner_eq": r.inner_eq, "inner_dec": r.inner_dec}


# -- the loop ------------------------------------------------------------------------------


def _snapshot(tensors: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: t.data.copy() for k, t in tensors.items()}


def _save(path: str, arrays: dict, meta: dict, cfg: TrainConfig, step: int, result: TrainResult) -> None:
    full = dict(meta, config=cfg.to_dict(), step=step)
    save_checkpoint(path, arrays, full)
    result.checkpoints.append(str(path))


def run_training(task, transmitter: Transmitter, cfg: TrainConfig) -> TrainResult:
    """Generic online training loop shared by all receivers."""
    tensors = task.tensors()
    opt = Adam(tensors, lr=cfg.learning_rate, clip_norm=cfg.clip_norm or None)
    result = TrainResult()
    ckpt = cfg.checkpoint_path
    meta = task.meta()
    val_batch = None
    if cfg.validation_interval > 0 and cfg.steps > 0:
        val_batch = transmitter.generate(cfg.validation_frames, cfg.snr_range, cfg.seed, 0, VALIDATION_STREAM)
    for step in range(cfg.steps):
        batch = transmitter.generate(cfg.batch_size, cfg.snr_range, cfg.seed, step * cfg.batch_size, TRAIN_STREAM)
        with Tape() as tape:
            loss = task.loss(batch)
        value = float(loss.data)
        if not math.isfinite(value):
            _abort(step, result, tensors, meta, cfg)
        tape.backward(loss)
        opt.lr = cfg.lr_at(step)
        try:
            opt.step()
        except FloatingPointError:
            _abort(step, result, tensors, meta, cfg)
        result.loss_trace.append(value)
        result.steps_done = step + 1
        done = step + 1
        if val_batch is not None and done % cfg.validation_interval == 0:
            val = float(task.loss(val_batch).data)
            result.validation.append((done, val))
            log.info("step %d: train %.5f validation %.5f", done, value, val)
            if val < result.best_validation:
                result.best_validation, result.best_step = val, done
                if ckpt:
                    _save(ckpt + ".best", _snapshot(tensors), meta, cfg, done, result)
        if ckpt and cfg.checkpoint_interval > 0 and done % cfg.checkpoint_interval == 0:
            _save(ckpt, _snapshot(tensors), meta, cfg, done, result)
    if ckpt:
        _save(ckpt, _snapshot(tensors), meta, cfg, cfg.steps, result)
    return result


def _abort(step, result, tensors, meta, cfg):
    # parameters have not been touched by the failing step: they are the last finite state
    if cfg.checkpoint_path:
        _save(cfg.checkpoint_path + ".last-finite", _snapshot(tensors), meta, cfg, step, result)
    raise TrainingDiverged(step, result)


# -- public entry points ------------------------------------------------------------------


def equalizer_graph(kind: str, n_symbols: int, memory: int) -> FactorGraph:
    if kind == "ffg":
        return build_ffg(n_symbols, memory)
    if kind == "ufg":
        return build_ufg(n_symbols, memory)
    raise ValueError(f"unknown equalizer graph {kind!r}")


def train_equalizer(cfg: TrainConfig, taps, params: GnnParams | None = None):
    """Train a GNN equalizer on uncoded frames; returns ``(params, TrainResult)``.

    The number of GNN iterations is the outer count of ``cfg.schedule``.
    """
    sched = cfg.schedule_spec()
    if not sched.flooding:
        raise ValueError("equalizer training uses a flooding schedule such as (10,1)")
    taps = np.asarray(taps, dtype=np.float64)
    graph = equalizer_graph(cfg.graph, cfg.n_symbols, taps.size - 1)
    if params is None:
        params = GnnParams.for_graph(graph, cfg.feature_size, seed=cfg.seed)
    task = _GnnTask(graph, params, sched, taps, coded=False)
    result = run_training(task, Transmitter(taps, n_symbols=cfg.n_symbols), cfg)
    return params, result


def jed_graph(kind: str, taps, code, interleaver) -> FactorGraph:
    eq = equalizer_graph(kind, code.n_transmitted, len(taps) - 1)
    return build_joint(eq, code, interleaver)


def train_jed(cfg: TrainConfig, taps, code, interleaver, params: GnnParams | None = None):
    """Train a joint equalizer/decoder; the loss covers every code bit, punctured ones included."""
    taps = np.asarray(taps, dtype=np.float64)
    graph = jed_graph(cfg.graph, taps, code, interleaver)
    if params is None:
        params = GnnParams.for_graph(graph, cfg.feature_size, seed=cfg.seed)
    task = _GnnTask(graph, params, cfg.schedule_spec(), taps, coded=True)
    tx = Transmitter(taps, code=code, interleaver=interleaver)
    return params, run_training(task, tx, cfg)


def finetune(params: GnnParams, cfg: TrainConfig, taps, code=None, interleaver=None):
    """Second training stage: continue from ``params`` with ``cfg.stage2_schedule``."""
    if not cfg.stage2_schedule:
        raise ValueError("finetune needs a stage2_schedule")
    stage2 = cfg.replace(schedule=cfg.stage2_schedule)
    if code is None:
        return train_equalizer(stage2, taps, params)
    return train_jed(stage2, taps, code, interleaver, params)


def train_nbp(cfg: TrainConfig, taps, weights=None):
    """Train per-iteration, per-edge NBP weights; returns ``(weights array, TrainResult)``."""
    taps = np.asarray(taps, dtype=np.float64)
    graph = equalizer_graph(cfg.graph, cfg.n_symbols, taps.size - 1)
    iters = cfg.schedule_spec().outer
    init = np.ones((iters, graph.num_edges)) if weights is None else np.asarray(weights)
    w = Tensor(init.astype(np.float32), requires_grad=True, name="weights")
    task = _NbpTask(graph, w, taps)
    result = run_training(task, Transmitter(taps, n_symbols=cfg.n_symbols), cfg)
    return w.data.copy(), result


def train_duidd(cfg: TrainConfig, taps, code, interleaver, receiver: DuiddReceiver | None = None):
    """Train the NBP-equalizer/BP-decoder weights; schedule ``(outer,[inner_eq,inner_dec])``."""
    taps = np.asarray(taps, dtype=np.float64)
    sched = cfg.schedule_spec()
    if receiver is None:
        if sched.flooding:
            raise ValueError("DUIDD training needs a schedule (outer,[inner_eq,inner_dec])")
        graph = equalizer_graph(cfg.graph, code.n_transmitted, taps.size - 1)
        receiver = DuiddReceiver(graph, code, interleaver, taps, sched.outer, *sched.inner)
    task = _DuiddTask(receiver)
    tx = Transmitter(taps, code=code, interleaver=interleaver)
    return receiver, run_training(task, tx, cfg)


def load_gnn(path, graph: FactorGraph | None = None) -> tuple[GnnParams, dict]:
    """Load GNN parameters; with ``graph`` the checkpoint is checked against it."""
    arrays, meta = load_checkpoint(path)
    if meta.get("receiver") != "gnn":
        raise ValueError(f"{path}: not a GNN checkpoint")
    params = GnnParams.from_spec(meta["params"])
    if graph is not None:
        for k in graph.kinds():
            if k not in params.roles:
                raise ValueError(f"{path}: checkpoint has no weights for FN kind {k.label}")
            if graph.num_roles(k) > max(params.roles[k], 1):
                raise ValueError(f"{path}: checkpoint trained for {params.roles[k]} edge roles of "
                                 f"{k.label}, graph needs {graph.num_roles(k)}")
    params.load_state_dict(arrays)
    return params, meta


def extend_params(params: GnnParams, graph: FactorGraph, seed: int | None = None) -> GnnParams:
    """Parameters for ``graph`` that reuse every tensor ``params`` already has.

    Used to start joint training from a trained equalizer: shared kinds keep
    their weights, check kinds are freshly initialized.
    """
    roles = dict(params.roles)
    for k in graph.kinds():
        roles[k] = max(roles.get(k, 0), graph.num_roles(k))
    fresh = GnnParams(roles, params.d, params.hidden, params.seed if seed is None else seed, params.dtype)
    own = fresh.tensors()
    for k, arr in params.state_dict().items():
        if k in own and own[k].shape == arr.shape:
            own[k].data = arr.copy()
    return fresh


def save_gnn(path, params: GnnParams, extra: dict | None = None) -> Path:
    meta = {"receiver": "gnn", "params": params.spec()}
    meta.update(extra or {})
    return save_checkpoint(path, params.state_dict(), meta)
