"""Monte-Carlo BER/BMI measurement, latency accounting and CSV output.

A receiver is anything with

* ``receiver_id`` (str)
* ``staged_bit_llrs(batch) -> list of (B, K) arrays``, one per readout,
  restricted to the bits that are scored
* ``target_bits(batch) -> (B, K)`` bits those LLRs estimate
* ``stage_latency() -> list[int]`` cumulative clock cycles per readout

The estimators in :mod:`gnnjed.estimators` implement it.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .channel import Transmitter
from .classic.common import hard_decision
from .gnn import ScheduleSpec
from .nn.losses import bmi_estimate

GNN_CYCLES_PER_ITER = 12  # 4 MLPs x 3 layers
BP_CYCLES_PER_ITER = 2


def _schedule(schedule) -> ScheduleSpec | None:
    if schedule is None or isinstance(schedule, ScheduleSpec):
        return schedule
    if isinstance(schedule, str):
        return ScheduleSpec.parse(schedule)
    outer, *inner = schedule
    return ScheduleSpec(int(outer), tuple(inner[0]) if inner and np.ndim(inner[0]) else tuple(inner) or (1,))


def latency_cycles(kind: str, n_symbols: int = 0, memory: int = 0, iters: int | None = None,
                   schedule=None) -> int:
    """Clock cycles of one receiver invocation under the fixed-schedule cost model.

    GNN iterations cost 12 cycles, BP/NBP (equalizer or decoder) iterations
    2 cycles and a BCJR pass ``N + L + 2`` cycles.  Composite receivers sum
    their components.  Early termination is ignored (worst case).

    >>> latency_cycles("gnn-flood", iters=12)
    144
    >>> latency_cycles("turbo", 132, 4, schedule="2,5")
    296
    """
    bcjr = n_symbols + memory + 2
    if kind == "turbo":
        # schedule (outer, inner_bp)
        outer, inner = _numbers(schedule)
        return outer * bcjr + outer * BP_CYCLES_PER_ITER * inner
    sched = _schedule(schedule)
    if kind in ("gnn", "gnn-flood", "gnn-eq", "jed", "jed-flood", "jed-seq", "gnn-seq"):
        if sched is None:
            if iters is None:
                raise ValueError(f"{kind} latency needs iters or a schedule")
            return GNN_CYCLES_PER_ITER * int(iters)
        return GNN_CYCLES_PER_ITER * sched.num_readouts
    if kind in ("bp", "nbp", "ldpc-bp"):
        if iters is None:
            raise ValueError(f"{kind} latency needs iters")
        return BP_CYCLES_PER_ITER * int(iters)
    if kind == "bcjr":
        return bcjr
    if kind == "duidd":
        if sched is None or sched.flooding:
            raise ValueError("duidd latency needs a schedule (outer,[inner_eq,inner_dec])")
        return sched.outer * BP_CYCLES_PER_ITER * sum(sched.inner)
    if kind == "disjoint-gnn":
        if sched is None or sched.flooding:
            raise ValueError("disjoint-gnn latency needs a schedule (1,[eq_iters,dec_iters])")
        return sched.outer * (GNN_CYCLES_PER_ITER * sched.inner[0] + BP_CYCLES_PER_ITER * sched.inner[1])
    if kind == "disjoint-bcjr":
        return bcjr + BP_CYCLES_PER_ITER * int(iters or 0)
    raise ValueError(f"unknown receiver kind {kind!r}")


def _numbers(schedule) -> tuple[int, int]:
    if schedule is None:
        raise ValueError("turbo latency needs a schedule (outer, inner_bp)")
    if isinstance(schedule, str):
        schedule = [int(t) for t in schedule.replace("(", " ").replace(")", " ").replace(",", " ").split()]
    outer, inner = (int(v) for v in schedule)
    return outer, inner


@dataclass
class StopRule:
    min_errors: int = 100
    max_frames: int = 100_000

    def __post_init__(self):
        if self.min_errors < 1 or self.max_frames < 1:
            raise ValueError("stop rule needs min_errors >= 1 and max_frames >= 1")


@dataclass
class BerResult:
    receiver: str
    snr_db: float
    iteration: int
    bits_simulated: int
    bit_errors: int
    frames: int
    frame_errors: int
    ber: float
    fer: float
    rel_std_error: float
    latency_cycles: int


CSV_COLUMNS = [f.name for f in fields(BerResult)]


def _simulate(receiver, transmitter: Transmitter, snr: float, seed: int, start: int, n: int, stream: int):
    batch = transmitter.generate(n, snr, seed, start, stream)
    target = receiver.target_bits(batch)
    bit_err, frame_err = [], []
    for llr in receiver.staged_bit_llrs(batch):
        wrong = hard_decision(llr) != target
        bit_err.append(int(wrong.sum()))
        frame_err.append(int(wrong.any(axis=1).sum()))
    return np.array(bit_err), np.array(frame_err), int(target.size)


def _chunks(stop: StopRule, batch_size: int):
    start = 0
    while start < stop.max_frames:
        n = min(batch_size, stop.max_frames - start)
        yield start, n
        start += n


def monte_carlo(receiver, transmitter: Transmitter, snr_grid, stop: StopRule | None = None,
                batch_size: int = 200, seed: int = 0, workers: int | None = 1) -> list[BerResult]:
    """Simulate every SNR point until ``min_errors`` bit errors (final readout) or ``max_frames``.

    Frames are processed in fixed chunks of ``batch_size``; each chunk's
    frames depend only on ``(seed, frame index)``.  Results are consumed in
    chunk order and the stop rule is checked after every chunk, so the
    output does not depend on ``workers``.
    """
    stop = stop or StopRule()
    workers = (os.cpu_count() or 1) if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    latencies = list(receiver.stage_latency())
    out = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for point, snr in enumerate(snr_grid):
            snr = float(snr)
            bits = frames = 0
            bit_err = frame_err = None
            chunks = list(_chunks(stop, batch_size))
            pos = 0
            finished = False
            while pos < len(chunks) and not finished:
                wave = chunks[pos: pos + workers]
                pos += len(wave)
                if pool is None:
                    results = [_simulate(receiver, transmitter, snr, seed, s, n, point) for s, n in wave]
                else:
                    futs = [pool.submit(_simulate, receiver, transmitter, snr, seed, s, n, point) for s, n in wave]
                    results = [f.result() for f in futs]
                for (s, n), (be, fe, nb) in zip(wave, results):
                    bit_err = be if bit_err is None else bit_err + be
                    frame_err = fe if frame_err is None else frame_err + fe
                    bits += nb
                    frames += n
                    if bit_err[-1] >= stop.min_errors:
                        finished = True
                        break
            for t in range(len(bit_err)):
                ber = bit_err[t] / bits
                rse = math.sqrt((1 - ber) / bit_err[t]) if bit_err[t] else math.inf
                out.append(BerResult(receiver.receiver_id, snr, t + 1, bits, int(bit_err[t]), frames,
                                     int(frame_err[t]), float(ber), float(frame_err[t] / frames), rse,
                                     int(latencies[t])))
    finally:
        if pool is not None:
            pool.shutdown()
    return out


@dataclass
class BmiResult:
    receiver: str
    snr_db: float
    iteration: int
    bits: int
    bmi: float
    damping: float


def bmi_sweep(receiver, transmitter: Transmitter, snr_grid, min_bits: int = 100_000, batch_size: int = 500,
              seed: int = 0, optimize_damping: bool = True, stages=None) -> list[BmiResult]:
    """BMI per SNR point (and readout) from at least ``min_bits`` scored bits."""
    out = []
    for point, snr in enumerate(snr_grid):
        llrs, bits = None, []
        start = 0
        while sum(b.size for b in bits) < min_bits:
            batch = transmitter.generate(batch_size, float(snr), seed, start, point)
            start += batch_size
            staged = receiver.staged_bit_llrs(batch)
            llrs = [[s] for s in staged] if llrs is None else [acc + [s] for acc, s in zip(llrs, staged)]
            bits.append(receiver.target_bits(batch))
        all_bits = np.concatenate(bits).ravel()
        wanted = range(len(llrs)) if stages is None else [s % len(llrs) for s in stages]
        for t in wanted:
            values = np.concatenate(llrs[t]).ravel()
            bmi, alpha = bmi_estimate(values, all_bits, None if optimize_damping else 1.0)
            out.append(BmiResult(receiver.receiver_id, float(snr), t + 1, all_bits.size, bmi, alpha))
    return out


def write_csv(results, path) -> Path:
    """Header row plus one row per result, columns in dataclass field order."""
    results = list(results)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [f.name for f in fields(results[0])] if results else CSV_COLUMNS
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in results:
            writer.writerow({k: _fmt(v) for k, v in asdict(r).items()})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def snr_at_ber(snr_db, ber, target: float) -> float:
    """SNR where a BER curve crosses ``target`` (log-linear interpolation); nan if it never does."""
    snr_db = np.asarray(snr_db, dtype=np.float64)
    logb = np.log10(np.maximum(np.asarray(ber, dtype=np.float64), 1e-300))
    lt = math.log10(target)
    for i in range(len(snr_db) - 1):
        a, b = logb[i], logb[i + 1]
        if (a - lt) * (b - lt) <= 0 and a != b:
            return float(snr_db[i] + (lt - a) * (snr_db[i + 1] - snr_db[i]) / (b - a))
    return math.nan
