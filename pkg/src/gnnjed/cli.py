"""Command-line entry point: ``gnnjed <command> [options]``.

Commands: ``train-eq``, ``train-jed``, ``train-nbp``, ``eval``, ``latency``
and ``sweep``.  Options may also come from an INI file (``--config``): the
``[train]`` section feeds :class:`~gnnjed.training.TrainConfig` and the
``[run]`` section holds any other option by its long name, e.g.
``channel = proakis-b``.  Flags given on the command line win.

E_b/N_0 values use unit symbol energy and the code rate of the receiver
(rate 1 for uncoded equalizers).  Every command that writes files also
writes ``<output>.manifest.json``; ``--from-manifest`` reruns it.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import TAP_PRESETS, Transmitter
from .code import load_code
from .estimators import (BcjrEqualizer, BpEqualizer, DisjointReceiver, DuiddEstimator, GnnEqualizer, GnnJed,
                         NbpEqualizer, TurboReceiver)
from .evaluation import StopRule, bmi_sweep, latency_cycles, monte_carlo, write_csv
from .gnn import ScheduleSpec
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .training import TrainConfig, save_gnn

OUTPUT_DIR_ENV = "GNNJED_OUTPUT_DIR"
RECEIVERS = ("bcjr", "bp", "nbp", "gnn", "gnn-flood", "jed", "jed-flood", "jed-seq", "turbo", "duidd",
             "disjoint-bcjr", "disjoint-gnn")
log = logging.getLogger("gnnjed")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def parse_taps(spec: str) -> np.ndarray:
    """Preset name (``proakis-c``, ``proakis-b``, ``awgn``) or comma-separated taps."""
    key = spec.strip().lower()
    if key in TAP_PRESETS:
        return np.asarray(TAP_PRESETS[key], dtype=np.float64)
    try:
        taps = np.array([float(t) for t in spec.split(",") if t.strip()])
    except ValueError:
        raise CliError(f"unknown channel preset {spec!r} (choose from {', '.join(sorted(TAP_PRESETS))} "
                       "or give comma-separated taps)") from None
    if taps.size == 0:
        raise CliError("empty tap list")
    if not np.all(np.isfinite(taps)) or not np.any(taps):
        raise CliError(f"taps must be finite and not all zero, got {spec!r}")
    return taps


def parse_grid(spec: str) -> list[float]:
    """``lo:hi:step`` (inclusive), ``lo:hi`` (step 1) or a comma list."""
    if ":" in spec:
        parts = [float(p) for p in spec.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        if len(parts) != 3 or parts[2] <= 0 or parts[0] > parts[1]:
            raise CliError(f"invalid SNR grid {spec!r}; expected lo:hi:step with lo <= hi and step > 0")
        lo, hi, step = parts
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return [float(p) for p in spec.split(",") if p.strip()]


def parse_range(spec: str) -> tuple[float, float]:
    parts = [float(p) for p in spec.replace(",", ":").split(":")]
    if len(parts) != 2 or parts[0] > parts[1]:
        raise CliError(f"invalid SNR range {spec!r}; expected lo:hi")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gnnjed", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"gnnjed {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="INI file with [train] and [run] sections")
        sp.add_argument("--from-manifest", dest="from_manifest", help="rerun the command recorded in a manifest")
        sp.add_argument("--channel", default=None, help="tap preset or comma-separated taps (default proakis-c)")
        sp.add_argument("--code", default=None, help="bundled code name or alist path (default ldpc132)")
        sp.add_argument("--interleaver-seed", type=int, default=None)
        sp.add_argument("--n-symbols", type=int, default=None, help="uncoded frame length N")
        sp.add_argument("--graph", choices=("ffg", "ufg"), default=None)
        sp.add_argument("--schedule", default=None, help="GNN schedule, e.g. '10,1' or '3,[3,5]'")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output file (relative to $%s if set)" % OUTPUT_DIR_ENV)
        sp.add_argument("-v", "--verbose", action="store_true")

    def train_opts(sp):
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("--batch-size", type=int, default=None)
        sp.add_argument("--lr", type=float, default=None)
        sp.add_argument("--snr-range", default=None, help="training E_b/N_0 range lo:hi in dB")
        sp.add_argument("--feature-size", type=int, default=None)
        sp.add_argument("--init", default=None, help="checkpoint to start from")
        sp.add_argument("--stage2-schedule", default=None)
        sp.add_argument("--clip-norm", type=float, default=None, help="enable gradient clipping (e.g. 10)")
        sp.add_argument("--validation-interval", type=int, default=None)

    for name in ("train-eq", "train-jed", "train-nbp"):
        sp = sub.add_parser(name, help=f"{name.split('-')[1].upper()} training")
        common(sp)
        train_opts(sp)
        if name == "train-nbp":
            sp.add_argument("--iters", type=int, default=None)

    for name in ("eval", "sweep"):
        sp = sub.add_parser(name, help="BER/FER Monte-Carlo run" if name == "eval" else "BMI sweep")
        common(sp)
        sp.add_argument("--receiver", choices=RECEIVERS, help="receiver to simulate (required)")
        sp.add_argument("--snr", help="E_b/N_0 grid lo:hi:step in dB (required)")
        sp.add_argument("--iters", type=int, default=None, help="equalizer iterations (BP/NBP/GNN)")
        sp.add_argument("--dec-iters", type=int, default=None, help="LDPC BP iterations")
        sp.add_argument("--outer", type=int, default=None)
        sp.add_argument("--checkpoint", default=None, help="trained weights for learned receivers")
        sp.add_argument("--batch-size", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None, help="process pool size (default: all CPUs)")
        if name == "eval":
            sp.add_argument("--min-errors", type=int, default=None)
            sp.add_argument("--max-frames", type=int, default=None)
        else:
            sp.add_argument("--min-bits", type=int, default=None)

    sp = sub.add_parser("latency", help="print clock cycles of a receiver")
    sp.add_argument("--receiver", required=True, choices=RECEIVERS)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--dec-iters", type=int, default=None)
    sp.add_argument("--outer", type=int, default=None)
    sp.add_argument("--schedule", default=None)
    sp.add_argument("--n-symbols", type=int, default=132)
    sp.add_argument("--channel", default="proakis-c")
    return p


DEFAULTS = {
    "channel": "proakis-c", "code": "ldpc132", "interleaver_seed": 0, "n_symbols": 132, "graph": "ffg",
    "seed": 0, "iters": None, "dec_iters": 10, "outer": 3, "batch_size": None, "workers": None,
    "min_errors": 100, "max_frames": 100_000, "min_bits": 100_000,
}


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file [run] < command line."""
    values = {k: v for k, v in DEFAULTS.items() if hasattr(args, k)}
    train_file = {}
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise CliError(f"config file not found: {args.config}")
        if parser.has_section("run"):
            for k, v in parser.items("run"):
                k = k.replace("-", "_")
                if not hasattr(args, k):
                    raise CliError(f"unknown option {k!r} in [run] of {args.config}")
                values[k] = v
        if parser.has_section("train"):
            train_file = dict(parser.items("train"))
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "from_manifest"):
            values[k] = v
    for k in ("interleaver_seed", "n_symbols", "seed", "iters", "dec_iters", "outer", "batch_size", "workers",
              "min_errors", "max_frames", "min_bits", "steps", "feature_size", "validation_interval"):
        if values.get(k) is not None:
            values[k] = int(values[k])
    values["_train_file"] = train_file
    return values


def _output_path(out: str | None, default: str) -> Path:
    path = Path(out or default)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def _write_manifest(path: Path, values: dict) -> Path:
    manifest = {
        "command": values["command"],
        "config": {k: v for k, v in values.items() if not k.startswith("_") and k != "verbose"},
        "train_file": values.get("_train_file", {}),
        "versions": {"gnnjed": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    target = path.with_name(path.name + ".manifest.json")
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return target


def _train_config(values: dict, schedule_default: str) -> TrainConfig:
    cfg = TrainConfig.from_dict(values["_train_file"]) if values["_train_file"] else TrainConfig()
    overrides = {
        "steps": values.get("steps"), "batch_size": values.get("batch_size"), "learning_rate": values.get("lr"),
        "seed": values.get("seed"), "feature_size": values.get("feature_size"), "graph": values.get("graph"),
        "n_symbols": values.get("n_symbols"), "stage2_schedule": values.get("stage2_schedule"),
        "clip_norm": values.get("clip_norm"), "validation_interval": values.get("validation_interval"),
    }
    if values.get("schedule"):
        overrides["schedule"] = str(ScheduleSpec.parse(values["schedule"]))
    elif not values["_train_file"].get("schedule"):
        overrides["schedule"] = schedule_default
    if values.get("snr_range"):
        overrides["snr_lo"], overrides["snr_hi"] = parse_range(values["snr_range"])
    return cfg.replace(**overrides)


def _cmd_train(values: dict) -> int:
    from .training import finetune, load_gnn, train_equalizer, train_jed, train_nbp, jed_graph, extend_params

    cmd = values["command"]
    taps = parse_taps(values["channel"])
    default_sched = "(10,1)" if cmd != "train-nbp" else f"({values.get('iters') or 5},1)"
    if cmd == "train-nbp" and values.get("iters"):
        values["schedule"] = f"{values['iters']},1"
    cfg = _train_config(values, default_sched)
    out = _output_path(values.get("out"), f"{cmd}.ckpt")
    cfg = cfg.replace(checkpoint_path=str(out))
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, dict(values, resolved_train=cfg.to_dict()))
    if cmd == "train-nbp":
        weights, res = train_nbp(cfg, taps)
        save_checkpoint(out, {"weights": weights}, {"receiver": "nbp", "config": cfg.to_dict(),
                                                     "iters": int(weights.shape[0])})
        print(f"trained NBP weights {weights.shape} -> {out}")
        return 0
    init = None
    if values.get("init"):
        init, _ = load_gnn(values["init"])
    if cmd == "train-eq":
        params, res = train_equalizer(cfg, taps, init)
        if cfg.stage2_schedule:
            params, res = finetune(params, cfg, taps)
    else:
        code = load_code(values["code"])
        from .code import Interleaver

        il = Interleaver.random(code.n_transmitted, values["interleaver_seed"])
        if init is not None:
            init = extend_params(init, jed_graph(cfg.graph, taps, code, il))
        params, res = train_jed(cfg, taps, code, il, init)
        if cfg.stage2_schedule:
            params, res = finetune(params, cfg, taps, code, il)
    save_gnn(out, params, {"config": cfg.to_dict(), "schedule": cfg.stage2_schedule or cfg.schedule,
                           "taps": taps.tolist(), "steps": res.steps_done})
    last = res.loss_trace[-1] if res.loss_trace else float("nan")
    print(f"trained {res.steps_done} steps (final loss {last:.5f}) -> {out}")
    return 0


def _gnn_iters(values, default):
    if values.get("iters"):
        return int(values["iters"])
    if values.get("schedule"):
        return ScheduleSpec.parse(values["schedule"]).outer
    return default


def build_receiver(values: dict):
    """Instantiate and fit the receiver described by resolved options."""
    kind = values["receiver"]
    taps = parse_taps(values["channel"])
    n = values["n_symbols"]
    graph = values.get("graph") or "ffg"
    code = values.get("code") or "ldpc132"
    il = values.get("interleaver_seed", 0)
    ckpt = values.get("checkpoint")
    dec_iters = values.get("dec_iters") or 10
    if kind == "bcjr":
        rx = BcjrEqualizer(taps, n)
    elif kind == "bp":
        rx = BpEqualizer(taps, n, graph, values.get("iters") or 5)
    elif kind == "nbp":
        if not ckpt:
            raise CliError("nbp evaluation needs --checkpoint from train-nbp")
        arrays, meta = load_checkpoint(ckpt)
        if meta.get("receiver") != "nbp":
            raise CliError(f"incompatible checkpoint {ckpt}: not an NBP checkpoint")
        w = arrays["weights"]
        rx = NbpEqualizer(taps, n, graph, w.shape[0], weights=w)
    elif kind in ("gnn", "gnn-flood"):
        rx = GnnEqualizer(taps, n, graph, _gnn_iters(values, 10), init_checkpoint=ckpt)
        if not ckpt:
            log.warning("evaluating an untrained GNN (no --checkpoint)")
    elif kind in ("jed", "jed-flood", "jed-seq"):
        sched = values.get("schedule") or ("(10,1)" if kind != "jed-seq" else "(3,[3,5])")
        rx = GnnJed(taps, code, il, graph, sched, init_checkpoint=ckpt)
        if not ckpt:
            log.warning("evaluating an untrained JED (no --checkpoint)")
    elif kind == "turbo":
        rx = TurboReceiver(taps, code, il, values.get("outer") or 3, dec_iters)
    elif kind == "duidd":
        sched = values.get("schedule") or "(2,[5,5])"
        rx = DuiddEstimator(taps, code, il, graph, sched)
        rx.fit()
        if ckpt:
            arrays, meta = load_checkpoint(ckpt)
            if meta.get("receiver") != "duidd":
                raise CliError(f"incompatible checkpoint {ckpt}: not a DUIDD checkpoint")
            rx.receiver_.load_state_dict(arrays)
        return rx
    elif kind == "disjoint-bcjr":
        c = load_code(code)
        rx = DisjointReceiver(BcjrEqualizer(taps, c.n_transmitted), c, il, dec_iters)
    elif kind == "disjoint-gnn":
        c = load_code(code)
        eq = GnnEqualizer(taps, c.n_transmitted, graph, _gnn_iters(values, 10), init_checkpoint=ckpt)
        rx = DisjointReceiver(eq, c, il, dec_iters)
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown receiver {kind!r}")
    try:
        return rx.fit()
    except (KeyError, ValueError) as exc:
        if ckpt:
            raise CliError(f"incompatible checkpoint {ckpt}: {exc}") from None
        raise


def _transmitter(rx, taps) -> Transmitter:
    if rx.coded:
        return Transmitter(taps, code=rx.code_, interleaver=rx.interleaver_)
    return Transmitter(taps, n_symbols=rx.n_symbols_)


def _cmd_eval(values: dict) -> int:
    for key in ("receiver", "snr"):
        if not values.get(key):
            raise CliError(f"{values['command']} needs --{key}")
    rx = build_receiver(values)
    taps = parse_taps(values["channel"])
    grid = parse_grid(values["snr"])
    out = _output_path(values.get("out"), f"{values['command']}-{values['receiver']}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    tx = _transmitter(rx, taps)
    batch = values.get("batch_size") or 200
    if values["command"] == "eval":
        stop = StopRule(values["min_errors"], values["max_frames"])
        results = monte_carlo(rx, tx, grid, stop, batch, values["seed"], values.get("workers"))
    else:
        results = bmi_sweep(rx, tx, grid, values["min_bits"], batch, values["seed"])
    write_csv(results, out)
    _write_manifest(out, values)
    print(f"wrote {len(results)} rows -> {out}")
    return 0


def _cmd_latency(values: dict) -> int:
    kind = values["receiver"]
    taps = parse_taps(values["channel"])
    n, L = values["n_symbols"], taps.size - 1
    iters = values.get("iters")
    sched = values.get("schedule")
    if kind in ("gnn", "gnn-flood") and iters is None and sched is None:
        raise CliError(f"{kind} latency needs --iters or --schedule")
    if kind in ("jed", "jed-flood", "jed-seq"):
        cycles = latency_cycles("jed", iters=iters, schedule=sched)
    elif kind == "turbo":
        cycles = latency_cycles("turbo", n, L, schedule=(values.get("outer") or 3, values.get("dec_iters") or 5))
    elif kind == "disjoint-bcjr":
        cycles = latency_cycles("disjoint-bcjr", n, L, iters=values.get("dec_iters") or 10)
    elif kind == "disjoint-gnn":
        cycles = latency_cycles("disjoint-gnn", schedule=(1, [iters or 10, values.get("dec_iters") or 10]))
    else:
        cycles = latency_cycles(kind, n, L, iters=iters, schedule=sched)
    print(cycles)
    return 0


def _dispatch(values: dict) -> int:
    cmd = values["command"]
    if cmd.startswith("train-"):
        return _cmd_train(values)
    if cmd in ("eval", "sweep"):
        return _cmd_eval(values)
    return _cmd_latency(values)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if getattr(args, "from_manifest", None):
            manifest = json.loads(Path(args.from_manifest).read_text())
            values = dict(manifest["config"], _train_file=manifest.get("train_file", {}))
            if args.out:
                values["out"] = args.out
        else:
            values = _resolve(args) if args.command != "latency" else dict(vars(args))
        return _dispatch(values)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"gnnjed: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
