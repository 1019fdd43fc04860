"""Command-line front end: one-shot subcommands with JSON reports.

Option precedence is flags > config file (`key = value` lines, keys named
like the long flags with underscores) > built-in defaults; the effective
configuration is echoed into every report under ``params``. Exit status is
0 on success, 1 on detection-domain errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import shlex
import subprocess
import sys
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import critvals, netsim
from .critvals import (
    DEFAULT_GRID_STEPS,
    DEFAULT_HORIZON_T,
    DEFAULT_REPLICATIONS,
    CritValKind,
    CritValRequest,
    MonteCarloProvider,
    TableProvider,
    compute_critval,
)
from .errors import CpstreamError, NotTabulatedError
from .monitor import ChangeEvent, MonitorConfig, run_monitor
from .offline import DEFAULT_MIN_SEG, offline_test, segment
from .online import DetectorKind
from .timeseries import TimeSeries, _is_numeric_row, load_csv
from .trend import MacdParams, trend_interval, trend_point

__all__ = ["dispatch", "main"]

_CRITVAL_KINDS = {
    "offline": CritValKind.OFFLINE_MAX,
    "standard": CritValKind.ONLINE_STANDARD,
    "ratio": CritValKind.ONLINE_RATIO,
}

_DEFAULTS: dict[str, dict] = {
    "critval": {
        "kind": "offline",
        "d": 1,
        "alpha": 0.05,
        "gamma": 0.0,
        "grid": DEFAULT_GRID_STEPS,
        "reps": DEFAULT_REPLICATIONS,
        "horizon": DEFAULT_HORIZON_T,
        "seed": 0,
        "build_table": None,
        "out": None,
    },
    "offline": {
        "input": None,
        "columns": None,
        "alpha": 0.05,
        "seed": 0,
        "grid": DEFAULT_GRID_STEPS,
        "reps": DEFAULT_REPLICATIONS,
        "table": None,
        "out": None,
    },
    "segment": {
        "input": None,
        "columns": None,
        "alpha": 0.05,
        "min_seg": DEFAULT_MIN_SEG,
        "seed": 0,
        "grid": DEFAULT_GRID_STEPS,
        "reps": DEFAULT_REPLICATIONS,
        "table": None,
        "out": None,
    },
    "trend": {
        "input": None,
        "columns": None,
        "at": None,
        "mode": "interval",
        "p1": 9,
        "p2": 12,
        "p3": 26,
        "h": 10,
        "dim": 1,
        "out": None,
    },
    "monitor": {
        "input": "-",
        "columns": None,
        "detector": "standard",
        "alpha": 0.05,
        "gamma": 0.0,
        "m": 200,
        "window": 200,
        "quiet_gap": 25,
        "min_seg": DEFAULT_MIN_SEG,
        "p1": 9,
        "p2": 12,
        "p3": 26,
        "h": 10,
        "trend_dim": 1,
        "seed": 0,
        "grid": DEFAULT_GRID_STEPS,
        "reps": DEFAULT_REPLICATIONS,
        "table": None,
        "on_scale_up": None,
        "on_scale_down": None,
        "out": None,
    },
    "simulate": {
        "grid": "10x10",
        "attackers": 10,
        "seed": 0,
        "mode": "per-node",
        "reps": 100,
        "alpha": 0.05,
        "gamma": 0.0,
        "m": 200,
        "block": 50,
        "start": 401,
        "horizon": 600,
        "injection_rate": 3.0,
        "ticks": 1.0,
        "baseline": 10.0,
        "ar": 0.3,
        "sigma": 1.0,
        "decay": 0.4,
        "separation": 3,
        "cluster_block": 2,
        "mc_grid": DEFAULT_GRID_STEPS,
        "mc_reps": DEFAULT_REPLICATIONS,
        "table": None,
        "out": None,
        "heatmap": None,
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpstream",
        description="Change-point detection toolkit: critical values, offline tests, "
        "segmentation, sequential monitoring, trend labelling, and a network "
        "attack-detection simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        return p

    p = add("critval", "simulate a critical value (or build the full table)")
    p.add_argument("--kind", choices=sorted(_CRITVAL_KINDS))
    p.add_argument("--d", type=int, help="series dimension")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--grid", type=int, help="grid points per unit of simulated time")
    p.add_argument("--reps", type=int, help="Monte Carlo replications")
    p.add_argument("--horizon", type=float, help="ratio-statistic horizon T")
    p.add_argument("--seed", type=int)
    p.add_argument("--build-table", help="write the full critical-value table to this CSV")

    p = add("offline", "single change-point test on a CSV series")
    p.add_argument("--input", help="CSV file")
    p.add_argument("--columns", help="1-based column list, e.g. 2,3")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--table", help="critical-value table CSV to use instead of simulating")

    p = add("segment", "multi change-point segmentation of a CSV series")
    p.add_argument("--input", help="CSV file")
    p.add_argument("--columns", help="1-based column list")
    p.add_argument("--alpha", type=float)
    p.add_argument("--min-seg", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--table")

    p = add("trend", "direction verdict at an index of a CSV series")
    p.add_argument("--input", help="CSV file")
    p.add_argument("--columns", help="1-based column list")
    p.add_argument("--at", type=int, help="1-based evaluation index")
    p.add_argument("--mode", choices=["point", "interval"])
    p.add_argument("--p1", type=int)
    p.add_argument("--p2", type=int)
    p.add_argument("--p3", type=int)
    p.add_argument("--h", type=int, help="interval window length")
    p.add_argument("--dim", type=int, help="1-based series dimension to label")

    p = add("monitor", "sequential monitoring of a CSV stream (file or '-' stdin)")
    p.add_argument("--input", help="CSV file or '-' for standard input")
    p.add_argument("--columns", help="1-based column list")
    p.add_argument("--detector", choices=["standard", "ratio"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int, help="minimal training length")
    p.add_argument("--window", type=int, help="monitoring window length")
    p.add_argument("--quiet-gap", type=int, help="samples assumed change-free after an alarm")
    p.add_argument("--min-seg", type=int)
    p.add_argument("--p1", type=int)
    p.add_argument("--p2", type=int)
    p.add_argument("--p3", type=int)
    p.add_argument("--h", type=int)
    p.add_argument("--trend-dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--table")
    p.add_argument("--on-scale-up", help="shell command template run per scale-up event")
    p.add_argument("--on-scale-down", help="shell command template run per scale-down event")

    p = add("simulate", "grid-network attack detection experiment")
    p.add_argument("--grid", help="topology as RxC, e.g. 10x10")
    p.add_argument("--attackers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["per-node", "cluster"])
    p.add_argument("--reps", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--block", type=int, help="retraining block length")
    p.add_argument("--start", type=int, help="attack start sample")
    p.add_argument("--horizon", type=int)
    p.add_argument("--injection-rate", type=float)
    p.add_argument("--ticks", type=float)
    p.add_argument("--baseline", type=float)
    p.add_argument("--ar", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--separation", type=int, help="minimal pairwise attacker distance")
    p.add_argument("--cluster-block", type=int)
    p.add_argument("--mc-grid", type=int, help="critical-value simulation grid")
    p.add_argument("--mc-reps", type=int, help="critical-value simulation replications")
    p.add_argument("--table")
    p.add_argument("--heatmap", help="write the detection-probability grid to this CSV")

    return parser


def _coerce(text: str):
    lowered = text.strip().lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text.strip()


def _read_config(path: str) -> dict:
    values = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CpstreamError(f"{path}: line {line_no} is not 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = _coerce(value)
    return values


def _effective(args: argparse.Namespace) -> dict:
    defaults = _DEFAULTS[args.command]
    merged = dict(defaults)
    if getattr(args, "config", None):
        for key, value in _read_config(args.config).items():
            if key not in defaults:
                raise CpstreamError(f"unknown config key {key!r} for {args.command}")
            merged[key] = value
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _emit(record: dict, out: str | None) -> None:
    text = json.dumps(record, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _parse_columns(raw) -> list[int] | None:
    if raw is None:
        return None
    if isinstance(raw, int):
        return [raw]
    cols = [int(tok) for tok in str(raw).split(",") if tok.strip()]
    if not cols:
        raise CpstreamError(f"empty column list {raw!r}")
    return cols


def _load_series(path: str | None, columns) -> TimeSeries:
    if not path:
        raise CpstreamError("--input is required")
    cols = _parse_columns(columns)
    if cols is None:
        cols = _default_columns(path)
    return load_csv(path, cols)


def _default_columns(path: str) -> list[int] | None:
    # skip a leading index column named "t" (the export format) by default
    with open(path, newline="") as fh:
        first = next(csv.reader(fh), None)
    if first and not _is_numeric_row(first) and first[0].strip().lower() == "t":
        return list(range(2, len(first) + 1))
    return None


def _provider(opts: dict, grid_key: str = "grid", reps_key: str = "reps"):
    simulate = MonteCarloProvider(
        seed=int(opts.get("seed", 0)),
        grid_steps=int(opts[grid_key]),
        replications=int(opts[reps_key]),
    )
    if not opts.get("table"):
        return simulate
    table = TableProvider.from_file(opts["table"])

    # serve tabulated keys from the file; simulate the rest (segmentation
    # validation levels depend on the series length and cannot be tabulated
    # ahead of time)
    def provide(kind, d, alpha, gamma=0.0):
        try:
            return table(kind, d, alpha, gamma)
        except NotTabulatedError:
            return simulate(kind, d, alpha, gamma)

    return provide


def _critval_record(cv, params: dict) -> dict:
    req = cv.request
    return {
        "kind": req.kind.value,
        "d": req.d,
        "alpha": req.alpha,
        "gamma": req.gamma if req.kind.is_online else None,
        "value": cv.value,
        "mc_stderr": cv.mc_stderr,
        "params": params,
    }


def _cmd_critval(opts: dict) -> int:
    params = {"command": "critval", **opts}
    if opts["build_table"]:
        lines = []
        critvals.build_table(
            opts["build_table"],
            grid_steps=int(opts["grid"]),
            replications=int(opts["reps"]),
            horizon_T=float(opts["horizon"]),
            seed=int(opts["seed"]),
            progress=lambda cv: lines.append(_critval_record(cv, params)),
        )
        text = "\n".join(json.dumps(line, sort_keys=True) for line in lines)
        if opts["out"]:
            Path(opts["out"]).write_text(text + "\n")
        else:
            print(text)
        return 0
    kind = _CRITVAL_KINDS[opts["kind"]]
    request = CritValRequest(
        kind=kind,
        alpha=float(opts["alpha"]),
        d=int(opts["d"]),
        gamma=float(opts["gamma"]) if kind.is_online else 0.0,
        grid_steps=int(opts["grid"]),
        replications=int(opts["reps"]),
        horizon_T=float(opts["horizon"]) if kind is CritValKind.ONLINE_RATIO else None,
        seed=int(opts["seed"]),
    )
    _emit(_critval_record(compute_critval(request), params), opts["out"])
    return 0


def _cmd_offline(opts: dict) -> int:
    series = _load_series(opts["input"], opts["columns"])
    alpha = float(opts["alpha"])
    cv = _provider(opts)(CritValKind.OFFLINE_MAX, series.dim, alpha)
    result = offline_test(series, alpha, cv)
    record = {
        "statistic": result.statistic_m,
        "cps": [result.cp_index] if result.cp_index is not None else [],
        "alpha": alpha,
        "reject": result.reject,
        "cp_fraction": result.cp_fraction,
        "critval": result.critval_used,
        "params": {"command": "offline", "n": result.n, "d": series.dim, **opts},
    }
    _emit(record, opts["out"])
    return 0


def _cmd_segment(opts: dict) -> int:
    series = _load_series(opts["input"], opts["columns"])
    alpha = float(opts["alpha"])
    provider = _provider(opts)

    def offline_cv(d: int, level: float):
        return provider(CritValKind.OFFLINE_MAX, d, level)

    result = segment(series, alpha, offline_cv, min_seg=int(opts["min_seg"]))
    full = offline_test(series, alpha, offline_cv(series.dim, alpha))
    record = {
        "statistic": full.statistic_m,
        "cps": list(result.cps),
        "alpha": alpha,
        "per_cp": [
            {"index": cp, "statistic": stat.statistic_m, "window_n": stat.n}
            for cp, stat in zip(result.cps, result.per_cp_stats)
        ],
        "hit_round_cap": result.hit_round_cap,
        "params": {"command": "segment", "n": series.n_samples, "d": series.dim, **opts},
    }
    _emit(record, opts["out"])
    return 0


def _cmd_trend(opts: dict) -> int:
    series = _load_series(opts["input"], opts["columns"])
    if opts["at"] is None:
        raise CpstreamError("--at is required")
    params = MacdParams(p1=int(opts["p1"]), p2=int(opts["p2"]), p3=int(opts["p3"]), h=int(opts["h"]))
    if opts["mode"] == "point":
        verdict = trend_point(series, int(opts["at"]), params, dim=int(opts["dim"]))
    else:
        verdict = trend_interval(series, int(opts["at"]), params, dim=int(opts["dim"]))
    record = {
        "ti": verdict.value,
        "direction": verdict.direction.value,
        "mode": verdict.mode.value,
        "at_index": verdict.at_index,
        "params": {"command": "trend", **opts},
    }
    _emit(record, opts["out"])
    return 0


def _iter_csv_stream(fh, columns) -> Iterator[np.ndarray]:
    reader = csv.reader(fh)
    cols = _parse_columns(columns)
    first = True
    for row in reader:
        if not row:
            continue
        if first:
            first = False
            if not _is_numeric_row(row):
                if cols is None and row[0].strip().lower() == "t":
                    cols = list(range(2, len(row) + 1))
                continue
        use = cols if cols is not None else range(1, len(row) + 1)
        yield np.array([float(row[c - 1]) for c in use])


def _run_hook(template: str | None, event: ChangeEvent) -> None:
    if not template:
        return
    command = template.format(
        index=event.detected_at,
        direction=event.direction.value,
        action=event.action.value,
        ti=event.trend.value,
    )
    subprocess.run(shlex.split(command), check=False)


def _cmd_monitor(opts: dict) -> int:
    provider = _provider(opts)
    config = MonitorConfig(
        critvals=provider,
        alpha=float(opts["alpha"]),
        gamma=float(opts["gamma"]),
        detector=DetectorKind(opts["detector"]),
        window_k=int(opts["window"]),
        quiet_gap_d=int(opts["quiet_gap"]),
        macd=MacdParams(int(opts["p1"]), int(opts["p2"]), int(opts["p3"]), int(opts["h"])),
        min_seg=int(opts["min_seg"]),
        m_min=int(opts["m"]),
        trend_dim=int(opts["trend_dim"]),
    )
    sink = open(opts["out"], "w") if opts["out"] else sys.stdout

    def write(record: dict) -> None:
        sink.write(json.dumps(record, sort_keys=True) + "\n")
        sink.flush()

    write({"type": "config", "params": {"command": "monitor", **opts}})

    def on_event(event: ChangeEvent) -> None:
        write(
            {
                "type": "event",
                "index": event.detected_at,
                "direction": event.direction.value,
                "action": event.action.value,
                "ti": event.trend.value,
                "training": list(event.training_used),
            }
        )
        hook = opts["on_scale_up"] if event.direction.value == "up" else opts["on_scale_down"]
        _run_hook(hook, event)

    try:
        if opts["input"] == "-":
            run_monitor(_iter_csv_stream(sys.stdin, opts["columns"]), config, on_event)
        else:
            with open(opts["input"], newline="") as fh:
                run_monitor(_iter_csv_stream(fh, opts["columns"]), config, on_event)
    finally:
        if sink is not sys.stdout:
            sink.close()
    return 0


def _cmd_simulate(opts: dict) -> int:
    try:
        rows, cols = (int(part) for part in str(opts["grid"]).lower().split("x"))
    except ValueError:
        raise CpstreamError(f"--grid must look like 10x10, got {opts['grid']!r}") from None
    mode = opts["mode"]
    topology = netsim.grid_topology(
        rows, cols, cluster_block=int(opts["cluster_block"]) if mode == "cluster" else None
    )
    scenario = netsim.random_scenario(
        topology,
        n_attackers=int(opts["attackers"]),
        seed=int(opts["seed"]),
        min_separation=int(opts["separation"]),
        start=int(opts["start"]),
        horizon=int(opts["horizon"]),
        injection_rate=float(opts["injection_rate"]),
        ticks_per_packet=float(opts["ticks"]),
        baseline_mean=float(opts["baseline"]),
        ar_coeff=float(opts["ar"]),
        noise_sigma=float(opts["sigma"]),
        hop_decay=float(opts["decay"]),
    )
    settings = netsim.DetectorSettings(
        m=int(opts["m"]),
        retrain_block=int(opts["block"]),
        gamma=float(opts["gamma"]),
        alpha=float(opts["alpha"]),
    )
    cv = _provider(opts, grid_key="mc_grid", reps_key="mc_reps")(
        CritValKind.ONLINE_STANDARD, 1, settings.alpha, settings.gamma
    )
    result = netsim.run_experiment(
        topology,
        scenario,
        settings,
        cv,
        replications=int(opts["reps"]),
        seed=int(opts["seed"]),
        clustered=(mode == "cluster"),
    )
    record = {
        "mode": mode,
        "grid": [rows, cols],
        "attackers": list(scenario.attackers),
        "controller": topology.controller,
        "replications": result.replications,
        "detection_probability": list(result.detection_probability),
        "attacker_adjacent_detection": result.attacker_adjacent_detection(),
        "identification_rate": result.identification_rate,
        "zero_false_positive_rate": result.zero_false_positive_rate,
        "cluster_detection_probability": (
            {str(k): v for k, v in result.cluster_detection_probability.items()}
            if result.cluster_detection_probability is not None
            else None
        ),
        "sample_messages": result.sample_messages,
        "params": {"command": "simulate", **opts},
    }
    _emit(record, opts["out"])
    if opts["heatmap"]:
        grid = np.asarray(result.detection_probability).reshape(rows, cols)
        with open(opts["heatmap"], "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in grid:
                writer.writerow([repr(float(v)) for v in row])
    return 0


_HANDLERS = {
    "critval": _cmd_critval,
    "offline": _cmd_offline,
    "segment": _cmd_segment,
    "trend": _cmd_trend,
    "monitor": _cmd_monitor,
    "simulate": _cmd_simulate,
}


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse arguments and run one subcommand; returns the process exit status."""
    args = _build_parser().parse_args(argv)
    try:
        opts = _effective(args)
        return _HANDLERS[args.command](opts)
    except (CpstreamError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
