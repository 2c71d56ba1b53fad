"""Experiment spec files, batch execution and CSV serialization.

A spec is a JSON document mirroring the engine config plus output
options and optional sweep axes.  Output is plain CSV with a fixed
column order so re-running the same spec and seed reproduces files
byte for byte; no plotting happens here.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import reward_gaps
from .engine import ExperimentConfig, RunTrace, run_repetitions
from .errors import ConfigurationError
from .theory import bound_report

METRIC_COLUMNS = ("potential", "in_smc", "cum_reward", "norm_reward", "switches")

_SPEC_KEYS = {
    "K", "N", "T", "epsilon", "dynamic", "arrivals", "departures",
    "cfl_length", "seed", "repetitions", "sweep", "out_dir",
    "bound_delta", "metrics",
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated contents of a spec file, defaults filled in."""

    T: int
    K: int | None = None
    N: int | None = None
    epsilon: float | str = "auto"
    dynamic: bool = False
    arrivals: tuple[tuple[int, int], ...] = ()
    departures: tuple[tuple[int, int], ...] = ()
    cfl_length: int | None = None
    seed: int = 0
    repetitions: int = 50
    sweep: dict | None = None
    out_dir: str = "results"
    bound_delta: float = 0.05
    metrics: tuple[str, ...] = METRIC_COLUMNS

    def cells(self, use_sweep: bool) -> list[tuple[int, int]]:
        """(K, N) pairs to run: the scalar cell, or the sweep cross-product."""
        if use_sweep:
            if not self.sweep:
                raise ConfigurationError("--sweep requested but the spec has no sweep axes")
            out = []
            for K in self.sweep["K"]:
                for N in _expand_axis(self.sweep["N"], K):
                    if 1 <= N <= K:
                        out.append((K, N))
            if not out:
                raise ConfigurationError("sweep axes produce no valid (K, N) cells")
            return out
        if self.K is None or self.N is None:
            raise ConfigurationError("spec needs scalar K and N (or run with --sweep)")
        return [(self.K, self.N)]

    def config_for(self, K: int, N: int, seed: int | None = None) -> ExperimentConfig:
        return ExperimentConfig(
            K=K,
            N_initial=N,
            T=self.T,
            epsilon=self.epsilon,
            dynamic=self.dynamic,
            arrivals=self.arrivals,
            departures=self.departures,
            cfl_length=self.cfl_length,
            seed=self.seed if seed is None else seed,
            repetitions=self.repetitions,
        )


def _expand_axis(axis, K: int) -> list[int]:
    if isinstance(axis, str):
        lo, _, hi = axis.partition("..")
        try:
            lo_v = int(lo)
            hi_v = K if hi.strip() == "K" else int(hi)
        except ValueError as exc:
            raise ConfigurationError(f"bad sweep range {axis!r}; want 'a..b' or 'a..K'") from exc
        return list(range(lo_v, hi_v + 1))
    return [int(n) for n in axis]


def parse_config(source: str | Path) -> ExperimentSpec:
    """Parse and validate a spec from a JSON file path or literal JSON text."""
    if isinstance(source, Path) or not source.lstrip().startswith("{"):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read spec file {source}: {exc}") from exc
    else:
        text = source
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"spec is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("spec must be a JSON object")
    unknown = set(raw) - _SPEC_KEYS
    if unknown:
        raise ConfigurationError(f"unknown spec key(s): {', '.join(sorted(unknown))}")
    if "T" not in raw:
        raise ConfigurationError("spec key 'T' is required")
    if "sweep" not in raw and ("K" not in raw or "N" not in raw):
        raise ConfigurationError("spec needs K and N, or a sweep block")

    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or set(sweep) != {"K", "N"}:
            raise ConfigurationError("sweep must be an object with exactly the keys K and N")
    metrics = tuple(raw.get("metrics", METRIC_COLUMNS))
    bad = [m for m in metrics if m not in METRIC_COLUMNS]
    if bad:
        raise ConfigurationError(f"unknown metric(s): {', '.join(bad)}")

    spec = ExperimentSpec(
        T=int(raw["T"]),
        K=int(raw["K"]) if "K" in raw else None,
        N=int(raw["N"]) if "N" in raw else None,
        epsilon=raw.get("epsilon", "auto"),
        dynamic=bool(raw.get("dynamic", False)),
        arrivals=tuple((int(s), int(u)) for s, u in raw.get("arrivals", ())),
        departures=tuple((int(s), int(u)) for s, u in raw.get("departures", ())),
        cfl_length=raw.get("cfl_length"),
        seed=int(raw.get("seed", 0)),
        repetitions=int(raw.get("repetitions", 50)),
        sweep=sweep,
        out_dir=str(raw.get("out_dir", "results")),
        bound_delta=float(raw.get("bound_delta", 0.05)),
        metrics=metrics,
    )
    if spec.K is not None and spec.N is not None and spec.N > spec.K:
        raise ConfigurationError(f"N={spec.N} exceeds K={spec.K}")
    if spec.K is not None and spec.N is not None:
        spec.config_for(spec.K, spec.N)  # surface engine-level validation early
    return spec


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def emit_metrics(traces, spec: ExperimentSpec, out_dir: str | Path) -> list[Path]:
    """Write per-super-frame, per-run-summary and bound-report CSV files.

    traces is a flat sequence of RunTrace, grouped here by (K, N).
    Writes frames_K{K}_N{N}.csv per cell plus summary.csv and
    bounds.csv; returns the written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_cell: dict[tuple[int, int], list[RunTrace]] = {}
    for tr in traces:
        by_cell.setdefault((tr.config.K, tr.config.N_initial), []).append(tr)

    written = []
    for (K, N) in sorted(by_cell):
        written.append(_write_frames(out / f"frames_K{K}_N{N}.csv", by_cell[(K, N)], spec))
    written.append(_write_summary(out / "summary.csv", by_cell))
    written.append(_write_bounds(out / "bounds.csv", by_cell, spec))
    return written


def _write_frames(path: Path, traces: list[RunTrace], spec: ExperimentSpec) -> Path:
    roster = traces[0].roster if traces else ()
    header = ["run_id", "super_frame"]
    for m in spec.metrics:
        if m == "switches":
            header.extend(f"switches_u{u}" for u in roster)
        else:
            header.append(m)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for run_id, tr in enumerate(traces):
            mt = tr.metrics
            for m in range(tr.super_frames):
                row = [run_id, m]
                for name in spec.metrics:
                    if name == "potential":
                        row.append(int(tr.potential[m]))
                    elif name == "in_smc":
                        row.append(int(tr.in_smc[m]))
                    elif name == "cum_reward":
                        row.append(_fmt(tr.cum_reward[m]))
                    elif name == "norm_reward":
                        row.append(_fmt(mt.norm_reward[m]))
                    else:
                        row.extend(
                            "" if math.isnan(v) else str(int(v)) for v in mt.switches[m]
                        )
                w.writerow(row)
    return path


def _write_summary(path: Path, by_cell) -> Path:
    header = [
        "K", "N", "run_id", "seed", "super_frames", "final_potential",
        "final_in_smc", "final_norm_reward", "total_switches",
    ]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for (K, N) in sorted(by_cell):
            for run_id, tr in enumerate(by_cell[(K, N)]):
                switches = tr.metrics.switches[-1]
                total = int(np.nansum(switches)) if switches.size else 0
                w.writerow([
                    K, N, run_id, tr.config.seed, tr.super_frames,
                    int(tr.potential[-1]), int(tr.in_smc[-1]),
                    _fmt(tr.metrics.norm_reward[-1]), total,
                ])
    return path


def _write_bounds(path: Path, by_cell, spec: ExperimentSpec) -> Path:
    header = [
        "K", "N", "run_id", "min_gap", "t_min", "s_min", "T_delta_static",
        "T_arrival", "T_delta_departure", "phi_max", "static_valid",
        "arrival_valid", "arrival_clamped",
    ]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for (K, N) in sorted(by_cell):
            for run_id, tr in enumerate(by_cell[(K, N)]):
                gap = reward_gaps(tr.model).min_gap
                rep = bound_report(
                    K, N, tr.config.epsilon_value, spec.bound_delta, gap, tr.config.padded_T
                )
                w.writerow([
                    K, N, run_id, _fmt(gap), _fmt(rep.t_min), _fmt(rep.s_min),
                    _fmt(rep.T_delta_static), _fmt(rep.T_arrival),
                    _fmt(rep.T_delta_departure), rep.phi_max,
                    int(rep.static_valid), int(rep.arrival_valid),
                    int(rep.arrival_clamped),
                ])
    return path


def run_spec(
    spec: ExperimentSpec,
    *,
    use_sweep: bool = False,
    seed: int | None = None,
    workers: int = 1,
) -> list[RunTrace]:
    """Run every cell of a spec and return the traces in cell order."""
    traces: list[RunTrace] = []
    for K, N in spec.cells(use_sweep):
        config = spec.config_for(K, N, seed)
        traces.extend(run_repetitions(config, workers=workers))
    return traces


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chanswap",
        description="Run channel-swap coordination experiments and write CSV metrics.",
    )
    parser.add_argument("config", help="path to the JSON experiment spec")
    parser.add_argument("--seed", type=int, default=None, help="override the spec seed")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="parallel runs (default: available parallelism)")
    parser.add_argument("--out-dir", default=None, help="output directory")
    parser.add_argument("--sweep", action="store_true",
                        help="run the spec's sweep axes instead of the scalar cell")
    args = parser.parse_args(argv)

    try:
        spec = parse_config(args.config)
        out_dir = args.out_dir or os.environ.get("CHANSWAP_OUT_DIR") or spec.out_dir
        traces = run_spec(spec, use_sweep=args.sweep, seed=args.seed, workers=args.workers)
        paths = emit_metrics(traces, spec, out_dir)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
