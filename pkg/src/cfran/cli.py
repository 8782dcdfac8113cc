"""Command-line front end: run experiments, compare cluster-formation
policies on shared seeds and export plot-ready CSVs plus a JSON record of
the fully resolved configuration.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .engine import BatchResult, cluster_map_grid, run_batch
from .model import (
    ConfigError,
    Mode,
    SimConfig,
    default_scenario,
    load_config,
    to_dict,
    validate,
    with_mode,
)

COMPARE_MODES = (Mode.ADAPTIVE, Mode.NETWORK_CENTRIC, Mode.CANONICAL)
BASELINE = Mode.NETWORK_CENTRIC


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _load(args) -> SimConfig:
    if args.config is not None:
        config = load_config(args.config)
        if getattr(args, "seed", None) is not None:
            from .model import with_seed

            config = with_seed(config, args.seed)
    else:
        config = default_scenario(seed=args.seed if args.seed is not None else 1)
    return config


def _write_learning_curve(path: Path, curves: dict[str, tuple[float, ...]]) -> None:
    names = list(curves)
    epochs = len(next(iter(curves.values())))
    lines = ["epoch," + ",".join(f"mean_q50_{n}" for n in names)]
    for e in range(epochs):
        lines.append(f"{e}," + ",".join(_fmt(curves[n][e]) for n in names))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_quantiles(path: Path, pooled: dict[str, BatchResult], baseline: str | None) -> None:
    header = "mode,q10,q50,q90"
    if baseline is not None:
        header += ",q10_gain_pct,q50_gain_pct,q90_gain_pct"
    lines = [header]
    for name, batch in pooled.items():
        row = f"{name},{_fmt(batch.pooled_q10)},{_fmt(batch.pooled_q50)},{_fmt(batch.pooled_q90)}"
        if baseline is not None:
            base = pooled[baseline]
            gains = summarize(
                (batch.pooled_q10, batch.pooled_q50, batch.pooled_q90),
                (base.pooled_q10, base.pooled_q50, base.pooled_q90),
            )
            row += "," + ",".join(_fmt(g) for g in gains)
        lines.append(row)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def summarize(values: tuple[float, float, float], baseline: tuple[float, float, float]):
    """Percentage gain of each quantile over the baseline: 100*(v/b - 1)."""
    return tuple(100.0 * (v / b - 1.0) for v, b in zip(values, baseline))


def _write_meta(path: Path, config: SimConfig, args_dict: dict, seeds: list[int], wall_s: float) -> None:
    meta = {
        "version": __version__,
        "invocation": args_dict,
        "seeds": seeds,
        "wall_time_s": wall_s,
        "resolved_config": to_dict(config),
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_validate(args) -> int:
    config = _load(args)
    validate(config)
    print("configuration valid", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    config = _load(args)
    mode = Mode(args.mode)
    config = with_mode(config, mode, args.delta if mode == Mode.FIXED_DELTA else None)
    validate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    batch = run_batch(config, args.runs)
    wall = time.perf_counter() - t0
    _write_learning_curve(out / "learning_curve.csv", {mode.value: batch.averaged_q50})
    _write_quantiles(out / "quantiles.csv", {mode.value: batch}, baseline=None)
    seeds = [r.seed for r in batch.runs]
    _write_meta(out / "run_meta.json", config, vars(args) | {"command": "run"}, seeds, wall)
    print(
        f"{mode.value}: pooled q10/q50/q90 = "
        f"{batch.pooled_q10 / 1e6:.2f} / {batch.pooled_q50 / 1e6:.2f} / "
        f"{batch.pooled_q90 / 1e6:.2f} Mbit/s over {args.runs} run(s)"
    )
    return 0


def _cmd_compare(args) -> int:
    config = _load(args)
    validate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    batches: dict[str, BatchResult] = {}
    for mode in COMPARE_MODES:
        # identical base seed per mode: paired user placements across modes
        batches[mode.value] = run_batch(with_mode(config, mode), args.runs)
    wall = time.perf_counter() - t0
    _write_learning_curve(
        out / "learning_curve.csv", {name: b.averaged_q50 for name, b in batches.items()}
    )
    _write_quantiles(out / "quantiles.csv", batches, baseline=BASELINE.value)
    seeds = [r.seed for r in batches[BASELINE.value].runs]
    _write_meta(out / "run_meta.json", config, vars(args) | {"command": "compare"}, seeds, wall)

    base = batches[BASELINE.value]
    print(f"pooled quantiles over {args.runs} run(s), gains vs {BASELINE.value}:")
    for name, b in batches.items():
        g10, g50, g90 = summarize(
            (b.pooled_q10, b.pooled_q50, b.pooled_q90),
            (base.pooled_q10, base.pooled_q50, base.pooled_q90),
        )
        print(
            f"  {name:16s} q10 {b.pooled_q10 / 1e6:8.2f} Mbit/s ({g10:+6.1f}%)  "
            f"q50 {b.pooled_q50 / 1e6:8.2f} Mbit/s ({g50:+6.1f}%)  "
            f"q90 {b.pooled_q90 / 1e6:8.2f} Mbit/s ({g90:+6.1f}%)"
        )
    return 0


def _cmd_clustermap(args) -> int:
    config = _load(args)
    validate(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    grid = cluster_map_grid(config, args.delta, args.resolution)
    wall = time.perf_counter() - t0
    lines = ["x,y,cluster_id"]
    for x, y, cid in zip(grid.x, grid.y, grid.cluster_id):
        lines.append(f"{x:.1f},{y:.1f},{int(cid)}")
    (out / "clusters.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    legend = {str(i): list(members) for i, members in enumerate(grid.id_to_cluster)}
    (out / "clusters_legend.json").write_text(
        json.dumps(legend, indent=2) + "\n", encoding="utf-8"
    )
    _write_meta(out / "run_meta.json", config, vars(args) | {"command": "clustermap"}, [], wall)
    print(f"{len(grid.id_to_cluster)} distinct clusters over {grid.x.size} grid points")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfran",
        description="Cell-free massive MIMO downlink simulator with xApp/rApp cluster control",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--config", type=Path, default=None, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="base seed (redraws user placement)")
        if with_out:
            p.add_argument("--out", type=Path, default=Path("results"), help="output directory")

    p_run = sub.add_parser("run", help="simulate one mode")
    common(p_run)
    p_run.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.ADAPTIVE.value)
    p_run.add_argument("--runs", type=int, default=1)
    p_run.add_argument("--delta", type=float, default=None, help="threshold for fixed_delta mode")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="adaptive vs network-centric vs canonical on shared seeds")
    common(p_cmp)
    p_cmp.add_argument("--runs", type=int, default=15)
    p_cmp.set_defaults(func=_cmd_compare)

    p_map = sub.add_parser("clustermap", help="spatial cluster partition at a fixed threshold")
    common(p_map)
    p_map.add_argument("--delta", type=float, default=0.8)
    p_map.add_argument("--resolution", type=float, default=5.0, help="grid step in meters")
    p_map.set_defaults(func=_cmd_clustermap)

    p_val = sub.add_parser("validate", help="check a config file and exit")
    common(p_val, with_out=False)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        if isinstance(exc, ConfigError):
            for v in exc.violations:
                print(f"config error: {v}", file=sys.stderr)
        else:
            print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surface runtime failures as exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
