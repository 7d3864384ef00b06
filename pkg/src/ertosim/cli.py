"""Experiment orchestration: config loading, runs, sweeps, front dumps.

Subcommands: run, sweep, front, validate.  Flags may also be supplied
through environment variables with the ``ERTOSIM_`` prefix (for example
``ERTOSIM_SEED=7`` mirrors ``--seed 7``).  Exit codes: 0 success,
2 configuration error, 3 runtime error.

All emitted files are byte-reproducible: fixed column order, floats
printed with at most 9 significant digits, newline-terminated rows.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from difflib import get_close_matches
from pathlib import Path

from . import __version__
from .analysis import SweepResult, aggregate, figure_rows
from .energymodel import RadioParams
from .linkmodel import ChannelParams
from .pareto import EAParams, pareto_front_evolutionary, pareto_front_exhaustive
from .simcore import SimConfig, run
from .synth import make_context

__all__ = ["ConfigError", "ExperimentSpec", "load_config", "main"]

ENV_PREFIX = "ERTOSIM_"

AXES = ("node_count", "cbr_pairs", "time")

FIGURE_METRICS = (
    ("pdr", "pdr"),
    ("delay", "mean_delay"),
    ("throughput", "throughput"),
    ("residual", "residual_energy_ratio"),
)

_KNOWN_KEYS = {
    "sim": (
        "area_width",
        "area_height",
        "node_count",
        "cbr_pairs",
        "cbr_rate",
        "sim_time",
        "seed",
        "strategy",
        "retransmission_limit",
        "coordination_delay",
        "erto_solver",
        "initial_energy",
        "initial_power",
    ),
    "channel": ("eta", "k", "g", "beta", "sigma", "p_n", "p_thresh", "alpha_sq"),
    "radio": ("p_min", "p_max", "power_step", "e_r", "xi", "packet_bits", "bitrate"),
    "experiment": ("axis", "values", "strategies", "seeds", "out_dir", "workers"),
}


class ConfigError(ValueError):
    """A configuration file or flag could not be accepted."""


@dataclass(frozen=True)
class ExperimentSpec:
    """A resolved experiment: base config plus sweep and output settings."""

    base: SimConfig
    axis: str = "node_count"
    values: tuple = (40, 60, 80, 100, 120)
    strategies: tuple[str, ...] = ("erto", "exor", "tcor", "eeor")
    seeds: tuple[int, ...] = tuple(range(1, 11))
    out_dir: str = "results"
    workers: int = 0


def fmt(value) -> str:
    """Stable text form: floats capped at 9 significant digits."""
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def _key_line(text: str, key: str) -> int | None:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.IGNORECASE)
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return i
    return None


def _parse_ini(path: str | Path) -> tuple[configparser.ConfigParser, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(p))
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return parser, text


def _check_keys(parser: configparser.ConfigParser, text: str, known: dict, path) -> None:
    for section in parser.sections():
        if section not in known:
            hint = get_close_matches(section, known.keys(), n=1)
            extra = f"; did you mean [{hint[0]}]?" if hint else ""
            raise ConfigError(f"{path}: unknown section [{section}]{extra}")
        for key in parser[section]:
            if key not in known[section]:
                line = _key_line(text, key)
                where = f"{path}:{line}" if line else str(path)
                hint = get_close_matches(key, known[section], n=1)
                extra = f"; did you mean {hint[0]!r}?" if hint else ""
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]{extra}")


def _get(parser, section, key, cast, default):
    if parser.has_option(section, key):
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    return default


def _parse_seeds(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", raw)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise ValueError(f"empty seed range {raw!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(tok) for tok in raw.split(",") if tok.strip())


def _parse_values(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


def _parse_strategies(raw: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in raw.split(",") if tok.strip())


def load_config(path: str | Path | None) -> ExperimentSpec:
    """Load an experiment spec; every omitted field takes its default.

    Unknown sections or keys are hard errors with a line-localized
    message and a closest-match suggestion.
    """
    if path is None:
        return _validated_spec(
            SimConfig(), ExperimentSpec.axis, ExperimentSpec.values,
            ExperimentSpec.strategies, ExperimentSpec.seeds,
            ExperimentSpec.out_dir, ExperimentSpec.workers,
        )
    parser, text = _parse_ini(path)
    _check_keys(parser, text, _KNOWN_KEYS, path)

    ch_kwargs = {}
    for key in _KNOWN_KEYS["channel"]:
        if parser.has_option("channel", key):
            ch_kwargs[key] = _get(parser, "channel", key, float, None)
    rp_kwargs = {}
    for key in _KNOWN_KEYS["radio"]:
        cast = int if key == "packet_bits" else float
        if parser.has_option("radio", key):
            rp_kwargs[key] = _get(parser, "radio", key, cast, None)

    try:
        channel = ChannelParams(**ch_kwargs)
        radio = RadioParams(**rp_kwargs)
        base = SimConfig(
            area=(
                _get(parser, "sim", "area_width", float, 1000.0),
                _get(parser, "sim", "area_height", float, 1000.0),
            ),
            node_count=_get(parser, "sim", "node_count", int, SimConfig.node_count),
            cbr_pairs=_get(parser, "sim", "cbr_pairs", int, SimConfig.cbr_pairs),
            cbr_rate=_get(parser, "sim", "cbr_rate", float, SimConfig.cbr_rate),
            sim_time=_get(parser, "sim", "sim_time", float, SimConfig.sim_time),
            seed=_get(parser, "sim", "seed", int, SimConfig.seed),
            strategy=_get(parser, "sim", "strategy", str, SimConfig.strategy),
            channel=channel,
            radio=radio,
            initial_energy=_get(parser, "sim", "initial_energy", float, SimConfig.initial_energy),
            initial_power=_get(parser, "sim", "initial_power", float, SimConfig.initial_power),
            retransmission_limit=_get(
                parser, "sim", "retransmission_limit", int, SimConfig.retransmission_limit
            ),
            coordination_delay=_get(
                parser, "sim", "coordination_delay", float, SimConfig.coordination_delay
            ),
            erto_solver=_get(parser, "sim", "erto_solver", str, SimConfig.erto_solver),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    axis = _get(parser, "experiment", "axis", str, ExperimentSpec.axis)
    values = _get(parser, "experiment", "values", _parse_values, ExperimentSpec.values)
    strategies = _get(
        parser, "experiment", "strategies", _parse_strategies, ExperimentSpec.strategies
    )
    seeds = _get(parser, "experiment", "seeds", _parse_seeds, ExperimentSpec.seeds)
    out_dir = _get(parser, "experiment", "out_dir", str, ExperimentSpec.out_dir)
    workers = _get(parser, "experiment", "workers", int, ExperimentSpec.workers)
    return _validated_spec(base, axis, values, strategies, seeds, out_dir, workers)


def _validated_spec(base, axis, values, strategies, seeds, out_dir, workers) -> ExperimentSpec:
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")
    if not values:
        raise ConfigError("experiment values must be non-empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError("experiment values must be strictly increasing")
    clean = []
    for v in values:
        if axis == "node_count":
            if v != int(v) or int(v) < 2:
                raise ConfigError(f"node_count value out of range: {v!r}")
            clean.append(int(v))
        elif axis == "cbr_pairs":
            if v != int(v) or int(v) < 1:
                raise ConfigError(f"cbr_pairs value out of range: {v!r}")
            clean.append(int(v))
        else:
            if v <= 0:
                raise ConfigError(f"time value out of range: {v!r}")
            clean.append(float(v))
    if not strategies:
        raise ConfigError("strategies must be non-empty")
    for s in strategies:
        if s not in ("erto", "exor", "tcor", "eeor"):
            raise ConfigError(f"unknown strategy {s!r}")
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    if workers < 0:
        raise ConfigError("workers must be non-negative")
    return ExperimentSpec(
        base=base,
        axis=axis,
        values=tuple(clean),
        strategies=tuple(strategies),
        seeds=tuple(seeds),
        out_dir=out_dir,
        workers=workers,
    )


def derive_config(base: SimConfig, axis: str, value, strategy: str, seed: int) -> SimConfig:
    """The config of one sweep cell."""
    fields = {"strategy": strategy, "seed": seed}
    if axis == "node_count":
        fields["node_count"] = int(value)
    elif axis == "cbr_pairs":
        fields["cbr_pairs"] = int(value)
    else:
        fields["sim_time"] = float(value)
    return dataclasses.replace(base, **fields)


def _sweep_job(args):
    axis_idx, strat_idx, seed_idx, cfg = args
    return axis_idx, strat_idx, seed_idx, run(cfg)


def run_sweep(spec: ExperimentSpec) -> SweepResult:
    """Execute every (axis value, strategy, seed) cell; deterministic order."""
    jobs = []
    for ai, value in enumerate(spec.values):
        for si, strategy in enumerate(spec.strategies):
            for ki, seed in enumerate(spec.seeds):
                jobs.append((ai, si, ki, derive_config(spec.base, spec.axis, value, strategy, seed)))
    workers = spec.workers or os.cpu_count() or 1
    results = {}
    if workers == 1:
        for job in jobs:
            ai, si, ki, metrics = _sweep_job(job)
            results[(ai, si, ki)] = metrics
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for ai, si, ki, metrics in pool.map(_sweep_job, jobs, chunksize=1):
                results[(ai, si, ki)] = metrics
    points = []
    for ai, value in enumerate(spec.values):
        per_strategy = {}
        for si, strategy in enumerate(spec.strategies):
            per_strategy[strategy] = tuple(
                results[(ai, si, ki)] for ki in range(len(spec.seeds))
            )
        points.append((float(value), per_strategy))
    return SweepResult(axis=spec.axis, points=tuple(points))


def _write_lines(path: Path, lines) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in lines))


RUNS_HEADER = (
    "axis,axis_value,strategy,seed,pdr,mean_delay,throughput,residual_energy_ratio,"
    "power_adjustments,generated,delivered,total_sends,topology_fallbacks,drops"
)


def _runs_rows(spec: ExperimentSpec, sweep: SweepResult):
    rows = [RUNS_HEADER]
    for (value, per_strategy) in sweep.points:
        for strategy in spec.strategies:
            for seed, m in zip(spec.seeds, per_strategy[strategy]):
                drops = ";".join(f"{k}={v}" for k, v in sorted(m.drops_by_cause.items()))
                rows.append(
                    ",".join(
                        [
                            spec.axis,
                            fmt(value),
                            strategy,
                            str(seed),
                            fmt(m.pdr),
                            fmt(m.mean_delay),
                            fmt(m.throughput),
                            fmt(m.residual_energy_ratio),
                            str(m.power_adjustments),
                            str(m.generated),
                            str(m.delivered),
                            str(m.total_sends),
                            str(m.topology_fallbacks),
                            drops,
                        ]
                    )
                )
    return rows


def write_sweep_outputs(spec: ExperimentSpec, sweep: SweepResult, out_dir: Path) -> list[Path]:
    """runs.csv, one figure CSV per metric, and the reproducibility manifest."""
    written = []
    runs_path = out_dir / "runs.csv"
    _write_lines(runs_path, _runs_rows(spec, sweep))
    written.append(runs_path)

    summary = aggregate(sweep)
    for fig_name, metric in FIGURE_METRICS:
        rows = ["axis,strategy,mean,std,ci_lo,ci_hi"]
        for value, strategy, mean, std, lo, hi in figure_rows(summary, metric):
            rows.append(
                ",".join([fmt(value), strategy, fmt(mean), fmt(std), fmt(lo), fmt(hi)])
            )
        path = out_dir / f"{fig_name}.csv"
        _write_lines(path, rows)
        written.append(path)

    written.append(write_manifest(spec, out_dir))
    return written


def write_manifest(spec: ExperimentSpec, out_dir: Path) -> Path:
    """Full resolved configuration, seed list, and artifact version."""
    cfg = configparser.ConfigParser(interpolation=None)
    cfg["meta"] = {"artifact_version": __version__}
    base = spec.base
    cfg["sim"] = {
        "area_width": fmt(base.area[0]),
        "area_height": fmt(base.area[1]),
        "node_count": str(base.node_count),
        "cbr_pairs": str(base.cbr_pairs),
        "cbr_rate": fmt(base.cbr_rate),
        "sim_time": fmt(base.sim_time),
        "seed": str(base.seed),
        "strategy": base.strategy,
        "initial_energy": fmt(base.initial_energy),
        "initial_power": fmt(base.initial_power),
        "retransmission_limit": str(base.retransmission_limit),
        "coordination_delay": fmt(base.coordination_delay),
        "erto_solver": base.erto_solver,
    }
    cfg["channel"] = {
        k: fmt(getattr(base.channel, k)) for k in _KNOWN_KEYS["channel"]
    }
    cfg["radio"] = {k: fmt(getattr(base.radio, k)) for k in _KNOWN_KEYS["radio"]}
    cfg["experiment"] = {
        "axis": spec.axis,
        "values": ",".join(fmt(v) for v in spec.values),
        "strategies": ",".join(spec.strategies),
        "seeds": ",".join(str(s) for s in spec.seeds),
        "out_dir": spec.out_dir,
        "workers": str(spec.workers),
    }
    path = out_dir / "manifest.ini"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        cfg.write(fh)
    return path


# -- subcommands -------------------------------------------------------


def cmd_validate(spec: ExperimentSpec) -> int:
    print(f"config ok: axis={spec.axis} values={list(spec.values)}")
    print(f"strategies={list(spec.strategies)} seeds={len(spec.seeds)} out={spec.out_dir}")
    return 0


def cmd_run(spec: ExperimentSpec, trace_path: str | None = None) -> int:
    cfg = spec.base
    trace_rows: list[str] | None = None
    sink = None
    if trace_path:
        trace_rows = ["event,f1,f2,f3,f4,f5"]

        def sink(event, *fields):
            padded = [fmt(f) for f in fields] + [""] * max(0, 5 - len(fields))
            trace_rows.append(",".join([event] + padded))

    metrics = run(cfg, trace=sink)
    out_dir = Path(spec.out_dir)
    single = ExperimentSpec(
        base=cfg,
        axis=spec.axis,
        values=(1,),
        strategies=(cfg.strategy,),
        seeds=(cfg.seed,),
        out_dir=spec.out_dir,
        workers=1,
    )
    sweep = SweepResult(
        axis=spec.axis, points=((1.0, {cfg.strategy: (metrics,)}),)
    )
    _write_lines(out_dir / "runs.csv", _runs_rows(single, sweep))
    write_manifest(single, out_dir)
    if trace_path and trace_rows is not None:
        _write_lines(Path(trace_path), trace_rows)
    print(f"strategy={cfg.strategy} seed={cfg.seed} nodes={cfg.node_count} pairs={cfg.cbr_pairs}")
    print(
        f"pdr={fmt(metrics.pdr)} delay={fmt(metrics.mean_delay)} "
        f"throughput={fmt(metrics.throughput)} residual={fmt(metrics.residual_energy_ratio)}"
    )
    print(
        f"generated={metrics.generated} delivered={metrics.delivered} "
        f"sends={metrics.total_sends} adjustments={metrics.power_adjustments}"
    )
    return 0


def cmd_sweep(spec: ExperimentSpec) -> int:
    sweep = run_sweep(spec)
    written = write_sweep_outputs(spec, sweep, Path(spec.out_dir))
    summary = aggregate(sweep)
    print(f"sweep axis={spec.axis} points={len(spec.values)} "
          f"strategies={len(spec.strategies)} seeds={len(spec.seeds)}")
    for value, cells in summary.points:
        parts = [f"{name}:pdr={fmt(cells[name]['pdr'].mean)}" for name in summary.strategies]
        print(f"  {spec.axis}={fmt(value)}  " + "  ".join(parts))
    for path in written:
        print(f"wrote {path}")
    return 0


_CONTEXT_KEYS = {
    "context": ("seed", "d_sd", "rho", "candidates", "interferers", "max_degree")
}


def cmd_front(context_path: str, out_dir: str) -> int:
    parser, text = _parse_ini(context_path)
    _check_keys(parser, text, _CONTEXT_KEYS, context_path)
    seed = _get(parser, "context", "seed", int, 0)
    ctx = make_context(
        seed,
        d_sd=_get(parser, "context", "d_sd", float, 300.0),
        rho=_get(parser, "context", "rho", float, 1e-4),
        n_candidates=_get(parser, "context", "candidates", int, 20),
        n_interferers=_get(parser, "context", "interferers", int, 3),
        max_degree=_get(parser, "context", "max_degree", int, 20),
    )
    fronts = {
        "front_exhaustive.csv": pareto_front_exhaustive(ctx),
        "front_evolutionary.csv": pareto_front_evolutionary(ctx, EAParams(seed=seed)),
    }
    out = Path(out_dir)
    for name, front in fronts.items():
        rows = ["p_ts,n_rel,pdr_sc,p_md,cost"]
        for s in sorted(front, key=lambda s: (s.p_ts, s.n_rel)):
            rows.append(
                ",".join([fmt(s.p_ts), str(s.n_rel), fmt(s.pdr_sc), fmt(s.p_md), fmt(s.cost)])
            )
        _write_lines(out / name, rows)
        print(f"wrote {out / name} ({len(front)} solutions)")
    return 0


# -- argument handling -------------------------------------------------


def _env_default(name: str):
    return os.environ.get(ENV_PREFIX + name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ertosim",
        description="Opportunistic-routing simulator with Pareto topology control.",
        epilog=f"Environment overrides mirror flags with the {ENV_PREFIX} prefix "
        f"(e.g. {ENV_PREFIX}SEED, {ENV_PREFIX}OUT, {ENV_PREFIX}WORKERS).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=_env_default("CONFIG"), help="INI config path")
        p.add_argument("--seed", type=int, default=None, help="override the base seed")
        p.add_argument("--seeds", default=None, help="seed list or range, e.g. 1..10")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--strategy", default=None, help="strategy name(s), comma separated")
        p.add_argument("--workers", type=int, default=None, help="worker pool size")

    for name in ("run", "sweep", "validate"):
        p = sub.add_parser(name)
        common(p)
        if name == "run":
            p.add_argument("--trace", default=None, help="write a per-packet trace CSV")

    p = sub.add_parser("front")
    p.add_argument("--context", required=True, help="INI context spec path")
    p.add_argument("--out", default=None, help="output directory")
    return parser


def _apply_overrides(spec: ExperimentSpec, args) -> ExperimentSpec:
    base = spec.base
    seed = args.seed if args.seed is not None else _maybe_int(_env_default("SEED"))
    if seed is not None:
        base = dataclasses.replace(base, seed=seed)
    strategy_raw = args.strategy or _env_default("STRATEGY")
    strategies = spec.strategies
    if strategy_raw:
        strategies = _parse_strategies(strategy_raw)
        base = dataclasses.replace(base, strategy=strategies[0])
    seeds_raw = args.seeds or _env_default("SEEDS")
    seeds = _parse_seeds(seeds_raw) if seeds_raw else spec.seeds
    out = args.out or _env_default("OUT") or spec.out_dir
    workers_raw = args.workers if args.workers is not None else _maybe_int(_env_default("WORKERS"))
    workers = workers_raw if workers_raw is not None else spec.workers
    try:
        return _validated_spec(base, spec.axis, spec.values, strategies, seeds, out, workers)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _maybe_int(raw):
    return int(raw) if raw is not None and raw != "" else None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "front":
            out = args.out or _env_default("OUT") or "results"
            return cmd_front(args.context, out)
        spec = load_config(args.config)
        spec = _apply_overrides(spec, args)
        if args.command == "validate":
            return cmd_validate(spec)
        if args.command == "run":
            return cmd_run(spec, trace_path=getattr(args, "trace", None))
        return cmd_sweep(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit code 3
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
