"""Command-line front end for the experiments and probes.

One subcommand per experiment. Options resolve in three layers: built-in
defaults, then a flat JSON config file given with --config, then explicit
flags, which always win. Every command honors --seed and is run-to-run
deterministic; --dry-run validates the configuration and prints the resolved
plan without computing anything. All floating-point output is printed with
17 significant digits so values round-trip exactly.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import deviation as dev
from . import experiments as exp
from .initializers import InitSpec
from .model import ModelSpec, sample_dataset
from .population import PopulationState, build_rule, invert_q, population_trajectory, sandwich_sequences
from .rng import derive_seed
from .sample_em import StopRule, run_em
from .svg import write_line_chart

__all__ = ["main", "run", "CliError"]


class CliError(Exception):
    """Invalid flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse wants to sys.exit(2) on bad flags; funnel everything through
    # CliError instead so the documented exit codes hold.
    def error(self, message):
        raise CliError(f"{message}\n{self.format_usage()}")


_UNSET = "\x00unset"


@dataclass(frozen=True)
class _Opt:
    typ: str  # int | float | str | ints | floats | vec
    default: object
    help: str


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _coerce(name: str, typ: str, value):
    """Coerce a flag string or a JSON value to the option's type."""
    try:
        if typ == "int":
            if isinstance(value, bool) or (not isinstance(value, (int, str))):
                raise ValueError
            return int(value)
        if typ == "float":
            if isinstance(value, bool) or (not isinstance(value, (int, float, str))):
                raise ValueError
            return float(value)
        if typ == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        items = value.split(",") if isinstance(value, str) else list(value)
        if typ == "ints":
            return tuple(int(v) for v in items)
        # floats and vec
        return tuple(float(v) for v in items)
    except (TypeError, ValueError):
        raise CliError(f"invalid value for '{name}': {value!r} (expected {typ})") from None


_COMMON = {
    "seed": _Opt("int", 0, "master seed; every command is deterministic in it"),
    "out": _Opt("str", "out", "output directory, created if missing"),
    "threads": _Opt("int", 0, "worker threads inside experiments; 0 = number of cores"),
}

_EM_OPTS = {
    "init": _Opt("str", "fixed", "initializer: random|spectral|fixed|zero"),
    "c0": _Opt("float", 1.0, "scale constant of the random-sphere initializer"),
    "theta0": _Opt("vec", (1.0,), "comma-separated start vector for --init fixed"),
    "max_iters": _Opt("int", 0, "iteration cap; 0 = ceil(c_iter * sqrt(n))"),
    "c_iter": _Opt("float", 10.0, "budget constant in ceil(c_iter * sqrt(n))"),
    "rel_tol": _Opt("float", 1e-8, "relative step tolerance of the stop rule"),
}

_SPECS: dict[str, dict[str, _Opt]] = {
    "trajectory": {
        "d": _Opt("int", 1, "dimension"),
        "s": _Opt("float", 0.0, "norm of the true center (first axis)"),
        "n": _Opt("int", 10_000, "sample size"),
        **_EM_OPTS,
        **_COMMON,
    },
    "rate-sweep": {
        "d": _Opt("int", 1, "dimension"),
        "s": _Opt("float", 0.0, "norm of the true center"),
        "n_grid": _Opt("ints", (1_000, 10_000, 100_000), "sample sizes, comma-separated"),
        "replicates": _Opt("int", 20, "Monte Carlo replicates per grid point"),
        "dtype": _Opt("str", "float64", "EM inner-loop dtype: float64|float32"),
        **_EM_OPTS,
        **_COMMON,
    },
    "risk-compare": {
        "d": _Opt("int", 10, "dimension"),
        "s_grid": _Opt("floats", (0.1, 0.3, 1.0), "center norms, comma-separated"),
        "n": _Opt("int", 100_000, "sample size"),
        "replicates": _Opt("int", 20, "Monte Carlo replicates per grid point"),
        "estimators": _Opt("str", "em,spectral,zero", "estimators to score"),
        "dtype": _Opt("str", "float64", "EM inner-loop dtype: float64|float32"),
        **{k: v for k, v in _EM_OPTS.items() if k != "theta0"},
        # no --theta0 here, so a fixed start cannot be expressed; default to
        # the random-sphere initializer instead
        "init": _Opt("str", "random", "initializer: random|spectral|zero"),
        **_COMMON,
    },
    "population": {
        "alpha0": _Opt("float", 0.1, "initial signal coordinate"),
        "beta0": _Opt("float", 0.7, "initial orthogonal coordinate"),
        "s": _Opt("float", 0.35, "norm of the true center"),
        "iters": _Opt("int", 60, "number of population steps"),
        "order": _Opt("int", 80, "quadrature order"),
        **_COMMON,
    },
    "sandwich": {
        "theta0": _Opt("float", 0.5, "common start of both envelopes"),
        "s": _Opt("float", 1.0, "norm of the true center"),
        "w": _Opt("float", 0.05, "relative perturbation of the envelopes"),
        "iters": _Opt("int", 200, "number of steps"),
        "order": _Opt("int", 80, "quadrature order"),
        **_COMMON,
    },
    "deviation": {
        "d": _Opt("int", 2, "dimension"),
        "s": _Opt("float", 1.0, "norm of the true center"),
        "n": _Opt("int", 100_000, "sample size"),
        "directions": _Opt("int", 32, "random probe directions"),
        "radii": _Opt("int", 24, "log-spaced probe radii"),
        "order": _Opt("int", 80, "quadrature order"),
        **_COMMON,
    },
    "mle-probe": {
        "d": _Opt("int", 2, "dimension"),
        "s": _Opt("float", 1.0, "norm of the true center"),
        "n": _Opt("int", 100_000, "sample size"),
        "burn_in": _Opt("int", 200, "steps before the observation window"),
        "extra": _Opt("int", 20, "length of the observation window"),
        "init": _Opt("str", "random", "initializer: random|spectral|zero"),
        "c0": _Opt("float", 1.0, "scale constant of the random-sphere initializer"),
        **_COMMON,
    },
    "figure2": {
        "order": _Opt("int", 80, "quadrature order"),
        **_COMMON,
    },
    "sublinear": {
        "iters": _Opt("int", 10_000, "number of population steps"),
        "order": _Opt("int", 80, "quadrature order"),
        **_COMMON,
    },
}

_INIT_KINDS = {"random": "random_sphere", "random_sphere": "random_sphere",
               "spectral": "spectral", "fixed": "fixed", "zero": "zero"}


def _build_parser() -> _Parser:
    parser = _Parser(prog="em2gm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for cmd, opts in _SPECS.items():
        p = sub.add_parser(cmd, help=f"run the {cmd} experiment")
        for name, opt in opts.items():
            p.add_argument("--" + name.replace("_", "-"), dest=name,
                           default=_UNSET, metavar=opt.typ.upper(), help=opt.help)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="flat JSON file with the keys above; flags override it")
        p.add_argument("--dry-run", dest="dry_run", action="store_true",
                       help="validate and print the resolved plan, then exit")
    return parser


def _resolve(cmd: str, args: argparse.Namespace) -> dict:
    opts = _SPECS[cmd]
    resolved = {name: opt.default for name, opt in opts.items()}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as e:
            raise CliError(f"malformed JSON in config file {args.config}: {e}") from None
        if not isinstance(loaded, dict):
            raise CliError(f"config file {args.config} must hold a JSON object")
        for key, value in loaded.items():
            norm = key.replace("-", "_")
            if norm not in opts:
                raise CliError(f"unknown config key '{key}' for command '{cmd}'")
            resolved[norm] = _coerce(norm, opts[norm].typ, value)
    for name, opt in opts.items():
        value = getattr(args, name)
        if value is not _UNSET:
            resolved[name] = _coerce(name, opt.typ, value)
    return resolved


def _init_spec(cfg: dict, d: int) -> InitSpec:
    kind = _INIT_KINDS.get(cfg["init"])
    if kind is None:
        raise CliError(f"unknown init '{cfg['init']}'; expected one of "
                       "random, spectral, fixed, zero")
    if kind == "fixed":
        theta0 = cfg.get("theta0")
        if theta0 is None:
            raise CliError("--init fixed requires --theta0")
        if len(theta0) != d:
            raise CliError(f"--theta0 has length {len(theta0)}, expected d={d}")
        return InitSpec(kind="fixed", fixed_value=tuple(theta0), c0=cfg["c0"])
    return InitSpec(kind=kind, c0=cfg["c0"])


def _stop_rule(cfg: dict, n: int) -> StopRule:
    if cfg["max_iters"] > 0:
        return StopRule(max_iters=cfg["max_iters"], rel_tol=cfg["rel_tol"])
    return StopRule.for_n(n, c_iter=cfg["c_iter"], rel_tol=cfg["rel_tol"])


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    os.makedirs(out, exist_ok=True)
    return out


def _threads(cfg: dict) -> int:
    return cfg["threads"] if cfg["threads"] > 0 else (os.cpu_count() or 1)


def _cmd_trajectory(cfg: dict) -> str:
    out = _out_dir(cfg)
    spec = ModelSpec.along_axis(cfg["s"], cfg["d"])
    data = sample_dataset(spec, cfg["n"], cfg["seed"])
    from .initializers import make_init
    theta0 = make_init(_init_spec(cfg, cfg["d"]), data, seed=derive_seed(cfg["seed"], 1))
    traj = run_em(data, theta0, _stop_rule(cfg, cfg["n"]), spec, keep_iterates=True)
    path = out / "trajectory.csv"
    traj.to_csv(path)
    t = np.arange(len(traj))
    write_line_chart(out / "trajectory.svg", t,
                     {"loss": traj.loss, "alpha": traj.alpha, "beta": traj.beta},
                     title="EM trajectory", xlabel="t", ylabel="value")
    return f"final_loss={_fmt(traj.loss[-1])} stop={traj.stop_reason.value} -> {path}"


def _cmd_rate_sweep(cfg: dict) -> str:
    out = _out_dir(cfg)
    path = out / "rate_sweep.csv"
    config = exp.ExperimentConfig.from_product(
        cfg["n_grid"], [cfg["d"]], [cfg["s"]],
        replicates=cfg["replicates"], init=_init_spec(cfg, cfg["d"]),
        master_seed=cfg["seed"], output_path=path,
        stop=(StopRule(cfg["max_iters"], cfg["rel_tol"]) if cfg["max_iters"] > 0 else None),
        rel_tol=cfg["rel_tol"], c_iter=cfg["c_iter"], dtype=cfg["dtype"],
        threads=_threads(cfg))
    result = exp.rate_sweep(config)
    summary = result.summaries[0]
    write_line_chart(out / "rate_sweep.svg", summary.n_values,
                     {"mean loss": summary.mean_loss},
                     title="mean final loss vs n", xlabel="n", ylabel="loss",
                     logx=True, logy=True)
    slope = "nan" if summary.slope is None else _fmt(summary.slope)
    return f"slope={slope} -> {path}"


def _cmd_risk_compare(cfg: dict) -> str:
    out = _out_dir(cfg)
    estimators = tuple(e.strip() for e in cfg["estimators"].split(",") if e.strip())
    path = out / "risk.csv"
    config = exp.ExperimentConfig.from_product(
        [cfg["n"]], [cfg["d"]], cfg["s_grid"],
        replicates=cfg["replicates"], init=_init_spec(cfg, cfg["d"]),
        master_seed=cfg["seed"], output_path=path,
        rel_tol=cfg["rel_tol"], c_iter=cfg["c_iter"], dtype=cfg["dtype"],
        threads=_threads(cfg))
    comparison = exp.risk_compare(config, estimators)
    losses = {name: [comparison.mean_loss(name, cfg["n"], cfg["d"], s) for s in cfg["s_grid"]]
              for name in estimators}
    write_line_chart(out / "risk.svg", cfg["s_grid"], losses,
                     title="mean loss vs s", xlabel="s", ylabel="loss")
    lead = estimators[0]
    stats = " ".join(f"{name}={_fmt(np.mean(losses[name]))}" for name in estimators)
    return f"mean_loss[{lead} first] {stats} -> {path}"


def _cmd_population(cfg: dict) -> str:
    out = _out_dir(cfg)
    rule = build_rule(cfg["order"])
    states = population_trajectory(PopulationState(cfg["alpha0"], cfg["beta0"]),
                                   cfg["s"], cfg["iters"], rule)
    path = out / "population.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,alpha,beta\n")
        for t, st in enumerate(states):
            fh.write(f"{t},{_fmt(st.alpha)},{_fmt(st.beta)}\n")
    write_line_chart(out / "population.svg", np.arange(len(states)),
                     {"alpha": [st.alpha for st in states],
                      "beta": [st.beta for st in states]},
                     title="population EM", xlabel="t", ylabel="coordinate")
    return f"final_alpha={_fmt(states[-1].alpha)} final_beta={_fmt(states[-1].beta)} -> {path}"


def _cmd_sandwich(cfg: dict) -> str:
    out = _out_dir(cfg)
    rule = build_rule(cfg["order"])
    upper, lower = sandwich_sequences(cfg["theta0"], cfg["s"], cfg["w"], cfg["iters"], rule)
    path = out / "sandwich.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,lower,upper\n")
        for t in range(len(upper)):
            fh.write(f"{t},{_fmt(lower[t])},{_fmt(upper[t])}\n")
    write_line_chart(out / "sandwich.svg", np.arange(len(upper)),
                     {"upper": upper, "lower": lower},
                     title="sandwich envelopes", xlabel="t", ylabel="theta")
    lim_hi = invert_q(1.0 - cfg["w"], cfg["s"], rule) if cfg["w"] < 1.0 else math.nan
    return (f"final_lower={_fmt(lower[-1])} final_upper={_fmt(upper[-1])} "
            f"upper_limit={_fmt(lim_hi)} -> {path}")


def _cmd_deviation(cfg: dict) -> str:
    out = _out_dir(cfg)
    rule = build_rule(cfg["order"])
    spec = ModelSpec.along_axis(cfg["s"], cfg["d"])
    data = sample_dataset(spec, cfg["n"], cfg["seed"])
    grid = dev.default_probe_grid(spec, derive_seed(cfg["seed"], 1),
                                  n_directions=cfg["directions"], n_radii=cfg["radii"])
    probe = dev.relative_lipschitz_probe(data, spec, grid, rule)
    path = out / "deviation.csv"
    probe.to_csv(path)
    return f"sup_ratio={_fmt(probe.sup_ratio)} -> {path}"


def _cmd_mle_probe(cfg: dict) -> str:
    out = _out_dir(cfg)
    spec = ModelSpec.along_axis(cfg["s"], cfg["d"])
    data = sample_dataset(spec, cfg["n"], cfg["seed"])
    init = _init_spec({**cfg, "theta0": None}, cfg["d"])
    init = InitSpec(kind=init.kind, c0=init.c0, seed=derive_seed(cfg["seed"], 1))
    probe = exp.mle_contraction_probe(data, spec, init, cfg["burn_in"], cfg["extra"])
    path = out / "mle_probe.csv"
    probe.to_csv(path)
    max_r = "none" if probe.max_ratio is None else _fmt(probe.max_ratio)
    return f"max_ratio={max_r} window={probe.ratios.size} -> {path}"


def _cmd_figure2(cfg: dict) -> str:
    out = _out_dir(cfg)
    rule = build_rule(cfg["order"])
    result = exp.figure2_reproduction(rule)
    for name, run in (("figure2_nonmonotone", result.non_monotone_run),
                      ("figure2_monotone", result.monotone_run)):
        with open(out / f"{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("t,alpha,beta\n")
            for t, st in enumerate(run):
                fh.write(f"{t},{_fmt(st.alpha)},{_fmt(st.beta)}\n")
    flags = {"non_monotone_pass": result.non_monotone_pass,
             "monotone_pass": result.monotone_pass,
             "beta_decreasing_after_first": result.beta_decreasing_after_first}
    path = out / "figure2_flags.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(flags, fh, indent=2)
        fh.write("\n")
    write_line_chart(out / "figure2.svg",
                     np.arange(len(result.non_monotone_run)),
                     {"alpha (0.1,0.7)": [st.alpha for st in result.non_monotone_run],
                      "alpha (0.1,0.1)": [st.alpha for st in result.monotone_run]},
                     title="population signal coordinate, s=0.35",
                     xlabel="t", ylabel="alpha")
    return (f"non_monotone_pass={result.non_monotone_pass} "
            f"monotone_pass={result.monotone_pass} -> {path}")


def _cmd_sublinear(cfg: dict) -> str:
    out = _out_dir(cfg)
    rule = build_rule(cfg["order"])
    probe = exp.sublinear_rate_probe(rule, T=cfg["iters"])
    path = out / "sublinear.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,theta\n")
        for t, v in enumerate(probe.thetas):
            fh.write(f"{t},{_fmt(v)}\n")
    t = np.arange(1, len(probe.thetas))
    write_line_chart(out / "sublinear.svg", t, {"theta_t": probe.thetas[1:]},
                     title="signal-free population decay", xlabel="t",
                     ylabel="theta", logx=True, logy=True)
    return f"slope={_fmt(probe.slope)} -> {path}"


_HANDLERS = {
    "trajectory": _cmd_trajectory,
    "rate-sweep": _cmd_rate_sweep,
    "risk-compare": _cmd_risk_compare,
    "population": _cmd_population,
    "sandwich": _cmd_sandwich,
    "deviation": _cmd_deviation,
    "mle-probe": _cmd_mle_probe,
    "figure2": _cmd_figure2,
    "sublinear": _cmd_sublinear,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError(parser.format_usage())
        cfg = _resolve(args.command, args)
        if args.dry_run:
            plan = " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
            print(f"dry-run {args.command}: {plan}")
            return 0
        print(_HANDLERS[args.command](cfg))
        return 0
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
