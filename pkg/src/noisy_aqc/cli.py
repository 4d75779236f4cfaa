"""Command-line interface: ``noisy-aqc <subcommand> [options]``.

Exit status is 0 on success, 2 when ``validate`` finds a trace below the
significant-figure threshold and 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import FitError, TradeoffError, find_tradeoff, fit_power_law
from .config import ConfigError, RunConfig
from .dynamics import IntegrationError, init_exact, integrate
from .export import (ExportError, curve_from_results, read_curve_csv, read_jsonl, write_curve_csv,
                     write_gaps_csv, write_jsonl, write_svg, write_trace_csv)
from .hamiltonian import BIAS_PRESETS, OPERATIONS, build_set
from .lzs import detect_crossings
from .noise import NoiseConfig, ConstantSchedule, init_path
from .oracle import OracleError, compare_traces, reference_trace
from .runner import EnsembleError, simulate, sweep

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2

# flag -> dotted config key
_OVERRIDES = {
    "operation": "operation",
    "bias_preset": "bias_preset",
    "z_inv": "z_inv",
    "mu": "mu",
    "tau": "tau",
    "mode": "noise.mode",
    "schedule": "noise.schedule.type",
    "epsilon": "noise.schedule.epsilon",
    "epsilon0": "noise.schedule.epsilon0",
    "alpha": "noise.schedule.alpha",
    "base_step": "integrator.base_step",
    "tol": "integrator.tol",
    "gap_threshold": "integrator.gap_threshold",
    "max_depth": "integrator.max_depth",
    "grid_points": "grid_points",
    "n": "ensemble.n",
    "seed": "ensemble.seed",
    "jobs": "ensemble.jobs",
    "axis": "sweep.axis",
    "values": "sweep.values",
    "T": "sweep.T",
    "p_min": "fit.p_min",
    "p_max": "fit.p_max",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--operation", choices=sorted(OPERATIONS))
    p.add_argument("--bias-preset", choices=BIAS_PRESETS)
    p.add_argument("--z-inv", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--mode", choices=("off", "frozen", "ou"))
    p.add_argument("--schedule", choices=("constant", "tanh"))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--epsilon0", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--base-step", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--gap-threshold", type=float)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--n", type=int, help="ensemble size")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.add_argument("--axis", choices=("speed", "amplitude"))
    p.add_argument("--values", type=float, nargs="+", help="sweep values (T for speed, epsilon for amplitude)")
    p.add_argument("--T", type=float, help="sweep duration for amplitude sweeps")
    p.add_argument("--p-min", type=float)
    p.add_argument("--p-max", type=float)


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {}
    for flag, key in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = list(value) if isinstance(value, list) else value
    return cfg.replace(**changes) if changes else cfg


def _load_curve(path: Path, axis: str | None = None):
    if path.suffix == ".jsonl":
        results = read_jsonl(path)
        if axis is None:
            axis = results[0].config["sweep"]["axis"] if results else "speed"
        return curve_from_results(results, axis)
    return read_curve_csv(path)


# -- subcommands -------------------------------------------------------------

def cmd_spectrum(args) -> int:
    cfg = load_config(args)
    sim = simulate(cfg, args.index)
    write_trace_csv(sim.trace, args.out)
    if args.gaps:
        write_gaps_csv(sim.trace, args.gaps)
    events = detect_crossings(sim.trace)
    if args.events:
        Path(args.events).write_text(json.dumps([e.to_dict() for e in events], indent=1))
    d = sim.trace.diagnostics
    print(f"wrote {args.out}: {len(sim.trace.lambdas)} grid points, {d['steps']} steps, "
          f"{len(events)} gap minima, min ground gap {np.min(sim.trace.gaps[:, 0]):.4g}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args)
    eps = cfg.noise.schedule.epsilon if cfg.noise.schedule.type == "constant" else cfg.noise.schedule.epsilon0
    if args.all:
        cases = [(op, pre, e) for pre in BIAS_PRESETS for op in OPERATIONS for e in (0.0, eps)]
    else:
        cases = [(cfg.operation, cfg.bias_preset, eps if cfg.noise.mode != "off" else 0.0)]
    opts = cfg.integrator_options()
    worst = np.inf
    for op, pre, e in cases:
        hset = build_set(op, pre, cfg.z_inv, cfg.mu)
        mode = "frozen" if e > 0 else "off"
        path = init_path(NoiseConfig(tau=cfg.tau, schedule=ConstantSchedule(e), mode=mode,
                                     seed=cfg.ensemble.seed), index=args.index)
        trace, _ = integrate(init_exact(hset, path.dh), path, opts)
        ref = reference_trace(hset, path.dh, trace.lambdas)
        sig = compare_traces(ref, trace)
        worst = min(worst, sig)
        flag = "ok" if sig >= args.min_sigfigs else "FAIL"
        print(f"{op:7s} {pre:16s} eps={e:<5g} sig-figs {sig:6.2f}  {flag}")
    print(f"worst significant figures: {worst:.2f} (threshold {args.min_sigfigs:g})")
    return EXIT_OK if worst >= args.min_sigfigs else EXIT_INVALID


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    curve = sweep(cfg)
    if args.out_jsonl:
        write_jsonl(curve.results, args.out_jsonl)
    if args.out_csv:
        write_curve_csv(curve, args.out_csv)
    if args.svg:
        write_svg([curve], args.svg, [f"{cfg.operation} {cfg.noise.mode}"])
    name = "speed" if curve.axis == "speed" else "epsilon"
    print(f"{name:>12s} {'T':>10s} {'success':>10s} {'stderr':>10s} {'fidelity':>10s}")
    for i in range(len(curve)):
        print(f"{curve.values[i]:12.5g} {curve.T[i]:10.4g} {curve.mean[i]:10.4g} "
              f"{curve.stderr[i]:10.3g} {curve.fidelity[i]:10.4g}")
    if curve.axis == "speed":
        try:
            fit = fit_power_law(curve, (cfg.fit.p_min, cfg.fit.p_max))
            print(f"gamma = {fit.gamma:.4f} +- {fit.stderr:.4f} ({fit.method}), R^2 = {fit.r2:.4f}, "
                  f"{fit.n_points} points")
        except FitError as exc:
            print(f"no fit: {exc}")
    return EXIT_OK


def cmd_fit(args) -> int:
    curve = _load_curve(args.curve, "speed")
    fit = fit_power_law(curve, (args.p_min, args.p_max))
    print(f"gamma = {fit.gamma:.6f}")
    print(f"stderr = {fit.stderr:.6f} ({fit.method}); ols stderr = {fit.ols_stderr:.6f}")
    print(f"R^2 = {fit.r2:.6f}; points = {fit.n_points}; speed window = [{fit.window[0]:.6g}, {fit.window[1]:.6g}]")
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    curve = _load_curve(args.curve, "amplitude")
    res = find_tradeoff(curve)
    if res.epsilon_star is None:
        print(res.message)
    else:
        print(f"epsilon* = {res.epsilon_star:.6g} ({res.message})")
    return EXIT_OK


def cmd_export_svg(args) -> int:
    curves = [_load_curve(p) for p in args.curves]
    labels = args.labels or [p.stem for p in args.curves]
    if len(labels) != len(curves):
        raise ValueError("need one label per curve")
    write_svg(curves, args.out, labels)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisy-aqc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="integrate one realization and write its spectrum CSV")
    _add_config_flags(p)
    p.add_argument("--index", type=int, default=0, help="realization index")
    p.add_argument("--out", type=Path, required=True, help="trace CSV (energies by rank)")
    p.add_argument("--gaps", type=Path, help="adjacent-gap CSV")
    p.add_argument("--events", type=Path, help="gap minima as JSON")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("validate", help="compare the gas against direct diagonalisation")
    _add_config_flags(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--all", action="store_true", help="all operations and presets, noise off and frozen")
    p.add_argument("--min-sigfigs", type=float, default=4.0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="ensemble sweep over speed or noise amplitude")
    _add_config_flags(p)
    p.add_argument("--out-jsonl", type=Path)
    p.add_argument("--out-csv", type=Path)
    p.add_argument("--svg", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="power-law exponent from a speed-sweep curve (CSV or JSONL)")
    p.add_argument("curve", type=Path)
    p.add_argument("--p-min", type=float, default=0.02)
    p.add_argument("--p-max", type=float, default=0.5)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tradeoff", help="success/fidelity intersection of an amplitude sweep")
    p.add_argument("curve", type=Path)
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("export-svg", help="plot sweep curves")
    p.add_argument("curves", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--labels", nargs="+")
    p.set_defaults(func=cmd_export_svg)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FitError, TradeoffError, EnsembleError, ExportError, IntegrationError,
            OracleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
