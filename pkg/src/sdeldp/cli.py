"""Command line front end: `ldp <subcommand> --config ... [--seed --out --threads]`.

Subcommands
-----------
coeffs    dump raw and modified coefficients plus transforms on a state grid (CSV)
action    evaluate the action of a path CSV under a model (JSON)
minimize  minimise the action for the configured event (JSON + path CSV)
simulate  sample paths, dump terminal values (binary) and optional path CSVs
verify    run the noise-ladder experiment and compare against the minimised action
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .action import rate_functional
from .config import Config, ConfigError, ModelError, load_config
from .harness import estimate_event, ldp_curve
from .minimize import minimize_action
from .paths import GridPath
from .piecewise import modify, s_transform, sigma_transform
from .simulate import SimConfig, euler_maruyama, patchwork_sample, terminal_values, write_terminal_dump

__all__ = ["main", "entry", "run_experiment"]


def _json_dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _float_cell(x) -> str:
    return f"{x:.17g}"


def cmd_coeffs(cfg: Config, args) -> int:
    model = cfg.model
    pair = model.modified
    R = model.a.clamp_radius
    lo, hi = (-R, R) if math.isfinite(R) else (model.x0 - 5.0, model.x0 + 5.0)
    xs = np.linspace(lo, hi, args.grid_n)
    xs = np.unique(np.concatenate([xs, np.asarray(pair.breakpoints)]))
    rows = np.column_stack([
        xs, model.a(xs), model.sigma(xs), pair.a_bar(xs), pair.sigma_bar(xs),
        s_transform(pair, xs), sigma_transform(pair, xs), pair.b_bar(xs),
    ])
    out = os.path.join(args.out, "coeffs.csv")
    with open(out, "w") as fh:
        fh.write("x,a,sigma,a_bar,sigma_bar,S,Sigma,B_bar\n")
        for row in rows:
            fh.write(",".join(_float_cell(v) for v in row) + "\n")
    prov = [{"z": p.z, "rule": p.rule, "side": p.side, "tie": p.tie,
             "a_value": p.a_value, "sigma_value": p.sigma_value}
            for p in pair.provenance]
    _json_dump({"breakpoints": prov, "bounds": {"C": model.bounds[0], "c": model.bounds[1]}},
               os.path.join(args.out, "provenance.json"))
    print(f"wrote {out}")
    return 0


def cmd_action(cfg: Config, args) -> int:
    path = GridPath.from_csv(args.path)
    pair = cfg.model.modified
    br = rate_functional(pair, path, cfg.model.x0)
    i1 = None if math.isinf(br.total) else br.kinetic
    payload = {
        "total": br.total if math.isfinite(br.total) else "inf",
        "kinetic": i1 if i1 is not None else "inf",
        "boundary": br.boundary,
        "potential": br.potential,
        "quadrature_cells": br.quadrature_cells,
    }
    out = os.path.join(args.out, "action.json")
    _json_dump(payload, out)
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_minimize(cfg: Config, args) -> int:
    if cfg.experiment is None:
        raise ConfigError("experiment", "missing required field (carries the event)")
    model = cfg.model
    res = minimize_action(model, model.modified, cfg.experiment.event,
                          cfg.optimize.n, cfg.optimize.restarts, args.seed)
    out = os.path.join(args.out, "minimize.json")
    _json_dump({
        "value": res.value,
        "converged": res.converged,
        "restarts_used": res.restarts_used,
        "smoothing_trace": [[rho, val] for rho, val in res.smoothing_trace],
    }, out)
    res.argmin.to_csv(os.path.join(args.out, "argmin.csv"))
    print(f"minimum action {res.value:.6g} (converged={res.converged})")
    return 0


def cmd_simulate(cfg: Config, args) -> int:
    if cfg.experiment is None:
        raise ConfigError("experiment", "missing required field")
    exp = cfg.experiment
    sim = SimConfig(cfg.model, exp.epsilons[0], exp.h, exp.n_paths, args.seed)
    xT, _, _ = terminal_values(sim, sampler=args.sampler, threads=args.threads)
    dump = os.path.join(args.out, "terminals.bin")
    write_terminal_dump(dump, xT)
    if args.path_index is not None:
        if args.sampler == "patchwork":
            p = patchwork_sample(sim, args.path_index)
        else:
            p = euler_maruyama(sim, args.path_index)
        p.to_csv(os.path.join(args.out, f"path_{args.path_index}.csv"))
    print(f"wrote {dump} ({xT.size} terminal values)")
    return 0


def cmd_verify(cfg: Config, args) -> int:
    if cfg.experiment is None:
        raise ConfigError("experiment", "missing required field")
    exp = cfg.experiment
    report = ldp_curve(cfg.model, exp.event, exp.epsilons, exp.n_paths, exp.h,
                       exp.tilt, args.seed, cfg.optimize.n, cfg.optimize.restarts,
                       threads=args.threads)
    _json_dump(report.to_dict(), os.path.join(args.out, "report.json"))
    curve = os.path.join(args.out, "curve.csv")
    with open(curve, "w") as fh:
        fh.write("eps,n,hits,p_hat,ci_low,ci_high,scaled_log\n")
        for est in report.estimates:
            fh.write(est.row() + "\n")
    gap = report.gap
    print(f"rate target {report.rate_target:.6g}, extrapolated {report.extrapolated:.6g}, "
          f"gap {gap:.6g}" if not math.isnan(gap) else "extrapolation unusable")
    return 0


_COMMANDS = {
    "coeffs": (cmd_coeffs, False),
    "action": (cmd_action, False),
    "minimize": (cmd_minimize, False),
    "simulate": (cmd_simulate, True),
    "verify": (cmd_verify, True),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldp", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=1)
        if name == "coeffs":
            p.add_argument("--grid-n", type=int, default=401)
        if name == "action":
            p.add_argument("--path", required=True, help="two-column CSV (t,f)")
        if name == "simulate":
            p.add_argument("--sampler", choices=["euler", "patchwork"], default="euler")
            p.add_argument("--path-index", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler, needs_exp = _COMMANDS[args.command]
    try:
        cfg = load_config(args.config, need_experiment=needs_exp)
        os.makedirs(args.out, exist_ok=True)
        return handler(cfg, args)
    except ConfigError as e:
        json.dump({"error": e.to_json()}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except ModelError as e:
        json.dump({"error": e.to_json()}, sys.stderr)
        sys.stderr.write("\n")
        return 3
    except (ValueError, OSError) as e:
        json.dump({"error": {"kind": type(e).__name__, "message": str(e)}}, sys.stderr)
        sys.stderr.write("\n")
        return 1


def run_experiment(config_path: str, command: str = "verify", seed: int = 0,
                   out: str = ".", threads: int = 1) -> int:
    """Programmatic entry point; mirrors the CLI and returns its exit status."""
    argv = [command, "--config", str(config_path), "--seed", str(seed),
            "--out", str(out), "--threads", str(threads)]
    return main(argv)


def entry() -> None:
    sys.exit(main())
