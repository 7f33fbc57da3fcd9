"""Command-line entry point: ``stlgcp <subcommand> [options]``.

Every subcommand reads plain CSV/JSON and writes plain CSV/JSON into
``--out-dir``. A JSON ``--config`` file may supply any option by its long
name (``eps_space`` or ``eps-space``); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .contrast import ContrastSpec, GlobalFitResult, fit_global, fit_local
from .covariance import Gneiting, SeparableExponential
from .diagnostics import run_mc_test
from .geometry import PointPattern, window_volume
from .grf import SpaceTimeGrid
from .intensity import build_quadrature, fit_local_intensity, fit_poisson
from .kernels import KERNELS, bandwidth_variable, default_bandwidths
from .scenarios import get_scenario, replicate_scenario, table_header, table_row
from .simulate import SimulationConfig, lgcp_simulate
from .stats import LagGrid, k_inhom, pcf_global, pcf_local_all


def _triple(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected NX,NY,NT, got {text!r}")
    try:
        vals = tuple(int(v) for v in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three integers, got {text!r}") from None
    if min(vals) < 1:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return vals


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    g = c.add_argument_group("global options")
    g.add_argument("--window", help="X0,X1,Y0,Y1,T0,T1 or from-data (bounding box of the input)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--threads", type=int, default=1, help="worker processes for independent fits/simulations")
    g.add_argument("--out-dir", default=".", help="directory for all outputs")
    g.add_argument("--config", help="JSON file with option values (flags win)")
    return c


def _bandwidth_opts() -> argparse.ArgumentParser:
    b = argparse.ArgumentParser(add_help=False)
    g = b.add_argument_group("bandwidths and lag grid")
    for name in ("eps-space", "eps-time", "sigma-x", "sigma-y", "sigma-t"):
        g.add_argument(f"--{name}", type=float, help="override the automatic choice")
    g.add_argument("--kernel", choices=KERNELS, default="epanechnikov", help="pcf kernel")
    g.add_argument("--r-max", type=float, help="largest spatial lag (default: quarter of the window diagonal)")
    g.add_argument("--h-max", type=float, help="largest time lag (default: quarter of the duration)")
    g.add_argument("--n-r", type=int, default=15)
    g.add_argument("--n-h", type=int, default=15)
    g.add_argument("--intensity", help="constant value or a fit-intensity JSON (default: n / |W x T|)")
    g.add_argument("--covariates", help="x,y,t,z1[,z2...] CSV for covariate intensity models")
    return b


def build_parser() -> argparse.ArgumentParser:
    common, bws = _common(), _bandwidth_opts()
    parser = argparse.ArgumentParser(prog="stlgcp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate an LGCP by thinning")
    s.add_argument("--model", required=True, help="covariance JSON (parameters or a fit-global result)")
    s.add_argument("--local-params", help="per-point CSV from fit-local (patchwork local field)")
    s.add_argument("--n-expected", type=float, default=1000.0)
    s.add_argument("--grid", type=_triple, help="NX,NY,NT simulation grid")
    s.add_argument("--subgrid", type=_triple, help="NX,NY,NT blocks of the local field")
    s.add_argument("--lookup", choices=("nearest", "bilinear"), default="nearest")
    s.add_argument("--out", default="pattern.csv")
    s.add_argument("--field-out", help="also write the driving field as ix,iy,it,x,y,t,value")

    s = sub.add_parser("stats", parents=[common, bws], help="global pcf, optional local stack and K-function")
    s.add_argument("--pattern", required=True)
    s.add_argument("--stack", action="store_true", help="also write the per-point pcf stack")
    s.add_argument("--k", action="store_true", help="also write the inhomogeneous K-function")

    s = sub.add_parser("fit-intensity", parents=[common, bws], help="log-linear Poisson intensity fit")
    s.add_argument("--pattern", required=True)
    s.add_argument("--local", action="store_true", help="also fit local likelihoods on an evaluation grid")
    s.add_argument("--grid", type=_triple, default=(10, 10, 5), help="NX,NY,NT evaluation grid")
    s.add_argument("--np", type=int, dest="n_p", help="write variable bandwidths (distance to the np-th neighbour)")
    s.add_argument("--eps-floor", type=float, default=1e-3)

    for name, helptext in (("fit-global", "joint minimum-contrast fit"),
                           ("fit-local", "locally weighted minimum-contrast fit")):
        s = sub.add_parser(name, parents=[common, bws], help=helptext)
        s.add_argument("--pattern", required=True)
        s.add_argument("--family", choices=("sep_exp", "gneiting"), default="sep_exp")
        s.add_argument("--transform", choices=("identity", "log"), default="identity")
        s.add_argument("--constant-intensity", action="store_true", help="use n / |W x T| (the default)")

    s = sub.add_parser("diagnose", parents=[common, bws], help="Monte-Carlo K-function test")
    s.add_argument("--pattern", required=True)
    s.add_argument("--fit", help="fit-global JSON; omit for a Poisson null")
    s.add_argument("--local-params", help="fit-local CSV: simulate from the local model")
    s.add_argument("--q", type=int, default=39)
    s.add_argument("--grid", type=_triple, help="NX,NY,NT simulation grid")
    s.add_argument("--out", default="result.json")
    s.add_argument("--envelopes", default="envelopes.csv")

    s = sub.add_parser("replicate", parents=[common], help="simulation study for one built-in scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--replicates", type=int, default=10)
    s.add_argument("--n-expected", type=float, default=1000.0)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if not known.config or known.command not in subparsers:
        return parser.parse_args(argv)
    sub = subparsers[known.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    cfg = json.loads(Path(known.config).read_text())
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    values = {}
    for key, value in cfg.items():
        dest = {"np": "n_p"}.get(key, key.replace("-", "_"))
        if dest not in actions:
            raise ValueError(f"unknown config key {key!r} for {known.command}; valid: {sorted(actions)}")
        action = actions[dest]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if action.type is not None and isinstance(value, str):
            value = action.type(value)
        values[dest] = value
        action.required = False
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def _window(args):
    if args.window is None:
        raise ValueError("no window given: pass --window X0,X1,Y0,Y1,T0,T1 or --window from-data")
    return io.parse_window(args.window)


def _pattern(args) -> PointPattern:
    return io.read_pattern(args.pattern, _window(args))


def _out(args, name: str) -> Path:
    path = Path(name)
    return path if path.is_absolute() else Path(args.out_dir) / path


def _bandwidths(args, p: PointPattern):
    return default_bandwidths(p, eps_space=args.eps_space, eps_time=args.eps_time, sigma_x=args.sigma_x,
                              sigma_y=args.sigma_y, sigma_t=args.sigma_t, pcf_kernel=args.kernel)


def _lag_grid(args, p: PointPattern) -> LagGrid:
    d = LagGrid.default(p.window, args.n_r, args.n_h)
    return LagGrid.regular(args.r_max or d.r_max, args.h_max or d.h_max, args.n_r, args.n_h)


def _intensity(args, p: PointPattern):
    """Per-point intensity (array) and an evaluator for simulation (float or callable)."""
    spec = getattr(args, "intensity", None)
    if spec is None or getattr(args, "constant_intensity", False):
        lam = p.n / window_volume(p.window)
        return lam, lam
    try:
        lam = float(spec)
        return lam, lam
    except ValueError:
        pass
    d = io.read_json(spec)
    theta = np.asarray(d["theta"], dtype=float)
    lookup = None
    if len(theta) > 1:
        if not args.covariates:
            raise ValueError("intensity fit has covariates: pass the same --covariates file")
        _, lookup = io.read_covariates(args.covariates, p.window)

    def fn(xyt):
        xyt = np.atleast_2d(xyt)
        eta = np.full(len(xyt), theta[0])
        if lookup is not None:
            eta = eta + lookup(xyt) @ theta[1:]
        return np.exp(eta)

    return fn(p.points), fn


def cmd_simulate(args) -> None:
    window = _window(args)
    if window == "from-data":
        raise ValueError("simulate needs an explicit window")
    model = io.read_model(args.model)
    grid = SpaceTimeGrid(window, *args.grid) if args.grid else (
        SpaceTimeGrid(window, 32, 32, 50) if isinstance(model, SeparableExponential)
        else SpaceTimeGrid(window, 16, 16, 16))
    local_fit = local_p = None
    if args.local_params:
        local_p, local_fit = io.read_local_fit(args.local_params, window, GlobalFitResult(model, 0.0, True))
    rate = args.n_expected / window_volume(window)
    cfg = SimulationConfig(window, rate, grid, model, local_fit, local_p, args.seed, args.lookup, args.subgrid)
    sim = lgcp_simulate(cfg)
    io.write_pattern(_out(args, args.out), sim.pattern)
    if args.field_out:
        io.write_field(_out(args, args.field_out), sim.field)
    print(f"simulated {sim.pattern.n} points (lambda_max={sim.lam_max:.6g}, dominating {sim.n_dominating})")


def _need_two(p: PointPattern) -> None:
    if p.n < 2:
        raise ValueError(f"n < 2: the pattern has {p.n} point(s)")


def cmd_stats(args) -> None:
    p = _pattern(args)
    _need_two(p)
    bw, grid = _bandwidths(args, p), _lag_grid(args, p)
    lam, _ = _intensity(args, p)
    stack = pcf_local_all(p, lam, bw, grid) if args.stack else None
    io.write_statistic(_out(args, "pcf.csv"), pcf_global(p, lam, bw, grid, stack=stack))
    if stack is not None:
        io.write_stack(_out(args, "pcf_local.csv"), stack)
    if args.k:
        io.write_statistic(_out(args, "k.csv"), k_inhom(p, lam, grid))
    io.write_json(_out(args, "bandwidths.json"), _bw_dict(bw))


def _bw_dict(bw) -> dict:
    return {k: getattr(bw, k) for k in ("eps_space", "eps_time", "sigma_x", "sigma_y", "sigma_t",
                                        "pcf_kernel", "weight_kernel")}


def cmd_fit_intensity(args) -> None:
    p = _pattern(args)
    names, lookup = (None, None)
    if args.covariates:
        names, lookup = io.read_covariates(args.covariates, p.window)
    q = build_quadrature(p, covariates=lookup, covariate_names=names)
    fit = fit_poisson(q)
    out = fit.to_dict()
    out["n"] = p.n
    out["volume"] = window_volume(p.window)
    io.write_json(_out(args, "intensity.json"), out)
    print("theta: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(fit.column_names, fit.theta)))
    if args.local:
        bw = _bandwidths(args, p)
        field = fit_local_intensity(q, p, bw, args.grid)
        io.write_local_intensity(_out(args, "intensity_local.csv"), field)
    if args.n_p is not None:
        sig = bandwidth_variable(p, args.n_p, args.eps_floor)
        io.write_csv(_out(args, "bandwidths_variable.csv"), ("point_id", "sigma"), enumerate(sig))


def _spec(args, p: PointPattern) -> ContrastSpec:
    template = Gneiting(1.0, 1.0, 1.0) if args.family == "gneiting" else SeparableExponential(1.0, 1.0, 1.0)
    return ContrastSpec(_lag_grid(args, p), args.family, transform=args.transform, template=template)


def cmd_fit_global(args) -> GlobalFitResult:
    p = _pattern(args)
    _need_two(p)
    lam, _ = _intensity(args, p)
    fit = fit_global(p, lam, _spec(args, p), _bandwidths(args, p))
    io.write_json(_out(args, "fit_global.json"), fit.to_dict())
    print(json.dumps(fit.to_dict()["params"], sort_keys=True))
    return fit


def _summary_table(summary: dict) -> str:
    cols = ("min", "q1", "median", "mean", "q3", "max")
    lines = [f"{'':>8} " + " ".join(f"{c:>11}" for c in cols)]
    for name, s in summary.items():
        lines.append(f"{name:>8} " + " ".join(f"{s[c]:>11.4g}" for c in cols))
    return "\n".join(lines)


def cmd_fit_local(args) -> None:
    p = _pattern(args)
    _need_two(p)
    lam, _ = _intensity(args, p)
    bw = _bandwidths(args, p)
    fit = fit_local(p, lam, _spec(args, p), bw, n_jobs=args.threads)
    io.write_json(_out(args, "fit_global.json"), fit.global_fit.to_dict())
    io.write_local_fit(_out(args, "fit_local.csv"), p, fit)
    summary = fit.summary()
    cols = ("min", "q1", "median", "mean", "q3", "max")
    io.write_csv(_out(args, "fit_local_summary.csv"), ("parameter", *cols),
                 ((name, *(s[c] for c in cols)) for name, s in summary.items()))
    io.write_json(_out(args, "bandwidths.json"), _bw_dict(bw))
    print(_summary_table(summary))
    n_bad = int(np.sum(~fit.converged))
    if n_bad:
        print(f"warning: {n_bad} local fit(s) did not converge", file=sys.stderr)


def cmd_diagnose(args) -> None:
    p = _pattern(args)
    _need_two(p)
    lam, fn = _intensity(args, p)
    fitted = None
    if args.fit:
        model = io.read_model(args.fit)
        fitted = GlobalFitResult(model, float("nan"), True)
        if args.local_params:
            local_p, fitted = io.read_local_fit(args.local_params, p.window, fitted)
            if not np.array_equal(local_p.points, p.points):
                raise ValueError("local parameters were fitted to a different pattern")
    elif args.local_params:
        raise ValueError("--local-params needs the matching --fit global JSON")
    sim_grid = SpaceTimeGrid(p.window, *args.grid) if args.grid else None
    res = run_mc_test(p, fn, fitted, Q=args.q, grid=_lag_grid(args, p), seed=args.seed, sim_grid=sim_grid,
                      n_jobs=args.threads)
    io.write_json(_out(args, args.out), res.to_dict())
    io.write_envelopes(_out(args, args.envelopes), res)
    print(f"T*={res.T_star:.6g} p={res.p_value:.6g} (Q={res.Q}, excluded cells {res.cells_excluded})")


def cmd_replicate(args) -> None:
    sc = get_scenario(args.scenario)
    row = replicate_scenario(sc, args.replicates, args.seed, n_jobs=args.threads, n_expected=args.n_expected)
    io.write_json(_out(args, f"replicate_{sc.id}.json"), row)
    io.write_csv(_out(args, f"replicate_{sc.id}.csv"), table_header(sc.names), [table_row(row)])
    for name in sc.names:
        s = row[name]
        print(f"{name:>7}: q1={s['q1']:.4g} median={s['median']:.4g} mean={s['mean']:.4g} "
              f"(mse {s['mse']:.4g}) q3={s['q3']:.4g}  truth={row['true'][name]:.4g}")


COMMANDS = {
    "simulate": cmd_simulate,
    "stats": cmd_stats,
    "fit-intensity": cmd_fit_intensity,
    "fit-global": cmd_fit_global,
    "fit-local": cmd_fit_local,
    "diagnose": cmd_diagnose,
    "replicate": cmd_replicate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except (ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.threads < 1:
            raise ValueError("--threads must be at least 1")
        COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
