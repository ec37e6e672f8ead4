"""Command-line front end.

Subcommands: ``run``, ``averaged``, ``validate``, ``tune`` and ``esdemo``.
Use ``@demo`` as the config path for the bundled second-order example.

Exit codes
----------
0  success
1  design validation failed
2  config / argument parse error
3  simulation diverged
4  file I/O error
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .averaging import MAP_CATALOG, BasicESConfig
from .config import ConfigError, design_to_mapping, dump_config, load_config, load_tune_request
from .controller import error_dynamics_matrices
from .design import InfeasibleDesignError, tune_gains, validate_design
from .lti import LyapunovError, solve_lyapunov
from .sim import (
    DesignValidationError,
    DivergenceError,
    SimConfigError,
    lyapunov_monitor,
    run_averaged,
    run_basic_es,
    run_closed_loop,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARSE = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

log = logging.getLogger("esmrac")

ESDEMO_PARAMS = ("a", "omega", "k", "theta0", "horizon")


class UsageError(ValueError):
    pass


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to its documented exit code."""
    if isinstance(exc, DesignValidationError | InfeasibleDesignError):
        return EXIT_VALIDATION
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ConfigError | SimConfigError | UsageError | ValueError):
        return EXIT_PARSE
    raise exc


def _default_out(cfg, fallback: str) -> str:
    return cfg.output if cfg.output else fallback


def _cmd_simulate(opts, overrides, out) -> int:
    cfg = load_config(opts.config, overrides)
    cfg.require("plant", "ref", "design", "sim")
    kwargs = dict(r=cfg.reference, y0=cfg.y0, ym0=cfg.ym0)
    if opts.command == "run":
        traj = run_closed_loop(cfg.plant, cfg.ref, cfg.design, cfg.sim, **kwargs)
    else:
        traj = run_averaged(cfg.plant, cfg.ref, cfg.design, cfg.sim, **kwargs)
        A, _ = error_dynamics_matrices(cfg.design)
        P = solve_lyapunov(A, cfg.design.Q)
        traj = traj.with_lyapunov(lyapunov_monitor(traj, P, cfg.design.gamma))
    path = out or _default_out(cfg, f"{opts.command}.csv")
    traj.to_csv(path)
    e_end = float(abs(traj.x[-1, 0]))
    print(f"{opts.command}: {len(traj)} samples to {path}; |e(T)| = {e_end:.3e}; a_hat(T) = {np.round(traj.a_hat[-1], 6).tolist()}")
    return EXIT_OK


def _cmd_validate(opts, overrides, out) -> int:
    cfg = load_config(opts.config, overrides)
    cfg.require("design")
    cert = validate_design(cfg.design)
    if opts.format == "json":
        text = json.dumps(cert.as_dict(), indent=2, default=str)
    elif opts.format == "kv":
        text = "\n".join(f"{k}={json.dumps(v, default=str)}" for k, v in cert.as_dict().items())
    else:
        text = cert.report()
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if cert.ok else EXIT_VALIDATION


def _cmd_tune(opts, overrides, out) -> int:
    data, request = load_tune_request(opts.config, overrides)
    design = tune_gains(**request)
    data["controller"] = design_to_mapping(design)
    sim = data.setdefault("sim", {}) or {}
    data["sim"] = sim
    sim.setdefault("h", "auto")
    path = out or f"{Path(str(opts.config).lstrip('@')).stem}_tuned.yaml"
    dump_config(data, path)
    cert = validate_design(design)
    print(f"tune: wrote {path}; kappa = {cert.kappa:.12g}; g = {design.g.tolist()}")
    return EXIT_OK if cert.ok else EXIT_VALIDATION


def _cmd_esdemo(opts, overrides, out) -> int:
    params = {k: getattr(opts, k) for k in ESDEMO_PARAMS}
    for item in overrides:
        key, _, value = item.partition("=")
        if key not in params:
            raise UsageError(f"esdemo override must be one of {', '.join(ESDEMO_PARAMS)}, got {key!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise UsageError(f"{key}: expected a number, got {value!r}") from None
    if opts.map not in MAP_CATALOG:
        raise UsageError(f"unknown map {opts.map!r}; choose from {', '.join(MAP_CATALOG)}")
    fmap = MAP_CATALOG[opts.map]
    config = BasicESConfig(fmap, a=params["a"], omega=params["omega"], k=params["k"], theta0=params["theta0"])
    res = run_basic_es(config, t_end=params["horizon"])
    path = out or "esdemo.csv"
    res.to_csv(path, fmap.f_star)
    print(f"esdemo: {res.t.size} samples to {path}; theta_hat(T) = {res.theta_hat[-1]:.6g} (optimum {fmap.theta_star:g})")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_simulate,
    "averaged": _cmd_simulate,
    "validate": _cmd_validate,
    "tune": _cmd_tune,
    "esdemo": _cmd_esdemo,
}


def execute(opts, overrides, out) -> int:
    """Run one command and translate failures into exit codes."""
    try:
        return COMMANDS[opts.command](opts, overrides, out)
    except LyapunovError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    """``param=start:stop:count`` to a parameter name and its values."""
    try:
        key, spec = text.split("=", 1)
        start, stop, count = spec.split(":")
        count = int(count)
        values = np.linspace(float(start), float(stop), count)
    except ValueError:
        raise UsageError(f"sweep must look like param=start:stop:count, got {text!r}") from None
    if count < 1 or not key:
        raise UsageError("sweep needs a parameter name and a positive count")
    return key.strip(), values


def _sweep_path(base: str, i: int) -> str:
    p = Path(base)
    return str(p.with_name(f"{p.stem}_{i}{p.suffix}"))


def run_sweep(opts) -> int:
    key, values = parse_sweep(opts.sweep)
    if opts.command == "esdemo":
        base = opts.out or "esdemo.csv"
    elif opts.command in ("run", "averaged"):
        base = opts.out or f"{opts.command}.csv"
    else:
        raise UsageError("--sweep applies to run, averaged and esdemo")
    jobs = [(opts, list(opts.override) + [f"{key}={float(v)!r}"], _sweep_path(base, i)) for i, v in enumerate(values)]
    workers = min(len(jobs), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(execute, *zip(*jobs)))
    for (_, ovr, path), code in zip(jobs, codes):
        print(f"sweep {ovr[-1]} -> {path}: exit {code}")
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (CSV, report or tuned config)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value; dotted path or unique key (repeatable)")
    common.add_argument("--sweep", metavar="PARAM=START:STOP:COUNT", help="fan out runs over a parameter")
    common.add_argument("--seed", type=int, default=None, help="reserved; the dynamics are deterministic")

    parser = argparse.ArgumentParser(prog="esmrac", description="ES-MRAC simulation and design tools")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "simulate the full closed loop"), ("averaged", "simulate the averaged system")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("config", help="config file, or @demo")
    p = sub.add_parser("validate", parents=[common], help="check design conditions")
    p.add_argument("config")
    p.add_argument("--format", choices=("text", "kv", "json"), default="text")
    p = sub.add_parser("tune", parents=[common], help="complete a partial config with tuned gains")
    p.add_argument("config")
    p = sub.add_parser("esdemo", parents=[common], help="basic extremum seeking on a static map")
    p.add_argument("--map", default="quadratic", help=f"one of {', '.join(MAP_CATALOG)}")
    p.add_argument("--a", type=float, default=0.1, help="dither amplitude")
    p.add_argument("--omega", type=float, default=50.0, help="dither frequency")
    p.add_argument("--k", type=float, default=5.0, help="integrator gain")
    p.add_argument("--theta0", type=float, default=1.0, help="initial estimate")
    p.add_argument("--horizon", type=float, default=20.0, help="simulated time")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    opts = build_parser().parse_args(argv)
    if opts.sweep:
        try:
            return run_sweep(opts)
        except UsageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARSE
    return execute(opts, opts.override, opts.out)


if __name__ == "__main__":
    sys.exit(main())
