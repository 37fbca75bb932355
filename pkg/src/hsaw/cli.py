"""Command-line front end.

Every command writes a CSV with a fixed header and, when ``--out`` is given,
a JSON sidecar ``<out>.json`` holding the resolved configuration, library
version, seed and wall time.  Settings come from defaults, then an optional
``key=value`` config file, then command-line flags (highest precedence).

Exit status: 0 on success, 2 on invalid configuration, 3 on numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, free, laplace, mc, rg
from .errors import HsawError

HEADERS = {
    "greens": ["L", "beta_re", "beta_im", "N", "g0_re", "g0_im", "g0_alt_re", "g0_alt_im"],
    "kernel": ["L", "T", "N", "lambda", "p0", "p_lambda_re", "p_lambda_im",
               "p_lambda_leading_re", "p_lambda_leading_im"],
    "flow": ["step", "beta_re", "beta_im", "lambda_re", "lambda_im",
             "dbeta_re", "dbeta_im", "dlambda_re", "dlambda_im"],
    "critical": ["L", "lambda_re", "lambda_im", "beta_c_re", "beta_c_im", "bracket_width", "K"],
    "invert": ["L", "T", "N", "value", "error", "p0_exact", "rel_diff"],
    "endtoend": ["T", "alpha", "lambda", "ell", "t_eff", "e2e_theory", "e2e_contour",
                 "e2e_mc", "e2e_mc_stderr"],
    "mc": ["quantity", "T", "lambda", "alpha", "N", "n_paths", "seed", "estimate", "std_error", "ess"],
    "validate": ["check", "passed", "value", "tolerance"],
}

DEFAULTS = {
    "L": 2,
    "lambda": "0.02",
    "T": "4,16,64",
    "N": "0,1,2,3",
    "beta": "0.5",
    "alpha": 1.0,
    "seed": 12345,
    "n_paths": 100_000,
    "max_steps": rg.MAX_STEPS,
    "region": "domain",
    "hold_steps": 60,
    "c_bracket": 5.0,
    "threads": 1,
    "out": None,
}


class ConfigError(ValueError):
    pass


def _floats(text):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"not a list of numbers: {text!r}") from exc
    if not vals:
        raise ConfigError("empty list")
    return vals


def _complexes(text):
    try:
        return [complex(v.strip().replace(" ", "")) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"not a list of complex numbers: {text!r}") from exc


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) or v < 0 for v in vals):
        raise ConfigError(f"expected nonnegative integers: {text!r}")
    return [int(v) for v in vals]


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # every default is None so that file values can sit between defaults and flags
    common.add_argument("--L", type=int, default=None, help="scale factor (integer >= 2)")
    common.add_argument("--config", default=None, help="key=value configuration file")
    common.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    common.add_argument("--threads", type=int, default=None, help="worker cap for Monte Carlo")

    p = argparse.ArgumentParser(prog="hsaw", description="Hierarchical self-repelling walk experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("greens", parents=[common], help="free Green's function on a (beta, N) grid")
    s.add_argument("--beta", default=None, help="comma-separated (complex) beta values")
    s.add_argument("--N", default=None, help="comma-separated levels")

    s = sub.add_parser("kernel", parents=[common], help="free and interacting kernels")
    s.add_argument("--T", default=None)
    s.add_argument("--N", default=None)
    s.add_argument("--lambda", dest="lambda", default=None)

    s = sub.add_parser("flow", parents=[common], help="coupling recursion from (beta, lambda)")
    s.add_argument("--beta", default=None)
    s.add_argument("--lambda", dest="lambda", default=None)
    s.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    s.add_argument("--region", choices=["domain", "ball"], default=None)

    s = sub.add_parser("critical", parents=[common], help="critical killing rate")
    s.add_argument("--lambda", dest="lambda", default=None)
    s.add_argument("--hold-steps", dest="hold_steps", type=int, default=None)
    s.add_argument("--c-bracket", dest="c_bracket", type=float, default=None,
                   help="initial bracket is [-c|lambda|, c|lambda|]")

    s = sub.add_parser("invert", parents=[common], help="contour inversion of the free Green's function")
    s.add_argument("--T", default=None)
    s.add_argument("--N", default=None)

    s = sub.add_parser("endtoend", parents=[common], help="end-to-end distance three ways")
    s.add_argument("--T", default=None)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--lambda", dest="lambda", default=None)
    s.add_argument("--n-paths", dest="n_paths", type=int, default=None, help="0 skips Monte Carlo")
    s.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("mc", parents=[common], help="Monte Carlo estimates")
    s.add_argument("--T", default=None)
    s.add_argument("--N", default=None)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--lambda", dest="lambda", default=None)
    s.add_argument("--n-paths", dest="n_paths", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)

    sub.add_parser("validate", parents=[common], help="run the built-in invariant checks")
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            cfg.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for k, v in vars(args).items():
        if v is not None and k != "config":
            cfg[k] = v
    try:
        cfg["L"] = int(cfg["L"])
        cfg["threads"] = int(cfg["threads"])
        cfg["seed"] = int(cfg["seed"])
        cfg["n_paths"] = int(cfg["n_paths"])
        cfg["alpha"] = float(cfg["alpha"])
        cfg["max_steps"] = int(cfg["max_steps"])
        cfg["hold_steps"] = int(cfg["hold_steps"])
        cfg["c_bracket"] = float(cfg["c_bracket"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["L"] < 2:
        raise ConfigError("L must be >= 2")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if cfg["n_paths"] < 0:
        raise ConfigError("n_paths must be >= 0")
    if not 0 < cfg["alpha"] < 2:
        raise ConfigError("alpha must lie in (0, 2)")
    if cfg["max_steps"] < 1 or cfg["hold_steps"] < 1:
        raise ConfigError("step counts must be >= 1")
    if not cfg["c_bracket"] > 0:
        raise ConfigError("c_bracket must be positive")
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg["region"] not in ("domain", "ball"):
        raise ConfigError("region must be 'domain' or 'ball'")
    return cfg


def _lambdas(cfg, real_only=False):
    dom = rg.DomainSpec()
    vals = _complexes(cfg["lambda"])
    for lam in vals:
        if lam != 0 and not dom.in_lambda(lam):
            raise ConfigError(f"lambda={lam} outside |lambda| < {dom.delta}, |arg| < {dom.b_lambda:.4f}")
        if real_only and (lam.imag != 0 or lam.real < 0):
            raise ConfigError("this command needs real lambda >= 0")
    return vals


def _positive(vals, name):
    if any(not v > 0 for v in vals):
        raise ConfigError(f"{name} values must be positive")
    return vals


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, complex):
        return repr(v)
    return str(v)


def _lam_str(lam):
    return _fmt(lam.real) if lam.imag == 0 else _fmt(lam)


def cmd_greens(cfg, meta):
    betas = _complexes(cfg["beta"])
    for beta in betas:
        for N in _ints(cfg["N"]):
            b = beta.real if beta.imag == 0 else beta
            g = complex(free.green0(b, N, cfg["L"]))
            ga = complex(free.green0_alt(b, N, cfg["L"]))
            yield [cfg["L"], beta.real, beta.imag, N, g.real, g.imag, ga.real, ga.imag]


def cmd_kernel(cfg, meta):
    L = cfg["L"]
    meta["scale_index"] = "p_lambda_leading uses ell(1/T), the k_{1/T} choice"
    for lam in _lambdas(cfg):
        for T in _positive(_floats(cfg["T"]), "T"):
            for N in _ints(cfg["N"]):
                pl = complex(laplace.p_lambda(T, N, lam, L))
                lead = complex(laplace.p_lambda_leading(T, N, lam, L))
                yield [L, T, N, _lam_str(lam), free.p0(T, N, L), pl.real, pl.imag, lead.real, lead.imag]


def cmd_flow(cfg, meta):
    beta = _complexes(cfg["beta"])[0]
    lam = _complexes(cfg["lambda"])[0]
    rep = rg.flow(beta, lam, rg.DomainSpec(), cfg["max_steps"], cfg["L"], cfg["region"])
    meta["exit_step"] = rep.exit_step
    for s in rep.states:
        b, la, db, dl = (complex(v) for v in (s.beta, s.lam, s.dbeta, s.dlam))
        yield [s.step, b.real, b.imag, la.real, la.imag, db.real, db.imag, dl.real, dl.imag]


def cmd_critical(cfg, meta):
    for lam in _lambdas(cfg):
        cd = rg.critical_beta(lam, L=cfg["L"], hold_steps=cfg["hold_steps"], c_bracket=cfg["c_bracket"])
        yield [cfg["L"], lam.real, lam.imag, cd.beta_c.real, cd.beta_c.imag, cd.bracket_width, cd.steps_held]


def cmd_invert(cfg, meta):
    L = cfg["L"]
    for T in _positive(_floats(cfg["T"]), "T"):
        for N in _ints(cfg["N"]):
            v, e = laplace.invert(lambda b: free.green0(b, N, L), T)
            exact = free.p0(T, N, L)
            yield [L, T, N, v.real, e, exact, abs(v.real - exact) / exact]


def cmd_endtoend(cfg, meta):
    L, alpha = cfg["L"], cfg["alpha"]
    n_paths = cfg["n_paths"]
    meta["scale_index"] = "ell and t_eff use ell(1/T), the k_{1/T} choice"
    for lam in _lambdas(cfg, real_only=n_paths > 0):
        for T in _positive(_floats(cfg["T"]), "T"):
            q = laplace.InteractingKernelQuery(T, 0, lam, L)
            lq = q.ell_quarter
            theory = laplace.endtoend_theory(T, alpha, lam, L)
            contour = laplace.endtoend_interacting(T, alpha, lam, L)
            mc_est = mc_err = None
            if n_paths > 0:
                r = mc.weighted_endtoend(mc.McConfig(T, lam.real, n_paths, cfg["seed"], L, alpha,
                                                     threads=cfg["threads"]))
                mc_est, mc_err = float(r.estimate), float(r.std_error)
            yield [T, alpha, _lam_str(lam), (lq**4).real, (T * lq).real, theory, contour, mc_est, mc_err]


def cmd_mc(cfg, meta):
    L, alpha = cfg["L"], cfg["alpha"]
    if cfg["n_paths"] < 1:
        raise ConfigError("n_paths must be >= 1 for mc")
    for lam in _lambdas(cfg, real_only=True):
        for T in _positive(_floats(cfg["T"]), "T"):
            c = mc.McConfig(T, lam.real, cfg["n_paths"], cfg["seed"], L, alpha, threads=cfg["threads"])
            r = mc.weighted_endtoend(c)
            yield ["endtoend", T, lam.real, alpha, None, c.n_paths, c.seed, float(r.estimate),
                   float(r.std_error), r.ess]
            for N in _ints(cfg["N"]):
                k = mc.weighted_kernel(c, N)
                yield ["kernel", T, lam.real, alpha, N, c.n_paths, c.seed, float(k.estimate),
                       float(k.std_error), None]


def validation_checks(L=2):
    """Fast invariant checks as ``(name, value, tolerance, passed)`` rows."""
    rows = []

    def add(name, value, tolerance):
        rows.append((name, value, tolerance, bool(value <= tolerance)))

    add("green0_origin", abs(free.green0(0.0, 0, L) - (1 - L**-4) / (1 - L**-2)), 1e-10)
    add("green0_levels", max(abs(free.green0(0.0, N, L) - float(L) ** (-2 * N)) for N in range(1, 6)), 1e-10)
    betas = [0.5, 2.0, 1e-3, 0.3 + 0.4j, -0.2 + 1j, 10.0]
    add("green0_alt", max(abs(free.green0(b, N, L) / free.green0_alt(b, N, L) - 1)
                          for b in betas for N in range(6)), 1e-10)
    add("kernel_mass", max(abs(free.p0(T, 0, L) + sum(
        (L**4 - 1) * L ** (4 * (N - 1)) * free.p0(T, N, L) for N in range(1, 60)) - 1)
        for T in (0.25, 1, 4, 16)), 1e-8)
    add("round_trip", max(abs(laplace.invert(lambda b: free.green0(b, N, L), T)[0].real / free.p0(T, N, L) - 1)
                          for T in (1, 16) for N in (0, 2)), 1e-8)
    add("jump_constant", abs(free.derive_jump_constant(L) - free.jump_constant_exact(L)), 1e-6)
    add("log_periodic", abs(free.F_alpha(L**2 * 1.3, 1.0, L) - free.F_alpha(1.3, 1.0, L)), 1e-10)
    cd = rg.critical_beta(0.02, L=L)
    add("critical_sign", cd.beta_c.real, 0.0)
    add("critical_vs_sweep", abs(cd.beta_c - rg.critical_beta_sweep(0.02, L)), 1e-12)
    h = 1e-7
    f0, f1 = rg.flow(0.01 - h, 0.02, max_steps=10, L=L), rg.flow(0.01 + h, 0.02, max_steps=10, L=L)
    fd = (f1.beta[-1] - f0.beta[-1]) / (2 * h)
    add("dbeta_fd", abs(rg.flow(0.01, 0.02, max_steps=10, L=L).dbeta[-1] / fd - 1), 1e-6)
    add("free_ell", abs(rg.ell(0.01, 0.0, L) - 1), 1e-14)
    return rows


def cmd_validate(cfg, meta):
    rows = validation_checks(cfg["L"])
    passed = sum(r[3] for r in rows)
    meta["passed"], meta["failed"] = passed, len(rows) - passed
    print(f"validate: {passed} passed, {len(rows) - passed} failed", file=sys.stderr)
    for name, value, tol, ok in rows:
        yield [name, ok, float(np.real(value)), tol]


COMMANDS = {
    "greens": cmd_greens, "kernel": cmd_kernel, "flow": cmd_flow, "critical": cmd_critical,
    "invert": cmd_invert, "endtoend": cmd_endtoend, "mc": cmd_mc, "validate": cmd_validate,
}


def run(cfg: dict) -> int:
    """Execute a resolved configuration; returns the exit status."""
    command = cfg["command"]
    meta = {}
    t0 = time.perf_counter()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADERS[command])
    for row in COMMANDS[command](cfg, meta):
        w.writerow([_fmt(v) for v in row])
    wall = time.perf_counter() - t0
    if cfg["out"]:
        out = Path(cfg["out"])
        out.write_text(buf.getvalue())
        sidecar = {"command": command, "config": {k: v for k, v in cfg.items()},
                   "version": __version__, "seed": cfg["seed"], "wall_time_s": wall, **meta}
        Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2, default=str) + "\n")
    else:
        sys.stdout.write(buf.getvalue())
    if command == "validate" and meta["failed"]:
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return run(cfg)
    except ConfigError as exc:
        print(f"hsaw: configuration error: {exc}", file=sys.stderr)
        return 2
    except (HsawError, ArithmeticError) as exc:
        print(f"hsaw: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"hsaw: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
