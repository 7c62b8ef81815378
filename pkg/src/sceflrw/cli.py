"""Command-line front end.

Configuration files are flat ``key = value`` text with dotted sections,
``#`` comments and blank lines allowed::

    init.a0 = 1
    params.m = 1
    solver.tol = 1e-10

Exit codes: 0 on success, 1 on configuration errors, 2 on solver failures.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import parallel
from .errors import ConfigError, SolverError

# key -> (type, default); a default of ``...`` marks a required key
SCHEMA = {
    "init.tau0": (float, 0.0),
    "init.a0": (float, ...),
    "init.a0p": (float, ...),
    "init.a0pp": (float, ...),
    "init.a0ppp": (float, ...),
    "params.m": (float, ...),
    "params.xi": (float, ...),
    "params.Lambda": (float, 0.0),
    "params.G": (float, 1.0),
    "params.lambda_scale": (float, 1.0),
    "params.alpha1": (float, 0.0),
    "params.alpha2": (float, 0.0),
    "params.beta1": (float, 0.0),
    "params.beta2": (float, 0.0),
    "params.beta3": (float, 0.0),
    "params.betaT1": (float, 0.0),
    "params.betaT2": (float, 0.0),
    "params.betaT34": (float, 0.0),
    "state.family": (str, "adiabatic"),
    "state.s": (int, 1),
    "state.phi_table": (str, None),
    "state.E_table": (str, None),
    "state.tune": (bool, True),
    "state.bump.C": (float, None),
    "state.bump.p1": (float, None),
    "state.bump.p2": (float, None),
    "grid.tau1": (float, ...),
    "grid.n": (int, 257),
    "grid.k_min_factor": (float, 1e-3),
    "grid.k_max": (float, 1000.0),
    "grid.k_nodes": (int, 128),
    "solver.delta": (float, None),
    "solver.tol": (float, 1e-10),
    "solver.max_iter": (int, 200),
    "solver.shrink_factor": (float, 0.5),
    "solver.inverse": (str, "discrete"),
    "solver.kernel_tol": (float, 1e-10),
    "output.dir": (str, "out"),
    "output.emit_components": (bool, True),
    "kernel.cache_dir": (str, None),
}

FAMILIES = ("adiabatic", "vacuum", "tabulated")


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config_text(text, base_dir="."):
    """Parse and validate config text into a dict keyed like :data:`SCHEMA`."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    cfg = {}
    for key, (typ, default) in SCHEMA.items():
        if key not in raw:
            if default is ...:
                raise ConfigError(f"missing required key {key!r}")
            cfg[key] = default
            continue
        try:
            cfg[key] = _parse_bool(raw[key]) if typ is bool else typ(raw[key])
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if cfg["state.family"] not in FAMILIES:
        raise ConfigError(f"state.family must be one of {FAMILIES}")
    if cfg["state.s"] not in (-1, 1):
        raise ConfigError("state.s must be +1 or -1")
    if cfg["solver.inverse"] not in ("discrete", "kernel"):
        raise ConfigError("solver.inverse must be 'discrete' or 'kernel'")
    bump = [cfg[f"state.bump.{x}"] for x in ("C", "p1", "p2")]
    if any(b is not None for b in bump) and not all(b is not None for b in bump):
        raise ConfigError("state.bump needs C, p1 and p2 together")
    if bump[1] is not None and not (0 < bump[1] < bump[2]):
        raise ConfigError("state.bump needs 0 < p1 < p2")
    if cfg["grid.n"] < 33:
        raise ConfigError("grid.n must be at least 33")
    if not cfg["grid.tau1"] > cfg["init.tau0"]:
        raise ConfigError("grid.tau1 must exceed init.tau0")
    if not 0 < cfg["solver.shrink_factor"] < 1:
        raise ConfigError("solver.shrink_factor must lie in (0, 1)")
    for key in ("state.phi_table", "state.E_table", "output.dir", "kernel.cache_dir"):
        if cfg[key] is not None and not os.path.isabs(cfg[key]):
            cfg[key] = os.path.join(base_dir, cfg[key])
    if cfg["state.family"] == "tabulated":
        for key in ("state.phi_table", "state.E_table"):
            if cfg[key] is None:
                raise ConfigError(f"tabulated state needs {key}")
            if not os.path.isfile(cfg[key]):
                raise ConfigError(f"{key}: no such file {cfg[key]}")
    return cfg


def load_config(path):
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    # relative paths resolve against the working directory, like the config path itself
    return parse_config_text(text, base_dir=".")


# ---------------------------------------------------------------------------
# building objects from a config


@dataclass
class Setup:
    cfg: dict
    params: object
    init: object
    spec: object
    notes: list = field(default_factory=list)


def build_setup(cfg):
    from .geometry import Params, derive_initial_conditions
    from .modes import Bump, adiabatic_state, load_table, tabulated_state, vacuum_like_state

    params = Params(**{k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("params.")})
    init = derive_initial_conditions(*(cfg[f"init.{x}"] for x in ("tau0", "a0", "a0p", "a0pp", "a0ppp")),
                                     params)
    family = cfg["state.family"]
    if family == "adiabatic":
        spec = adiabatic_state(init, params)
    elif family == "vacuum":
        spec = vacuum_like_state(init.w0sq, cfg["state.s"])
    else:
        kP, vP = load_table(cfg["state.phi_table"])
        kE, vE = load_table(cfg["state.E_table"])
        spec = tabulated_state(kP, vP, kE, vE, cfg["state.s"])
    if cfg["state.bump.C"] is not None:
        spec = spec.with_bump(Bump(cfg["state.bump.C"], cfg["state.bump.p1"], cfg["state.bump.p2"]))
    return Setup(cfg, params, init, spec)


def _fmt(x):
    return f"{x:.14e}"


def _write_csv(path, header, columns):
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _check_line(name, ok, detail=""):
    return f"check.{name} = {'pass' if ok else 'fail'}" + (f"  # {detail}" if detail else "")


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(config_path):
    from .quantumstate import check_regularity, constraint_residual, tune_state_to_constraint
    from .semiclassical import SolverContext, fixed_point_solve, residual_trace_equation

    t0 = time.perf_counter()
    cfg = load_config(config_path)
    setup = build_setup(cfg)
    init, params, spec = setup.init, setup.params, setup.spec
    lines = [f"config = {config_path}"]
    lines += [f"config.{k} = {v}" for k, v in sorted(cfg.items())]
    reg = check_regularity(spec, init, params)
    lines += reg.lines()
    if cfg["state.tune"] and cfg["state.bump.C"] is None:
        spec, trep = tune_state_to_constraint(spec, init, params, return_report=True)
        lines += [f"tuning.C = {trep.C:.15e}", f"tuning.p1 = {trep.p1:.15e}",
                  f"tuning.p2 = {trep.p2:.15e}", f"tuning.rho_untuned = {trep.rho_untuned:.15e}",
                  f"tuning.rho_tuned = {trep.rho_tuned:.15e}", f"tuning.target = {trep.target:.15e}",
                  f"tuning.relative_residual = {trep.residual:.6e}"]
        if spec.bump is not None:
            lines += [f"regularity.tuned.{s}" for s in
                      (ln.split(".", 1)[1] for ln in check_regularity(spec, init, params).lines())]
    ctx = SolverContext.build(
        init, params, spec, cfg["grid.tau1"], cfg["grid.n"], cfg["grid.k_min_factor"],
        cfg["grid.k_max"], cfg["grid.k_nodes"], cfg["solver.delta"], cfg["solver.inverse"],
        cfg["solver.kernel_tol"], cfg["kernel.cache_dir"], None)
    ev, rep = fixed_point_solve(ctx, tol=cfg["solver.tol"], max_iter=cfg["solver.max_iter"],
                                shrink_factor=cfg["solver.shrink_factor"])
    traj, b = ev.traj, ev.bundle
    res_trace, res_state = residual_trace_equation(traj, b, ev.aux, params, ev.qc.T_Vp)
    lines += rep.lines()
    # invariant checks
    tol_res = 10 * cfg["solver.tol"] * rep.residual_scale
    wr = float(np.max(np.abs(b.phi2 * traj.a**2 - b.a2phi2)))
    lines += [
        _check_line("Qc_initial_zero", b.Q_c[0] == 0.0 and b.Q_c_d[0] == 0.0),
        _check_line("map_initial_value", ev.Xp_out[0] == init.X0p),
        _check_line("V_initial_zero", traj.V[0] == 0.0),
        _check_line("bracket_initial_zero", ev.bracket[0] == 0.0,
                    f"removed offset {ev.bracket_offset:.3e}"),
        _check_line("trace_residual", rep.residual_trace <= tol_res,
                    f"{rep.residual_trace:.3e} vs {tol_res:.3e}"),
        _check_line("state_residual_initial_zero", abs(res_state[0]) <= 1e-14 * max(1, abs(b.phi2[0])),
                    f"{res_state[0]:.3e}"),
        _check_line("constraint", rep.constraint_residual <= 1e-8, f"{rep.constraint_residual:.3e}"),
        _check_line("phi2_roundtrip", wr <= 8 * np.finfo(float).eps * np.max(np.abs(b.a2phi2)),
                    f"{wr:.3e}"),
        _check_line("contraction", len(rep.ratios) == 0 or max(rep.ratios[-5:]) < 1,
                    f"last ratios {' '.join(f'{q:.3f}' for q in rep.ratios[-5:])}"),
    ]
    k_err = (ev.qc.remainder.tail + ev.qc.remainder.quad_error
             + ev.qs.integral.tail + ev.qs.integral.quad_error) / traj.a**2
    lines += [f"grid.phi2_k_error_estimate_end = {k_err[-1]:.6e}",
              f"grid.phi2_k_error_estimate_max = {np.max(k_err):.6e}",
              f"grid.time_step = {traj.grid.h:.15e}",
              f"grid.k_nodes_used = {ctx.kgrid.size}",
              f"timing.total_s = {time.perf_counter() - t0:.3f}"]
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    _write_csv(os.path.join(out, "trajectory.csv"),
               ["tau", "a", "ap", "H", "R", "X", "Xp", "phi2", "residual_trace", "residual_state"],
               [traj.grid.tau, traj.a, traj.ap, traj.H, traj.R, traj.X, traj.Xp, b.phi2,
                res_trace, res_state])
    if cfg["output.emit_components"]:
        _write_csv(os.path.join(out, "components.csv"),
                   ["tau", "Q_s", "Q_c", "Q_0", "Q_s_d", "Q_c_d", "Q_0_d", "Q_f", "Q_f_d", "F",
                    "phi2_k_error"],
                   [traj.grid.tau, b.Q_s, b.Q_c, b.Q_0, b.Q_s_d, b.Q_c_d, b.Q_0_d, b.Q_f, b.Q_f_d,
                    ev.aux.F, k_err])
    # timing lines differ between runs; everything else is reproducible
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"converged on [{init.tau0}, {rep.tau1}] in {rep.iterations} iterations; "
          f"output in {out}")
    return 0


def cmd_validate_state(config_path):
    from .quantumstate import check_regularity, tune_state_to_constraint

    cfg = load_config(config_path)
    setup = build_setup(cfg)
    init, params, spec = setup.init, setup.params, setup.spec
    spec.excess(np.geomspace(1e-3 * init.w0, 1e4 * init.w0, 512))
    reg = check_regularity(spec, init, params)
    print("\n".join(reg.lines()))
    if not reg.passed:
        print("state is not sufficiently regular", file=sys.stderr)
        return 2
    tuned, trep = tune_state_to_constraint(spec, init, params, return_report=True)
    print(f"tuning.C = {trep.C:.15e}")
    print(f"tuning.p1 = {trep.p1:.15e}")
    print(f"tuning.p2 = {trep.p2:.15e}")
    print(f"tuning.relative_residual = {trep.residual:.6e}")
    if tuned.bump is not None:
        reg2 = check_regularity(tuned, init, params)
        print("\n".join("tuned." + ln for ln in reg2.lines()))
        if not reg2.passed:
            return 2
    return 0


def cmd_kernel_table(r, n, tol, out):
    from .logkernel import build_kernel_table, cache_path, laplace_target, laplace_transform_K

    path = cache_path(out, r, n, tol)
    hit = os.path.exists(path)
    os.makedirs(out, exist_ok=True)
    table = build_kernel_table(r, n, tol, cache_dir=out)
    print(f"cache = {'hit' if hit else 'miss'} {path}")
    print(f"C_inf({r:g}) = {table.C_inf:.15e}")
    for s in (2.0, np.e, 10.0):
        val = laplace_transform_K(s, tol=tol)
        tgt = laplace_target(s)
        print(f"laplace.s={s:.6f} value = {val:.15e} target = {tgt:.15e} "
              f"relative_residual = {abs(val - tgt) / abs(tgt):.3e}")
    return 0


def cmd_demo_unbounded(eps_list):
    from .logkernel import EIGHT_PI2, unboundedness_demo

    sups = []
    for eps in eps_list:
        sup = unboundedness_demo(eps)
        sups.append(sup)
        print(f"eps = {eps:.1e}  sup|T[f_eps]| = {sup:.10e}")
    slope = np.polyfit(np.log(1.0 / np.asarray(eps_list)), sups, 1)[0]
    print(f"fitted slope = {slope:.10e}  (times 8 pi^2: {slope * EIGHT_PI2:.6f})")
    return 0


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="sceflrw", description=__doc__.split("\n")[0])
    p.add_argument("--threads", type=int, default=None,
                   help="cap on worker threads (default: SCE_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="solve the semiclassical equations for a config")
    r.add_argument("config")
    v = sub.add_parser("validate-state", help="check regularity and constraint reachability")
    v.add_argument("config")
    k = sub.add_parser("kernel-table", help="precompute or load the inverse-kernel table")
    k.add_argument("--r", type=float, default=1.0)
    k.add_argument("--n", type=int, default=257)
    k.add_argument("--tol", type=float, default=1e-10)
    k.add_argument("--out", default="kernel_cache")
    d = sub.add_parser("demo-unbounded", help="show the growth of the log-kernel operator")
    d.add_argument("--eps", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return 1
        parallel.set_default_threads(args.threads)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "validate-state":
            return cmd_validate_state(args.config)
        if args.command == "kernel-table":
            if args.n < 2 or not args.r > 0 or not args.tol > 0:
                raise ConfigError("kernel-table needs r > 0, n >= 2, tol > 0")
            return cmd_kernel_table(args.r, args.n, args.tol, args.out)
        return cmd_demo_unbounded(args.eps)
    except ConfigError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    finally:
        parallel.set_default_threads(None)


if __name__ == "__main__":
    sys.exit(main())
