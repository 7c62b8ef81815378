"""Traced semiclassical equation: auxiliary field, contraction map and Picard loop.

The unknown is ``X' = (a''/a)'`` on ``[tau0, tau1]``.  One application of
the map rebuilds the geometry from ``X'``, recomputes every expectation
value, solves for the auxiliary field ``F`` and inverts the log-kernel
operator to obtain the next ``X'``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FrequencyNotPositive,
    IntervalUnderflow,
    MaxIterExceeded,
    OutOfBall,
    ScaleFactorVanishes,
)
from .expectation import ExpectationBundle, QcResult, assemble, q_0_pair, q_c_pair
from .geometry import (
    InitialData,
    Params,
    TimeGrid,
    Trajectory,
    build_trajectory,
    solve_linear_second_order,
)
from .kgrid import KGrid, make_kgrid
from .logkernel import KernelTable, build_kernel_table, t_apply, t_inverse_apply, t_inverse_discrete
from .modes import StateSpec, solve_modes
from .quantumstate import BogoliubovPair, QsResult, constraint_residual, q_s_pair


@dataclass(frozen=True)
class CouplingConstants:
    c_xi: float
    M_c: float

    @classmethod
    def from_params(cls, params: Params):
        d = 3.0 * (1.0 / 6.0 - params.xi)
        return cls(params.beta3 / d, -params.m**2 / d)


def source_S(traj: Trajectory, params: Params):
    """Right-hand side of the auxiliary-field equation (curvature up to ``a''``)."""
    cc = CouplingConstants.from_params(params)
    m2 = params.m**2
    R = traj.R
    G = params.G
    val = (params.beta1 * m2 * m2 - params.Lambda / (2 * np.pi * G) + R / (8 * np.pi * G)
           + params.beta2 * m2 * R + params.beta3 * cc.M_c * R
           + params.six_xi_minus_one**2 * R * R / (1152 * np.pi**2)
           + traj.riem_minus_ricci / (2880 * np.pi**2))
    return val / (3.0 * (params.xi - 1.0 / 6.0))


@dataclass
class AuxField:
    F: np.ndarray
    Fp: np.ndarray
    aF: np.ndarray  # a F
    aFp: np.ndarray  # (a F)'
    d_a2F: np.ndarray  # (a^2 F)'


def initial_field_data(bundle: ExpectationBundle, traj: Trajectory, init: InitialData,
                       params: Params):
    """``F(tau0)`` and ``F'(tau0)`` from the state's ``<phi^2>`` and its derivative."""
    cc = CouplingConstants.from_params(params)
    a0, a0p = init.a0, init.a0p
    phi2_0 = bundle.phi2[0]
    dphi2_0 = (bundle.d_a2phi2[0] - 2 * a0 * a0p * phi2_0) / a0**2
    F0 = phi2_0 - cc.c_xi * init.R0
    F0p = dphi2_0 - cc.c_xi * init.R0p
    return F0, F0p


def solve_F(traj: Trajectory, S, F0, F0p, params: Params, check_bounds=True) -> AuxField:
    """Solve ``(aF)'' + (a^2 M_c - X)(aF) = a^3 S`` from ``(F0, F0p)``."""
    cc = CouplingConstants.from_params(params)
    a, ap = traj.a, traj.ap
    W = a * a * cc.M_c - traj.X
    f0 = a[0] * F0
    f0p = ap[0] * F0 + a[0] * F0p
    f, fp = solve_linear_second_order(W, a**3 * S, 0.0, f0, f0p, traj.grid,
                                      check_bounds=check_bounds)
    f, fp = np.real(f), np.real(fp)
    F = f / a
    Fp = (fp - ap * F) / a
    return AuxField(F, Fp, f, fp, ap * f + a * fp)


def residual_trace_equation(traj: Trajectory, bundle: ExpectationBundle, aux: AuxField,
                            params: Params, T_Vp=None):
    """Left minus right side of the differentiated traced equation, and the state residual.

    Returns
    -------
    trace : ndarray
        ``Q_0^d + T[V'] + Q_f^d + Q_s^d - (a^2 c_xi R + a^2 F)'``.
    state : ndarray
        ``<phi^2> - c_xi R - F``.
    """
    cc = CouplingConstants.from_params(params)
    if T_Vp is None:
        T_Vp = t_apply(traj.grid.tau, traj.Vp)
    lhs = bundle.Q_0_d + T_Vp + bundle.Q_f_d + bundle.Q_s_d
    # (a^2 R)' = 6 X'
    rhs = 6 * cc.c_xi * traj.Xp + aux.d_a2F
    state = bundle.phi2 - cc.c_xi * traj.R - aux.F
    return lhs - rhs, state


# ---------------------------------------------------------------------------
# contraction map


@dataclass
class SolverContext:
    init: InitialData
    params: Params
    spec: StateSpec
    grid: TimeGrid
    kgrid: KGrid
    pair: BogoliubovPair
    table: KernelTable | None
    delta: float
    inverse: str = "discrete"
    threads: int | None = None
    check_bounds: bool = True

    @classmethod
    def build(cls, init, params, spec, tau1, n, k_min_factor=1e-3, k_max=1000.0,
              k_nodes=128, delta=None, inverse="discrete", kernel_tol=1e-10,
              cache_dir=None, threads=None, check_bounds=True):
        grid = TimeGrid(init.tau0, tau1, n)
        b = spec.bump
        kg = make_kgrid(init.w0, k_min_factor, k_max, k_nodes,
                        None if b is None else b.p1, None if b is None else b.p2)
        pair = BogoliubovPair.from_state(spec, kg.k, init, params, kg.bump_mask)
        table = None
        if inverse == "kernel":
            table = build_kernel_table(tau1 - init.tau0, n, kernel_tol, cache_dir)
        elif inverse != "discrete":
            raise ValueError(f"unknown inverse {inverse!r}")
        if delta is None:
            delta = max(1.0, abs(init.X0p))
        return cls(init, params, spec, grid, kg, pair, table, float(delta), inverse,
                   threads, check_bounds)

    def with_grid(self, grid):
        return SolverContext(self.init, self.params, self.spec, grid, self.kgrid, self.pair,
                             self.table, self.delta, self.inverse, self.threads,
                             self.check_bounds)

    def invert(self, h):
        if self.inverse == "discrete":
            return t_inverse_discrete(h, self.grid.h)
        return t_inverse_apply(h, self.table, step=self.grid.h)


@dataclass
class Evaluation:
    Xp_in: np.ndarray
    Xp_out: np.ndarray
    traj: Trajectory
    bundle: ExpectationBundle
    qc: QcResult
    qs: QsResult
    aux: AuxField
    bracket: np.ndarray
    bracket_offset: float


def contraction_map(Xp, ctx: SolverContext, check_ball=True) -> Evaluation:
    """One application of the fixed-point map.

    ``C[X'] = X0' - (2 m^2/(6 xi - 1)) (a a' - a0 a0') + T^{-1}[bracket]/(6 xi - 1)``
    with ``bracket = 6 c_xi X' + (a^2 F)' - Q_0^d - Q_f^d - Q_s^d``.

    Raises
    ------
    OutOfBall
        if the input or the output is farther than ``delta`` from ``X0'``.
    FrequencyNotPositive
        if ``w0^2 + V`` is not positive on the grid.
    """
    init, params, grid = ctx.init, ctx.params, ctx.grid
    Xp = np.asarray(Xp, dtype=float)
    if check_ball and np.max(np.abs(Xp - init.X0p)) > ctx.delta:
        raise OutOfBall("input lies outside the ball")
    traj = build_trajectory(Xp, init, grid, params, check_bounds=ctx.check_bounds)
    wsq = init.w0sq + traj.V
    if not np.all(wsq > 0):
        i = int(np.argmin(wsq))
        raise FrequencyNotPositive(f"w^2 = {wsq[i]:.3e} at tau = {grid.tau[i]:.6e}")
    modes = solve_modes(ctx.kgrid.k, init.w0sq, traj.V, grid, ctx.threads)
    qc = q_c_pair(traj, modes, ctx.kgrid, init.w0)
    qs = q_s_pair(ctx.pair, modes, ctx.kgrid)
    q0 = q_0_pair(traj, init, params)
    bundle = assemble(traj, (qs.Q_s, qs.Q_s_d), qc, q0)
    F0, F0p = initial_field_data(bundle, traj, init, params)
    aux = solve_F(traj, source_S(traj, params), F0, F0p, params, ctx.check_bounds)
    cc = CouplingConstants.from_params(params)
    bracket = 6 * cc.c_xi * Xp + aux.d_a2F - bundle.Q_0_d - bundle.Q_f_d - bundle.Q_s_d
    # vanishes at tau0 analytically; the rounding remainder is removed and reported
    offset = float(bracket[0])
    bracket = bracket - offset
    g = ctx.invert(bracket)
    c = params.six_xi_minus_one
    Xp_out = (init.X0p - (2 * params.m**2 / c) * (traj.a * traj.ap - init.a0 * init.a0p)
              + g / c)
    if check_ball and np.max(np.abs(Xp_out - init.X0p)) > ctx.delta:
        raise OutOfBall("image lies outside the ball")
    return Evaluation(Xp, Xp_out, traj, bundle, qc, qs, aux, bracket, offset)


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    deltas: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    shrink_history: list = field(default_factory=list)
    bracket_offsets: list = field(default_factory=list)
    tau1: float = float("nan")
    n: int = 0
    residual_trace: float = float("nan")
    residual_state: float = float("nan")
    residual_scale: float = float("nan")
    constraint_residual: float = float("nan")
    inverse: str = "discrete"
    elapsed: float = 0.0

    def lines(self):
        out = [f"solver.converged = {self.converged}",
               f"solver.iterations = {self.iterations}",
               f"solver.inverse = {self.inverse}",
               f"solver.tau1 = {self.tau1:.15e}",
               f"solver.n = {self.n}",
               f"solver.shrinks = {len(self.shrink_history)}"]
        for i, (t1, why) in enumerate(self.shrink_history):
            out.append(f"solver.shrink.{i} = tau1 {t1:.15e} after {why}")
        out.append("solver.deltas = " + " ".join(f"{d:.6e}" for d in self.deltas))
        out.append("solver.ratios = " + " ".join(f"{q:.6e}" for q in self.ratios))
        out.append(f"solver.max_bracket_offset = {max(map(abs, self.bracket_offsets), default=0):.6e}")
        out += [f"residual.trace_sup = {self.residual_trace:.6e}",
                f"residual.state_sup = {self.residual_state:.6e}",
                f"residual.scale = {self.residual_scale:.6e}",
                f"constraint.relative_residual = {self.constraint_residual:.6e}",
                f"solver.elapsed_s = {self.elapsed:.3f}"]
        return out


def residual_scale(params: Params, Xp):
    return max(params.m**4, abs(params.Lambda) / params.G,
               float(np.max(np.abs(Xp))) * params.m**2)


def _shrink(ctx: SolverContext, shrink_factor):
    n_new = int((ctx.grid.n - 1) * shrink_factor) + 1
    if n_new - 1 < 32:
        raise IntervalUnderflow(
            f"interval would shrink below 32 steps ({n_new - 1}); no convergence at this resolution")
    return ctx.with_grid(ctx.grid.truncated(n_new))


def fixed_point_solve(ctx: SolverContext, tol=1e-10, max_iter=200, shrink_factor=0.5,
                      start=None, ratio_patience=3):
    """Picard iteration from ``X'_0 = X0'`` (or ``start``) with interval adaptation.

    The interval is shrunk, keeping the step, when an iterate leaves the
    ball (or the region where ``a`` and every mode frequency stay positive)
    or the measured ratio is at least one ``ratio_patience`` times in a row;
    the iteration then restarts.

    Returns
    -------
    Evaluation, SolveReport
        The evaluation at the converged ``X'`` and the iteration record.

    Raises
    ------
    IntervalUnderflow, MaxIterExceeded
    """
    t_start = time.perf_counter()
    rep = SolveReport(inverse=ctx.inverse)
    total = 0
    while True:
        n = ctx.grid.n
        X = np.full(n, ctx.init.X0p) if start is None else np.array(start[:n], dtype=float)
        prev = None
        bad = 0
        restart = None
        deltas, ratios = [], []
        while True:
            if total >= max_iter:
                rep.deltas, rep.ratios, rep.iterations = deltas, ratios, total
                raise MaxIterExceeded(f"no convergence after {max_iter} iterations")
            total += 1
            try:
                ev = contraction_map(X, ctx)
            except OutOfBall:
                restart = "leaving the ball"
                break
            except (FrequencyNotPositive, ScaleFactorVanishes) as exc:
                restart = type(exc).__name__
                break
            d = float(np.max(np.abs(ev.Xp_out - X)))
            rep.bracket_offsets.append(ev.bracket_offset)
            deltas.append(d)
            if prev is not None and prev > 0:
                q = d / prev
                ratios.append(q)
                bad = bad + 1 if q >= 1 else 0
                if bad >= ratio_patience:
                    restart = f"{ratio_patience} ratios >= 1"
                    break
            prev = d
            X = ev.Xp_out
            if d < tol:
                break
        if restart is None:
            break
        ctx = _shrink(ctx, shrink_factor)
        rep.shrink_history.append((ctx.grid.tau1, restart))
    final = contraction_map(X, ctx, check_ball=False)
    res_trace, res_state = residual_trace_equation(final.traj, final.bundle, final.aux,
                                                   ctx.params, final.qc.T_Vp)
    rep.converged = True
    rep.iterations = total
    rep.deltas, rep.ratios = deltas, ratios
    rep.tau1, rep.n = ctx.grid.tau1, ctx.grid.n
    rep.residual_trace = float(np.max(np.abs(res_trace)))
    rep.residual_state = float(np.max(np.abs(res_state)))
    rep.residual_scale = residual_scale(ctx.params, final.traj.Xp)
    rep.constraint_residual = float(constraint_residual(ctx.spec, ctx.init, ctx.params))
    rep.elapsed = time.perf_counter() - t_start
    final.context = ctx
    return final, rep
