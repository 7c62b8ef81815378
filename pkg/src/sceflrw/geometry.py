"""Flat FLRW kinematics in conformal time.

The solver's unknown is ``Xp = dX/dtau`` with ``X = a''/a``.  Everything else
(scale factor, potential, curvature scalars) is reconstructed from it here.
The module also hosts the linear second-order integrators shared by the
scale factor, the auxiliary trace field and the mode functions.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    GronwallViolation,
    NonPositiveInitialFrequency,
    NonPositiveScaleFactor,
    ScaleFactorVanishes,
)

# relative slack granted to a-priori bounds before they count as violated
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class Params:
    """Physical and renormalization constants (units hbar = c = 1).

    ``betaT34`` stands for the combination beta~3 - beta~4/3 that multiplies
    I00 in the energy density.
    """

    m: float
    xi: float
    Lambda: float = 0.0
    G: float = 1.0
    lambda_scale: float = 1.0
    alpha1: float = 0.0
    alpha2: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    betaT1: float = 0.0
    betaT2: float = 0.0
    betaT34: float = 0.0

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError(f"mass must be positive, got {self.m}")
        if abs(self.xi - 1.0 / 6.0) < 1e-14:
            raise ConfigError("xi = 1/6 (conformal coupling) is excluded")
        if not self.lambda_scale > 0:
            raise ConfigError("lambda_scale must be positive")
        if not self.G > 0:
            raise ConfigError("Newton constant G must be positive")

    @property
    def six_xi_minus_one(self) -> float:
        return 6.0 * self.xi - 1.0


@dataclass(frozen=True)
class InitialData:
    """Scale factor data at ``tau0`` plus the quantities derived from it."""

    tau0: float
    a0: float
    a0p: float
    a0pp: float
    a0ppp: float
    X0: float
    X0p: float
    R0: float
    w0sq: float

    @property
    def w0(self) -> float:
        return float(np.sqrt(self.w0sq))

    @property
    def H0(self) -> float:
        return self.a0p / self.a0**2

    @property
    def R0p(self) -> float:
        # d/dtau (6 X / a^2)
        return 6.0 * self.X0p / self.a0**2 - 12.0 * self.X0 * self.a0p / self.a0**3


def derive_initial_conditions(tau0, a0, a0p, a0pp, a0ppp, params: Params) -> InitialData:
    """Build :class:`InitialData` from the first three derivatives of ``a``.

    Raises
    ------
    NonPositiveScaleFactor
        if ``a0 <= 0``.
    NonPositiveInitialFrequency
        if ``a0^2 m^2 + (xi - 1/6) R0 a0^2 <= 0``; every mode frequency
        must start out real.
    """
    if not a0 > 0:
        raise NonPositiveScaleFactor(f"a0 must be positive, got {a0}")
    X0 = a0pp / a0
    X0p = a0ppp / a0 - a0pp * a0p / a0**2
    R0 = 6.0 * X0 / a0**2
    w0sq = a0**2 * params.m**2 + (params.xi - 1.0 / 6.0) * R0 * a0**2
    if not w0sq > 0:
        raise NonPositiveInitialFrequency(f"w0^2 = {w0sq} <= 0")
    return InitialData(float(tau0), float(a0), float(a0p), float(a0pp), float(a0ppp),
                       float(X0), float(X0p), float(R0), float(w0sq))


def potential_slope_initial(init: InitialData, params: Params) -> float:
    """V'(tau0) = 2 m^2 a0 a0' + (6 xi - 1) X0'."""
    return 2.0 * params.m**2 * init.a0 * init.a0p + params.six_xi_minus_one * init.X0p


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[tau0, tau1]`` with ``n`` nodes."""

    tau0: float
    tau1: float
    n: int

    def __post_init__(self):
        if not self.tau1 > self.tau0:
            raise ConfigError("tau1 must exceed tau0")
        if self.n < 3:
            raise ConfigError("a time grid needs at least 3 nodes")

    @property
    def h(self) -> float:
        return (self.tau1 - self.tau0) / (self.n - 1)

    @property
    def tau(self) -> np.ndarray:
        return self.tau0 + self.h * np.arange(self.n)

    @property
    def offsets(self) -> np.ndarray:
        """tau - tau0 at the nodes."""
        return self.h * np.arange(self.n)

    def truncated(self, n_new: int) -> "TimeGrid":
        """Leading ``n_new`` nodes with the spacing kept bit-identical."""
        h = self.h
        g = TimeGrid(self.tau0, self.tau0 + h * (n_new - 1), n_new)
        # rebuild tau1 so that g.h reproduces h exactly when possible
        object.__setattr__(g, "tau1", self.tau0 + h * (n_new - 1))
        return g


@dataclass(frozen=True)
class Trajectory:
    """Sampled geometry on a :class:`TimeGrid`.

    ``two_I00`` holds 2 I_0^0 = 216 H^2 dH - 36 dH^2 + 72 H ddH, where the
    dots are cosmological-time derivatives.
    """

    grid: TimeGrid
    Xp: np.ndarray
    X: np.ndarray
    a: np.ndarray
    ap: np.ndarray
    V: np.ndarray
    Vp: np.ndarray
    R: np.ndarray
    H: np.ndarray | None = None
    app: np.ndarray | None = None
    appp: np.ndarray | None = None
    riem_minus_ricci: np.ndarray | None = None
    two_I00: np.ndarray | None = None


# ---------------------------------------------------------------------------
# linear second-order integrators


def _running_max(x):
    return np.maximum.accumulate(np.abs(x))


def _cumtrapz(y, h):
    out = np.zeros(len(y), dtype=np.result_type(y, float))
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]))
    return out


def _quadrature_weights(i):
    """Weights for int over i cells of a smooth integrand, exact for cubics.

    Simpson variants cover i <= 4; Gregory end corrections beyond.
    """
    if i == 2:
        return np.array([1 / 3, 4 / 3, 1 / 3])
    if i == 3:
        return np.array([3 / 8, 9 / 8, 9 / 8, 3 / 8])
    if i == 4:
        return np.array([1 / 3, 4 / 3, 2 / 3, 4 / 3, 1 / 3])
    w = np.ones(i + 1)
    w[[0, -1]] = 3 / 8
    w[[1, -2]] = 7 / 6
    w[[2, -3]] = 23 / 24
    return w


def _first_cell_moments(k, h):
    """int_0^h K(h - eta) (1 - eta/h, eta/h) d eta for K = sin(k.)/k and cos(k.)."""
    if k == 0:
        return (h * h / 3, h * h / 6), (h / 2, h / 2)
    x = k * h
    if x < 1e-3:
        s1 = h * h * (1 / 6 - x * x / 120)          # (x - sin x) / (k^3 h)
        c1 = h * (1 / 2 - x * x / 24)               # (1 - cos x) / (k^2 h)
    else:
        s1 = (x - np.sin(x)) / (k**3 * h)
        c1 = 2 * np.sin(x / 2) ** 2 / (k * k * h)
    s_all = 2 * np.sin(x / 2) ** 2 / k**2           # (1 - cos x) / k^2
    c_all = np.sin(x) / k
    return (s_all - s1, s1), (c_all - c1, c1)


def _volterra_gregory(W, h_src, k, f0, f0p, grid: TimeGrid):
    n, h = grid.n, grid.h
    t = grid.offsets
    if k > 0:
        sn = np.sin(k * t) / k
        cs = np.cos(k * t)
        base = f0 * cs + f0p * sn
        base_p = -k * f0 * np.sin(k * t) + f0p * cs
    else:
        sn = t.copy()
        cs = np.ones(n)
        base = f0 + f0p * t
        base_p = np.full(n, f0p, dtype=np.result_type(f0p, float))
    dtype = np.result_type(f0, f0p, W, h_src, float)
    f = np.zeros(n, dtype=dtype)
    fp = np.zeros(n, dtype=dtype)
    g = np.zeros(n, dtype=dtype)  # source minus potential term
    f[0], fp[0] = f0, f0p
    g[0] = h_src[0] - W[0] * f[0]
    # first cell: g linear across the cell, solved implicitly for f_1
    (s0, s1), (c0, c1) = _first_cell_moments(k, h)
    f[1] = (base[1] + s0 * g[0] + s1 * h_src[1]) / (1 + s1 * W[1])
    g[1] = h_src[1] - W[1] * f[1]
    fp[1] = base_p[1] + c0 * g[0] + c1 * g[1]
    for i in range(2, n):
        w = _quadrature_weights(i)
        # kernel sin(k(t_i - t_j))/k vanishes at j = i, so the step is explicit
        f[i] = base[i] + h * np.dot(w[:-1] * sn[i:0:-1], g[:i])
        g[i] = h_src[i] - W[i] * f[i]
        fp[i] = base_p[i] + h * np.dot(w * cs[i::-1], g[:i + 1])
    return f, fp


def _filon_linear_moments(z):
    """Return (int_0^1 e^{zs} ds, int_0^1 s e^{zs} ds) for complex ``z``."""
    z = np.asarray(z, dtype=complex)
    e1 = np.empty_like(z)
    e2 = np.empty_like(z)
    small = np.abs(z) < 0.5
    if np.any(small):
        zs = z[small]
        s1 = np.zeros_like(zs)
        s2 = np.zeros_like(zs)
        term = np.ones_like(zs)  # z^n / n!
        for n in range(18):
            s1 += term / (n + 1)
            s2 += term / (n + 2)
            term = term * zs / (n + 1)
        e1[small] = s1
        e2[small] = s2
    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        e1[big] = (ez - 1.0) / zb
        e2[big] = (ez * (zb - 1.0) + 1.0) / zb**2
    return e1, e2


def _cosh_sinhc(musq):
    """cosh(mu) and sinh(mu)/mu for real ``mu^2`` of either sign."""
    c = np.empty_like(musq)
    s = np.empty_like(musq)
    small = np.abs(musq) < 1e-4
    x = musq[small]
    c[small] = 1 + x / 2 + x**2 / 24 + x**3 / 720 + x**4 / 40320
    s[small] = 1 + x / 6 + x**2 / 120 + x**3 / 5040 + x**4 / 362880
    pos = (~small) & (musq > 0)
    neg = (~small) & (musq < 0)
    r = np.sqrt(musq[pos])
    c[pos] = np.cosh(r)
    s[pos] = np.sinh(r) / r
    r = np.sqrt(-musq[neg])
    c[neg] = np.cos(r)
    s[neg] = np.sin(r) / r
    return c, s


@dataclass
class InteractionSolution:
    """Mode data in the interaction picture relative to ``e^{i k (tau - tau0)}``.

    The solution of ``f'' + (k^2 + W) f = 0`` is
    ``f = alpha u + beta conj(u)`` with ``u = e^{i k (tau - tau0)} / sqrt(2k)``.
    ``first_q`` is the cumulative Filon integral
    ``int (W / 2k) e^{2 i k (eta - tau0)} d eta``, which fixes the first
    perturbative order exactly: ``beta_1 = -i first_q``.
    """

    k: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    first_q: np.ndarray
    grid: TimeGrid


def interaction_propagate(W, k, grid: TimeGrid) -> InteractionSolution:
    """Propagate unit positive-frequency data through ``f'' + (k^2 + W) f = 0``.

    Each cell uses the first Magnus term of the interaction-picture generator
    with ``W`` linear across the cell; the oscillatory cell moments are
    integrated exactly.  The cell propagator lies in SU(1,1), so
    ``|alpha|^2 - |beta|^2 = 1`` (equivalently the Wronskian) holds to
    rounding for any step size.

    Parameters
    ----------
    W : ndarray, shape (n,)
        Real potential samples.
    k : ndarray, shape (nk,)
        Positive reference frequencies.
    grid : TimeGrid
    """
    W = np.asarray(W, dtype=float)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    n, h = grid.n, grid.h
    t = grid.offsets
    v = W[:, None] / (2.0 * k[None, :])
    p = 0.5 * h * (v[1:] + v[:-1])
    z = 2j * k * h
    e1, e2 = _filon_linear_moments(np.broadcast_to(z, (1, len(k))).ravel())
    e1, e2 = e1[None, :], e2[None, :]
    phase = np.exp(2j * np.outer(t[:-1], k))
    q = phase * h * (v[:-1] * (e1 - e2) + v[1:] * e2)
    first_q = np.zeros((n, len(k)), dtype=complex)
    first_q[1:] = np.cumsum(q, axis=0)
    musq = np.abs(q) ** 2 - p**2
    c, s = _cosh_sinhc(musq)
    m11 = c + 1j * s * p
    m12 = 1j * s * np.conj(q)
    m21 = -1j * s * q
    m22 = c - 1j * s * p
    alpha = np.empty((n, len(k)), dtype=complex)
    beta = np.empty((n, len(k)), dtype=complex)
    alpha[0] = 1.0
    beta[0] = 0.0
    for j in range(n - 1):
        alpha[j + 1] = m11[j] * alpha[j] + m12[j] * beta[j]
        beta[j + 1] = m21[j] * alpha[j] + m22[j] * beta[j]
    return InteractionSolution(k, alpha, beta, first_q, grid)


def _from_interaction(sol: InteractionSolution, f0, f0p, idx=0):
    # general initial data as a combination of u and conj(u)
    k = sol.k[idx]
    t = sol.grid.offsets
    u = np.exp(1j * k * t) / np.sqrt(2 * k)
    up = 1j * k * u
    a, b = sol.alpha[:, idx], sol.beta[:, idx]
    chi = a * u + b * np.conj(u)
    chip = a * up + b * np.conj(up)
    # Wronskian projections of the initial data on (chi, conj chi)
    c1 = -1j * (f0p * np.conj(chi[0]) - f0 * np.conj(chip[0]))
    c2 = 1j * (f0p * chi[0] - f0 * chip[0])
    f = c1 * chi + c2 * np.conj(chi)
    fp = c1 * chip + c2 * np.conj(chip)
    return f, fp


def solve_linear_second_order(W, h_src, k, f0, f0p, grid: TimeGrid,
                              method="volterra", check_bounds=True):
    """Solve ``f'' + (k^2 + W) f = h_src`` with data ``(f0, f0p)`` at ``tau0``.

    Parameters
    ----------
    W, h_src : array_like
        Samples on ``grid`` (scalars are broadcast).
    k : float
        Non-negative free frequency.
    f0, f0p : real or complex
    method : {"volterra", "interaction"}
        ``"volterra"`` discretizes the retarded integral form with
        Gregory end-corrected weights (fourth order).  ``"interaction"``
        (``k > 0`` and ``h_src == 0`` only) uses the SU(1,1) cell propagator
        of :func:`interaction_propagate`.
    check_bounds : bool
        Assert the Gronwall-type a-priori bounds.

    Returns
    -------
    f, fp : ndarray
        Solution and its derivative at the nodes.
    """
    n = grid.n
    W = np.broadcast_to(np.asarray(W), (n,)).astype(float)
    h_src = np.broadcast_to(np.asarray(h_src), (n,))
    if method == "volterra":
        f, fp = _volterra_gregory(W, h_src, k, f0, f0p, grid)
    elif method == "interaction":
        if not k > 0 or np.any(h_src != 0):
            raise ValueError("interaction method needs k > 0 and no source")
        sol = interaction_propagate(W, np.array([k]), grid)
        f, fp = _from_interaction(sol, f0, f0p)
    else:
        raise ValueError(f"unknown method {method!r}")
    if check_bounds:
        _check_gronwall(f, W, h_src, k, f0, f0p, grid)
    return f, fp


def _check_gronwall(f, W, h_src, k, f0, f0p, grid: TimeGrid):
    t = grid.offsets
    normW = _running_max(W)
    normh = _running_max(h_src)
    bound = (abs(f0) + t * abs(f0p) + t**2 * normh) * np.exp(t**2 * normW)
    if k > 0:
        intW = _cumtrapz(np.abs(W), grid.h)
        inth = _cumtrapz(np.abs(h_src), grid.h)
        bound = np.minimum(bound, (abs(f0) + abs(f0p) / k + inth / k) * np.exp(intW / k))
    excess = np.abs(f) - bound * (1 + BOUND_SLACK) - 1e-300
    if np.any(excess > 0):
        i = int(np.argmax(excess))
        raise GronwallViolation(
            f"|f| = {abs(f[i]):.6e} exceeds bound {bound[i]:.6e} at tau = {grid.tau[i]:.6e}")


# ---------------------------------------------------------------------------
# trajectories


def hubble_invariants(a, ap, app, appp):
    """Hubble rate and the curvature scalars built from it.

    Cosmological-time derivatives are converted with ``d/dt = a^{-1} d/dtau``:
    ``dH = (a'' a - 2 a'^2) / a^4`` and
    ``ddH = (a''' a^2 - 7 a a' a'' + 8 a'^3) / a^6``.

    Returns
    -------
    H, riem_minus_ricci, two_I00
    """
    H = ap / a**2
    riem = 12.0 * (ap**4 / a**8 - app * ap**2 / a**7)
    dH = (app * a - 2.0 * ap**2) / a**4
    ddH = (appp * a**2 - 7.0 * a * ap * app + 8.0 * ap**3) / a**6
    two_I00 = 216.0 * H**2 * dH - 36.0 * dH**2 + 72.0 * H * ddH
    return H, riem, two_I00


def curvature_invariants(traj: Trajectory) -> Trajectory:
    """Fill ``H``, ``app``, ``appp``, ``riem_minus_ricci`` and ``two_I00``."""
    a, ap, X, Xp = traj.a, traj.ap, traj.X, traj.Xp
    app = X * a
    appp = Xp * a + X * ap
    H, riem, two_I00 = hubble_invariants(a, ap, app, appp)
    return dataclasses.replace(traj, H=H, app=app, appp=appp,
                               riem_minus_ricci=riem, two_I00=two_I00)


def _potential(a, ap, X, Xp, init: InitialData, params: Params):
    c = params.six_xi_minus_one
    V = params.m**2 * (a**2 - init.a0**2) + c * (X - init.X0)
    Vp = 2.0 * params.m**2 * a * ap + c * Xp
    return V, Vp


def build_trajectory(Xp, init: InitialData, grid: TimeGrid, params: Params,
                     check_bounds=True) -> Trajectory:
    """Reconstruct the geometry from samples of ``X'``.

    ``X = X0 + int X'`` (trapezoid), then ``a'' = X a`` is integrated in
    retarded Volterra form.

    Raises
    ------
    ScaleFactorVanishes
        if ``a <= 0`` somewhere on the grid.
    GronwallViolation
        if the scale factor violates its a-priori bound.
    """
    Xp = np.asarray(Xp, dtype=float)
    if Xp.shape != (grid.n,):
        raise ValueError(f"Xp has shape {Xp.shape}, grid has {grid.n} nodes")
    X = init.X0 + _cumtrapz(Xp, grid.h)
    a, ap = solve_linear_second_order(-X, 0.0, 0.0, init.a0, init.a0p, grid,
                                      check_bounds=check_bounds)
    if np.any(a <= 0):
        i = int(np.argmax(a <= 0))
        raise ScaleFactorVanishes(f"a <= 0 at tau = {grid.tau[i]:.6e}; shrink the interval")
    if check_bounds:
        T = grid.tau1 - grid.tau0
        nX = np.max(np.abs(X))
        bound = T * (abs(init.a0p) + abs(init.a0) * T * nX / 2) * np.exp(T**2 * nX / 2)
        if np.max(np.abs(a - init.a0)) > bound * (1 + BOUND_SLACK):
            raise GronwallViolation("scale factor leaves its a-priori envelope")
    V, Vp = _potential(a, ap, X, Xp, init, params)
    R = 6.0 * X / a**2
    traj = Trajectory(grid, Xp, X, a, ap, V, Vp, R)
    return curvature_invariants(traj)


def trajectory_from_scale_factor(grid: TimeGrid, a, ap, app, appp,
                                 init: InitialData, params: Params) -> Trajectory:
    """Trajectory from closed-form samples of ``a`` and three derivatives."""
    a = np.asarray(a, dtype=float)
    X = app / a
    Xp = appp / a - app * ap / a**2
    V, Vp = _potential(a, ap, X, Xp, init, params)
    traj = Trajectory(grid, Xp, X, a, np.asarray(ap, float), V, Vp, 6.0 * X / a**2)
    return curvature_invariants(traj)
