"""Renormalized field square and the derivative of ``a^2 <phi^2>``.

Both are split into a state-dependent sum ``Q_s``, the conformal-vacuum
mode sum ``Q_c`` and a local part ``Q_0``; the ``^d`` pieces assemble the
derivative.  ``Q_c`` is further split into the log-kernel operator applied
to ``V`` and a regular remainder ``Q_f``.  The first-order part of ``Q_f``
is a convolution of ``V'`` with a smooth kernel available in closed form;
everything beyond first order comes from mode sums that converge
absolutely.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import NegativeWSquared
from .geometry import InitialData, Params, Trajectory
from .kgrid import KGrid, KIntegral, k_integral
from .logkernel import EULER_GAMMA, EIGHT_PI2, t_apply
from .modes import ModeTable


# ---------------------------------------------------------------------------
# first-order kernel


def _y1_regular(z):
    """``Y1(z) + 2/(pi z)``, computed by series for small ``z``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 0.5
    zs = z[small]
    # Y1 = -2/(pi z) + (2/pi) J1 log(z/2) - (1/pi) sum (psi(k+1) + psi(k+2)) (-z^2/4)^k (z/2) / (k! (k+1)!)
    acc = np.zeros_like(zs)
    q = -(zs * zs) / 4.0
    term = zs / 2.0
    for k in range(12):
        acc += (special.digamma(k + 1) + special.digamma(k + 2)) * term
        term = term * q / ((k + 1) * (k + 2))
    out[small] = (2 / np.pi) * special.j1(zs) * np.log(zs / 2) - acc / np.pi
    zb = z[~small]
    out[~small] = special.y1(zb) + 2.0 / (np.pi * zb)
    return out


def _y0_running_integral(z):
    """``int_0^z Y0`` through Struve functions.

    ``scipy.special.itj0y0`` loses all accuracy above ``z ~ 20``.
    """
    return z * special.y0(z) + (np.pi * z / 2) * (
        special.y1(z) * special.struve(0, z) - special.y0(z) * special.struve(1, z))


def first_order_kernel(x, w0):
    """Log-subtracted first-order kernel ``G(x) + log x`` and its derivative.

    ``G(x)`` is the regularized ``int_0^inf k^2 cos(2 k0 x) / k0^3 dk`` with
    ``k0 = sqrt(k^2 + w0^2)``.  With ``z = 2 w0 x`` and ``Yint`` the running
    integral of ``Y0``,

        G = -(pi/2) Y0(z) - (pi z/2) (Yint(z) - Y1(z)),
        G' = pi w0 (Y1(z) - Yint(z)).

    Returns
    -------
    g, gp : ndarray
        Kernel and derivative; finite at ``x = 0`` where
        ``g = -gamma - 1 - log w0`` and ``gp = 0``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = 2.0 * w0 * x
    g = np.empty_like(x)
    gp = np.empty_like(x)
    zero = x == 0
    pos = ~zero
    zp, xp = z[pos], x[pos]
    yint = _y0_running_integral(zp)
    y1r = _y1_regular(zp)
    # -(pi/2) Y0 + log x with the logarithm cancelled analytically:
    # Y0 = (2/pi)(log(z/2) + gamma) J0 + (Y0 - (2/pi)(log(z/2)+gamma) J0)
    j0 = special.j0(zp)
    y0_reg = special.y0(zp) - (2 / np.pi) * (np.log(zp / 2) + EULER_GAMMA) * j0
    log_part = -(np.log(w0) + EULER_GAMMA) * j0 + np.log(xp) * (1.0 - j0)
    # -(pi z/2)(Yint - Y1) = -(pi z/2) Yint + (pi z/2) Y1 = -(pi z/2) Yint + (pi z/2) y1r - 1
    g[pos] = -(np.pi / 2) * y0_reg + log_part - (np.pi * zp / 2) * yint + (np.pi * zp / 2) * y1r - 1.0
    gp[pos] = np.pi * w0 * (y1r - yint)
    g[zero] = -EULER_GAMMA - 1.0 - np.log(w0)
    gp[zero] = 0.0
    return g, gp


def first_order_kernel_oracle(x, w0):
    """Independent evaluation of the kernel from cosine integrals.

    ``-gamma - log(2 w0) - f1(w0 x) - f2(w0 x)`` with
    ``f2(z) = Ci(2z) - gamma - log(2z)`` and
    ``f1(z) = int_1^inf cos(2 u z) (u - sqrt(u^2 - 1)) / u^2 du``.
    """
    z = w0 * x
    if z == 0:
        return -EULER_GAMMA - np.log(2 * w0) - (1 - np.log(2))
    h = lambda u: (u - np.sqrt(max(u * u - 1.0, 0.0))) / u**2
    f1 = integrate.quad(lambda u: np.cos(2 * u * z) * h(u), 1.0, 2.0, limit=200,
                        epsabs=1e-14)[0]
    if z < 0.05:
        f1 += integrate.quad(lambda u: np.cos(2 * u * z) * h(u), 2.0, np.inf, limit=500,
                             epsabs=1e-14)[0]
    else:
        f1 += integrate.quad(h, 2.0, np.inf, weight="cos", wvar=2 * z, limlst=200)[0]
    ci = special.sici(2 * z)[1]
    f2 = ci - EULER_GAMMA - np.log(2 * z)
    return -EULER_GAMMA - np.log(2 * w0) - f1 - f2


def _trapezoid_toeplitz(values, kernel, h):
    """``out[i] = h * trapz_j values[j] * kernel[i - j]`` over ``j = 0..i``."""
    n = len(values)
    out = np.zeros(n)
    for i in range(1, n):
        prod = values[:i + 1] * kernel[i::-1]
        out[i] = h * (np.sum(prod) - 0.5 * (prod[0] + prod[-1]))
    return out


def _product_weights(offsets, w0, order=8):
    """Cell weights for ``int u(x) g'(x) dx`` with ``u`` linear on each cell.

    ``g'`` behaves like ``x log x`` at the origin, which costs the plain
    trapezoid rule a ``log h`` factor; integrating the linear interpolant
    against the exact kernel does not.  Returns ``(left, right)`` so the
    integral is ``sum_j u_j left_j + u_{j+1} right_j``.
    """
    x = np.asarray(offsets, dtype=float)
    h = np.diff(x)
    g, _ = first_order_kernel(x, w0)
    # int_cell g from Gauss-Legendre; g itself only has an x^2 log x corner
    nodes, wts = np.polynomial.legendre.leggauss(order)
    pts = x[:-1, None] + 0.5 * h[:, None] * (nodes[None, :] + 1.0)
    gq, _ = first_order_kernel(pts.ravel(), w0)
    cell_g = 0.5 * h * (gq.reshape(pts.shape) @ wts)
    w0_cell = np.diff(g)                  # int g'
    w1_cell = g[1:] - cell_g / h          # int g' t, t = (x - x_j) / h
    return w0_cell - w1_cell, w1_cell


def _product_toeplitz(values, left, right):
    """``out[i] = sum_j values[i - j] left_j + values[i - j - 1] right_j``."""
    n = len(values)
    out = np.zeros(n)
    for i in range(1, n):
        rev = values[i::-1]
        out[i] = rev[:-1] @ left[:i] + rev[1:] @ right[:i]
    return out


def first_order_pair(Vp, grid, w0):
    """First-order parts of ``Q_f`` and ``Q_f^d`` from samples of ``V'``.

    ``Q_f`` first order is ``(1/8 pi^2) int V'(eta) g(tau - eta)``; the
    derivative counterpart is the same convolution of ``V''``, integrated by
    parts so only ``V'`` is needed:
    ``(1/8 pi^2) [V'(tau) g(0) - V'(tau0) g(tau - tau0) + int V' g'(tau - eta)]``.
    """
    Vp = np.asarray(Vp, dtype=float)
    g, gp = first_order_kernel(grid.offsets, w0)
    lf = _trapezoid_toeplitz(Vp, g, grid.h) / EIGHT_PI2
    # ordered so the bracket is exactly zero at tau0
    left, right = _product_weights(grid.offsets, w0)
    lfd = (Vp * g[0] - Vp[0] * g + _product_toeplitz(Vp, left, right)) / EIGHT_PI2
    return lf, lfd


# ---------------------------------------------------------------------------
# conformal-vacuum sums


@dataclass
class QcResult:
    Q_c: np.ndarray
    Q_c_d: np.ndarray
    T_V: np.ndarray
    T_Vp: np.ndarray
    first: np.ndarray
    first_d: np.ndarray
    remainder: KIntegral
    remainder_d: KIntegral


def q_c_pair(traj: Trajectory, modes: ModeTable, kgrid: KGrid, w0: float) -> QcResult:
    """``Q_c`` and ``Q_c^d`` on the trajectory's grid.

    ``Q_c = [first order] + T[V] + (1/2 pi^2) int k^2 r``, where ``r`` is
    the part of ``|chi|^2`` beyond first order in ``V``; likewise for the
    derivative with ``T[V']``.  No damping factor is needed: every
    k-integral is absolutely convergent.
    """
    tau = traj.grid.tau
    lf, lfd = first_order_pair(traj.Vp, traj.grid, w0)
    TV = t_apply(tau, traj.V, traj.Vp)
    TVp = t_apply(tau, traj.Vp)
    r, rd = modes.beyond_first_order()
    rem = k_integral(kgrid, r)
    remd = k_integral(kgrid, rd)
    Q_c = lf + TV + rem.value
    Q_c_d = lfd + TVp + remd.value
    return QcResult(Q_c, Q_c_d, TV, TVp, lf, lfd, rem, remd)


def q_f_pair(qc: QcResult):
    """``Q_f = Q_c - T[V]`` and ``Q_f^d = Q_c^d - T[V']``."""
    return qc.Q_c - qc.T_V, qc.Q_c_d - qc.T_Vp


def lipschitz_estimate(Qf1, Qf2, V1, V2):
    """Measured ratio ``||Q_f[V1] - Q_f[V2]|| / ||V1 - V2||`` (sup norms)."""
    den = np.max(np.abs(np.asarray(V1) - np.asarray(V2)))
    return float(np.max(np.abs(np.asarray(Qf1) - np.asarray(Qf2))) / den) if den > 0 else 0.0


# ---------------------------------------------------------------------------
# local part


def w_squared(traj: Trajectory, params: Params):
    return traj.a**2 * params.m**2 + params.six_xi_minus_one * traj.X


def q_0_pair(traj: Trajectory, init: InitialData, params: Params):
    """Local part ``Q_0`` and its derivative ``Q_0^d``.

    ``Q_0 = w^2 log(w0/a) / 8 pi^2 - w0^2 / 16 pi^2 + alpha1 m^2 a^2 + alpha2 a^2 R``
    with ``w^2 = a^2 (m^2 + (xi - 1/6) R)``; ``Q_0^d`` is its exact
    derivative written with ``(w^2)' = V'``.
    """
    if not (params.m**2 + (params.xi - 1.0 / 6.0) * init.R0) > 0:
        raise NegativeWSquared("m^2 + (xi - 1/6) R < 0 at tau0")
    a, ap = traj.a, traj.ap
    w2 = w_squared(traj, params)
    lg = np.log(init.w0 / a)
    Q0 = (w2 * lg / EIGHT_PI2 - init.w0sq / (2 * EIGHT_PI2)
          + params.alpha1 * params.m**2 * a**2 + params.alpha2 * a**2 * traj.R)
    Q0d = (traj.Vp * lg / EIGHT_PI2 - a * traj.H * w2 / EIGHT_PI2
           + 2 * params.alpha1 * params.m**2 * a * ap + 6 * params.alpha2 * traj.Xp)
    return Q0, Q0d


# ---------------------------------------------------------------------------
# bundle


@dataclass
class ExpectationBundle:
    phi2: np.ndarray
    d_a2phi2: np.ndarray
    Q_s: np.ndarray
    Q_c: np.ndarray
    Q_0: np.ndarray
    Q_s_d: np.ndarray
    Q_c_d: np.ndarray
    Q_0_d: np.ndarray
    Q_f: np.ndarray
    Q_f_d: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def a2phi2(self):
        return self.Q_s + self.Q_c + self.Q_0


def assemble(traj: Trajectory, qs, qc: QcResult, q0) -> ExpectationBundle:
    """Combine the components into ``<phi^2>`` and ``d(a^2 <phi^2>)/dtau``.

    ``qs`` and ``q0`` are ``(value, derivative)`` pairs.
    """
    Q_s, Q_s_d = qs
    Q_0, Q_0_d = q0
    Q_f, Q_f_d = q_f_pair(qc)
    total = Q_s + qc.Q_c + Q_0
    phi2 = total / traj.a**2
    d_total = Q_s_d + qc.Q_c_d + Q_0_d
    bundle = ExpectationBundle(phi2, d_total, Q_s, qc.Q_c, Q_0, Q_s_d, qc.Q_c_d, Q_0_d,
                               Q_f, Q_f_d)
    # phi2 * a^2 reproduces the sum to a few ulps (division then multiplication)
    dev = np.max(np.abs(phi2 * traj.a**2 - total) / np.maximum(np.abs(total), 1e-300))
    bundle.diagnostics["phi2_roundtrip_rel"] = float(dev)
    bundle.diagnostics["remainder_tail"] = float(np.max(qc.remainder.tail))
    bundle.diagnostics["remainder_tail_d"] = float(np.max(qc.remainder_d.tail))
    return bundle
