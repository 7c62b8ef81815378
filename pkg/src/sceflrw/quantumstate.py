"""Initial quantum state: regularity, state-dependent sums, energy density and tuning.

A state is fixed at ``tau0`` by ``Phi = |zeta|^2``, ``E = |zeta'|^2`` and a
sign ``s``; with ``zeta = rho e^{i theta}`` this gives ``rho = sqrt(Phi)``
and ``rho' = s sqrt(E - 1/(4 Phi))`` plus an optional bump.  All
quantities below depend only on ``(rho, rho')``, never on the phase.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ConstraintUnreachable, QuadratureNotConverged
from .geometry import InitialData, Params, hubble_invariants, potential_slope_initial
from .kgrid import KGrid, KIntegral, k_integral
from .modes import Bump, ModeTable, StateSpec, bogoliubov_coefficients


# ---------------------------------------------------------------------------
# initial-time scalars


@dataclass(frozen=True)
class InitialScalars:
    """Geometric quantities at ``tau0`` that enter the counterterms."""

    a: float
    H: float
    R: float
    two_I00: float
    Vp0: float
    w0sq: float
    c1: float  # a^2 m^2 - (6 xi - 1) a^2 H^2
    c3: float  # coefficient of the k^-3 counterterm

    @classmethod
    def build(cls, init: InitialData, params: Params):
        a = init.a0
        H, _, two_I00 = hubble_invariants(a, init.a0p, init.a0pp, init.a0ppp)
        m2 = params.m**2
        xs = params.xi - 1.0 / 6.0
        c1 = a * a * m2 - params.six_xi_minus_one * a * a * H * H
        c3 = a**4 * m2 * m2 + 12.0 * xs * m2 * a**4 * H * H + a**4 * xs * xs * two_I00
        return cls(float(a), float(H), float(init.R0), float(two_I00),
                   float(potential_slope_initial(init, params)), init.w0sq, float(c1), float(c3))


def _k0(k, w0sq):
    return np.sqrt(np.asarray(k, float) ** 2 + w0sq)


def _state_arrays(spec: StateSpec, k, w0sq, bump_mask=None):
    """``rho``, ``rho'``, ``1 - 2 k Phi`` and ``1 - 2 k0 Phi`` on nodes ``k``."""
    k = np.asarray(k, float)
    Phi = np.asarray(spec.Phi(k), float)
    rho = np.sqrt(Phi)
    rp = np.asarray(spec.real_derivative(k, bump_mask), float)
    d = spec.one_minus_2kPhi(k)
    k0 = _k0(k, w0sq)
    # 1 - 2 k0 Phi = (1 - 2 k Phi) - 2 Phi w0^2 / (k0 + k)
    d0 = d - 2.0 * Phi * w0sq / (k0 + k)
    return rho, rp, d, d0


# ---------------------------------------------------------------------------
# integrands at tau0


def phi2_integrand(spec, init: InitialData, k):
    """``Phi - 1/(2 k0)``: the state's field square minus its counterterm at ``tau0``."""
    rho, _, _, d0 = _state_arrays(spec, k, init.w0sq)
    # Phi - 1/(2 k0) = -(1 - 2 k0 Phi) / (2 k0)
    return -d0 / (2.0 * _k0(k, init.w0sq)), rho**2


def dphi2_integrand(spec, init: InitialData, params: Params, k, bump_mask=None):
    """``2 rho rho' + V'(tau0)/(4 k0^3)``, the derivative counterpart."""
    rho, rp, _, _ = _state_arrays(spec, k, init.w0sq, bump_mask)
    slope = potential_slope_initial(init, params) / (4.0 * _k0(k, init.w0sq) ** 3)
    return 2.0 * rho * rp + slope, np.abs(2.0 * rho * rp) + np.abs(slope)


def energy_integrand(spec, init: InitialData, params: Params, k, bump_mask=None,
                     scalars: Optional[InitialScalars] = None):
    """Energy-density mode integrand with its counterterm removed, at ``tau0``.

    Written so that the leading large-``k`` pieces cancel analytically:
    ``rho'^2/2 + d^2/(8 Phi) - c1 d/(4k) + (6 xi - 1) a H rho rho'
    + c3 / (16 k (k^2 + a^2/lambda^2))`` with ``d = 1 - 2 k Phi``.

    Returns
    -------
    value, magnitude : ndarray
        ``magnitude`` sums the absolute values of the terms (noise scale).
    """
    sc = scalars or InitialScalars.build(init, params)
    k = np.asarray(k, float)
    rho, rp, d, _ = _state_arrays(spec, k, init.w0sq, bump_mask)
    Phi = rho * rho
    lam = params.lambda_scale
    terms = (0.5 * rp * rp,
             d * d / (8.0 * Phi),
             -sc.c1 * d / (4.0 * k),
             params.six_xi_minus_one * sc.a * sc.H * rho * rp,
             sc.c3 / (16.0 * k * (k * k + sc.a**2 / lam**2)))
    return sum(terms), sum(np.abs(t) for t in terms)


def energy_integrand_direct(zeta, zetap, k, init: InitialData, params: Params,
                            scalars: Optional[InitialScalars] = None):
    """Same integrand from complex mode data, with the counterterm subtracted last.

    ``|zeta'|^2/2 + (k^2 + c1)|zeta|^2/2 + (6 xi - 1) a H Re(conj(zeta) zeta')
    - [k/2 + c1/(4k) - c3/(16 k (k^2 + a^2/lambda^2))]``.  Loses relative
    precision like ``k^2`` against :func:`energy_integrand`; kept as an
    independent route for moderate ``k``.
    """
    sc = scalars or InitialScalars.build(init, params)
    k = np.asarray(k, float)
    kin = 0.5 * np.abs(zetap) ** 2 + 0.5 * (k * k + sc.c1) * np.abs(zeta) ** 2
    cross = params.six_xi_minus_one * sc.a * sc.H * (np.conj(zeta) * zetap).real
    ct = (0.5 * k + sc.c1 / (4.0 * k)
          - sc.c3 / (16.0 * k * (k * k + sc.a**2 / params.lambda_scale**2)))
    return kin + cross - ct


# ---------------------------------------------------------------------------
# regularity


@dataclass
class RegularityCheck:
    name: str
    exponent: float  # fitted power of k^2 * integrand over the last decade
    integral: float  # (1/2 pi^2) int k^2 f dk up to k_hi
    passed: bool


@dataclass
class RegularityReport:
    checks: list
    k_hi: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        out = [f"regularity.k_hi = {self.k_hi:.6e}"]
        for c in self.checks:
            out.append(f"regularity.{c.name}.exponent = {c.exponent:.4f}")
            out.append(f"regularity.{c.name}.integral = {c.integral:.15e}")
            out.append(f"regularity.{c.name}.pass = {c.passed}")
        out.append(f"regularity.pass = {self.passed}")
        return out


def _fit_tail(k, g, mag, noise=64 * np.finfo(float).eps):
    """Power of ``|g|`` over the last decade, ignoring rounding-level values."""
    sel = k >= k[-1] / 10.0
    kk, gg, mm = k[sel], np.abs(g[sel]), mag[sel]
    live = gg > noise * mm
    if np.count_nonzero(live) < 3:
        return -np.inf  # zero up to rounding
    kk, gg = kk[live], gg[live]
    # envelope from the right so sign changes do not bias the fit
    env = np.flip(np.maximum.accumulate(np.flip(gg)))
    return float(np.polyfit(np.log(kk), np.log(env), 1)[0])


def check_regularity(spec: StateSpec, init: InitialData, params: Params,
                     k_hi=None, nodes=1024) -> RegularityReport:
    """Check that the three initial-time integrands are integrable against ``k^2 dk``.

    Passing requires the fitted power of ``k^2 f`` over the last decade
    below ``k_hi`` to be below ``-1`` (decay faster than ``k^-3`` for
    ``f``).  Integrands that vanish to rounding pass.
    """
    w0 = init.w0
    if k_hi is None:
        k_hi = 1e4 * max(w0, init.a0 / params.lambda_scale)
        if spec.bump is not None:
            k_hi = max(k_hi, 100.0 * spec.bump.p2)
    k = np.geomspace(1e-3 * w0, k_hi, nodes)
    if spec.bump is not None:
        k = np.union1d(k, [spec.bump.p1, spec.bump.p2])
    u = np.log(k)
    sc = InitialScalars.build(init, params)
    checks = []
    for name, (f, mag) in (
            ("field_square", phi2_integrand(spec, init, k)),
            ("field_square_derivative", dphi2_integrand(spec, init, params, k)),
            ("energy_density", energy_integrand(spec, init, params, k, scalars=sc))):
        g = k**2 * f
        expo = _fit_tail(k, g, k**2 * mag)
        val = integrate.trapezoid(g * k, u) / (2 * np.pi**2)
        checks.append(RegularityCheck(name, expo, float(val), bool(expo < -1.0)))
    return RegularityReport(checks, float(k_hi))


# ---------------------------------------------------------------------------
# Bogoliubov data and the state-dependent sums


@dataclass
class BogoliubovPair:
    """Per-``k`` data of ``zeta = A chi + B conj(chi)`` used by the sums.

    ``P = A conj(B) e^{2 i k0 tau0}`` is phase free; ``B2 = |B|^2``;
    ``cos_coef = V'(tau0)/(4 k0^3) - 2 Im P`` multiplies ``cos(2 k0 (tau - tau0))``
    in the derivative sum.
    """

    P: np.ndarray
    B2: np.ndarray
    cos_coef: np.ndarray
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None

    @classmethod
    def from_coefficients(cls, A, B, k0, tau0, Vp0):
        P = A * np.conj(B) * np.exp(2j * k0 * tau0)
        return cls(P, np.abs(B) ** 2, Vp0 / (4 * k0**3) - 2 * P.imag, A, B)

    @classmethod
    def from_state(cls, spec: StateSpec, k, init: InitialData, params: Params,
                   bump_mask=None):
        """Closed form in terms of ``rho``, ``rho'`` and ``1 - 2 k0 Phi``.

        ``B = chi0 (i rho' - d0/(2 rho))`` and
        ``A = conj(chi0) ((1 + 2 k0 Phi)/(2 rho) - i rho')``; in particular
        ``Im P = -rho rho'`` exactly, so ``cos_coef`` is the derivative
        regularity integrand.
        """
        k = np.asarray(k, float)
        k0 = _k0(k, init.w0sq)
        rho, rp, _, d0 = _state_arrays(spec, k, init.w0sq, bump_mask)
        Phi = rho * rho
        s_plus = (1.0 + 2.0 * k0 * Phi) / (2.0 * rho)
        s_minus = d0 / (2.0 * rho)
        P = (-(s_plus * s_minus + rp * rp) - 1j * rp * (s_plus - s_minus)) / (2.0 * k0)
        B2 = (rp * rp + s_minus * s_minus) / (2.0 * k0)
        Vp0 = potential_slope_initial(init, params)
        cos_coef = 2.0 * rho * rp + Vp0 / (4.0 * k0**3)
        return cls(P, B2, cos_coef)


def bogoliubov_from_projection(spec: StateSpec, k, init: InitialData, params: Params,
                               bump_mask=None, tol=1e-10):
    """Generic route: project the initial data on the conformal-vacuum modes."""
    from .modes import conformal_vacuum_initial, state_initial_values
    k = np.asarray(k, float)
    k0 = _k0(k, init.w0sq)
    z0, zp0 = state_initial_values(spec, k, bump_mask)
    c0, cp0 = conformal_vacuum_initial(k0, init.tau0)
    A, B = bogoliubov_coefficients(z0, zp0, c0, cp0, tol=tol)
    return BogoliubovPair.from_coefficients(A, B, k0, init.tau0,
                                            potential_slope_initial(init, params))


@dataclass
class QsResult:
    Q_s: np.ndarray
    Q_s_d: np.ndarray
    integral: KIntegral
    integral_d: KIntegral


def q_s_integrands(pair: BogoliubovPair, modes: ModeTable):
    """Integrands of ``Q_s`` and ``Q_s^d`` on the ``(tau, k)`` mesh.

    ``Q_s``: ``2|B|^2|chi|^2 + 2 Re(A conj(B) chi^2)``.
    ``Q_s^d``: ``2|B|^2 d|chi|^2 + 2 Re(A conj(B) 2 chi chi') + V'(tau0) cos(theta)/(4 k0^3)``,
    regrouped so the oscillating ``cos`` and ``sin`` pieces carry coefficients
    that decay at large ``k``.
    """
    al, be, k0 = modes.alpha, modes.beta, modes.k0
    rot = modes.rotor
    P, B2 = pair.P, pair.B2
    chi2 = 1.0 / (2 * k0) + modes.modulus_excess()
    qs = 2 * B2 * chi2 + (P * (al * al * rot + 2 * al * be + be * be * np.conj(rot))).real / k0
    osc = (1j * P * ((al * al - 1.0) * rot - be * be * np.conj(rot))).real
    qsd = (2 * B2 * modes.modulus_derivative() + 2 * osc
           + rot.real * pair.cos_coef - 2 * P.real * rot.imag)
    return qs, qsd


def q_s_pair(pair: BogoliubovPair, modes: ModeTable, kgrid: KGrid, strict=False) -> QsResult:
    """``Q_s`` and ``Q_s^d`` on the modes' time grid."""
    qs, qsd = q_s_integrands(pair, modes)
    I = k_integral(kgrid, qs, strict=strict)
    Id = k_integral(kgrid, qsd, strict=strict)
    return QsResult(I.value, Id.value, I, Id)


# ---------------------------------------------------------------------------
# energy density


def local_energy_terms(init: InitialData, params: Params, scalars=None):
    """Curvature and renormalization terms added to the mode integral.

    ``G00 = -3 H^2`` in flat FLRW; ``I00`` is half of ``two_I00``.
    """
    sc = scalars or InitialScalars.build(init, params)
    H, R = sc.H, sc.R
    xs = params.xi - 1.0 / 6.0
    return (-H**4 / (960 * np.pi**2) + xs * xs * 3 * H * H * R / (8 * np.pi**2)
            + params.betaT1 * params.m**4 - params.betaT2 * params.m**2 * (-3 * H * H)
            + params.betaT34 * 0.5 * sc.two_I00)


def _breakpoints(spec, init, params):
    w = max(init.w0, init.a0 / params.lambda_scale)
    pts = {0.0, w, 10 * w, 100 * w}
    if spec.bump is not None:
        pts |= {spec.bump.p1, spec.bump.p2}
    return sorted(pts)


def _quad_panels(f, pts, epsrel=1e-12):
    """Sum of per-panel quadratures; also returns the largest panel magnitude."""
    total, err, big = 0.0, 0.0, 0.0
    edges = list(pts) + [np.inf]
    with warnings.catch_warnings():
        # roundoff warnings are judged below through the error estimate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, e = integrate.quad(f, lo, hi, limit=400, epsabs=0.0, epsrel=epsrel)
            total += val
            err += e
            big = max(big, abs(val))
    return total, err, big


def energy_density_initial(spec: StateSpec, init: InitialData, params: Params,
                           epsrel=1e-12, return_parts=False):
    """``<rho>`` at ``tau0``: mode integral plus local terms.

    Raises
    ------
    TailNotConverged
        if the quadrature error estimate is not small against the value.
    """
    from .errors import TailNotConverged
    sc = InitialScalars.build(init, params)
    b = spec.bump

    def f(k):
        if k == 0.0:
            return 0.0
        mask = None if b is None else np.array([b.p1 <= k <= b.p2])
        return float(k * k * energy_integrand(spec, init, params, np.array([k]), mask,
                                              scalars=sc)[0][0])

    val, err, big = _quad_panels(f, _breakpoints(spec, init, params), epsrel)
    if not np.isfinite(val) or err > 1e-6 * big:
        raise TailNotConverged(f"energy integral error {err:.3e} vs value {val:.3e}")
    mode = val / (2 * np.pi**2 * sc.a**4)
    local = local_energy_terms(init, params, sc)
    if return_parts:
        # size of the contributions that cancel in the sum
        magnitude = big / (2 * np.pi**2 * sc.a**4) + abs(local)
        return mode + local, {"mode_integral": mode, "local": local, "quad_error": err,
                              "magnitude": magnitude}
    return mode + local


# ---------------------------------------------------------------------------
# constraint tuning


def constraint_target(init: InitialData, params: Params):
    """Energy density that satisfies the initial Friedmann constraint."""
    return 3.0 / (8 * np.pi * params.G) * (init.H0**2 - params.Lambda / 3.0)


def constraint_residual(spec, init: InitialData, params: Params, rho=None, magnitude=None):
    """Relative residual of ``H0^2 = (8 pi G/3) rho + Lambda/3``.

    The denominator is the largest of ``H0^2``, ``(8 pi G/3)|rho|``,
    ``|Lambda|/3`` and ``(8 pi G/3)`` times the magnitude of the terms that
    make up ``rho``; the last one keeps the ratio meaningful when the
    target is zero.
    """
    if rho is None or magnitude is None:
        rho, parts = energy_density_initial(spec, init, params, return_parts=True)
        magnitude = parts["magnitude"]
    k8 = 8 * np.pi * params.G / 3.0
    num = abs(init.H0**2 - k8 * rho - params.Lambda / 3.0)
    den = max(init.H0**2, k8 * abs(rho), abs(params.Lambda) / 3.0, k8 * magnitude, 1e-300)
    return num / den


@dataclass
class TuningReport:
    C: float
    p1: float
    p2: float
    rho_untuned: float
    rho_tuned: float
    target: float
    residual: float
    quadratic: tuple = field(default=())


def bump_coefficients(spec: StateSpec, init: InitialData, params: Params, p1, p2):
    """Linear and quadratic coefficients of ``rho(C) - rho(0)`` for a bump on ``[p1, p2]``.

    ``a2 = (1/(8 pi^2 a^4)) (1/p1^2 - 1/p2^2)`` and
    ``a1 = (s/(2 pi^2 a^4)) int_{p1}^{p2} k^{-1/2} (rho' + (6 xi - 1) a H rho) dk``
    with the unbumped ``rho'``.
    """
    base = spec.with_bump(None)
    sc = InitialScalars.build(init, params)

    def g(k):
        kk = np.array([k])
        rho = np.sqrt(base.Phi(kk))[0]
        rp = base.real_derivative(kk)[0]
        return k**-0.5 * (rp + params.six_xi_minus_one * sc.a * sc.H * rho)

    # log substitution keeps the wide panels well resolved
    val = integrate.quad(lambda u: g(np.exp(u)) * np.exp(u), np.log(p1), np.log(p2),
                         limit=400, epsabs=0.0, epsrel=1e-13)[0]
    a1 = spec.s * val / (2 * np.pi**2 * sc.a**4)
    a2 = (1.0 / p1**2 - 1.0 / p2**2) / (8 * np.pi**2 * sc.a**4)
    return a1, a2


def tune_state_to_constraint(spec: StateSpec, init: InitialData, params: Params,
                             tol=1e-10, p1=None, max_doublings=16, return_report=False):
    """Add a bump ``s C k^{-5/2}`` on ``[p1, p2]`` to ``Re zeta'`` so the constraint holds.

    The energy density is exactly quadratic in ``C``.  ``p1`` defaults to
    ``10 w0``; ``p2`` is doubled from ``2 p1`` until the quadratic has a
    real root, and the root of smallest magnitude is taken.  The result is
    re-evaluated by full quadrature and polished by a bracketed root search
    when needed.

    Raises
    ------
    ConstraintUnreachable
        when no ``p2`` up to ``2^max_doublings p1`` admits a real root.
    """
    from scipy.optimize import brentq
    base = spec.with_bump(None)
    rho0, parts0 = energy_density_initial(base, init, params, return_parts=True)
    target = constraint_target(init, params)
    res0 = constraint_residual(base, init, params, rho0, parts0["magnitude"])
    if res0 <= tol:
        out = spec
        rep = TuningReport(0.0, np.nan, np.nan, rho0, rho0, target, res0)
        return (out, rep) if return_report else out
    p1 = 10.0 * init.w0 if p1 is None else p1
    for j in range(1, max_doublings + 1):
        p2 = p1 * 2.0**j
        a1, a2 = bump_coefficients(base, init, params, p1, p2)
        c0 = rho0 - target
        disc = a1 * a1 - 4 * a2 * c0
        if disc < 0:
            continue
        sq = np.sqrt(disc)
        # numerically stable pair of roots
        qq = -0.5 * (a1 + np.copysign(sq, a1 if a1 != 0 else 1.0))
        roots = [qq / a2, c0 / qq if qq != 0 else -qq / a2]
        C = min(roots, key=abs)
        tuned = base.with_bump(Bump(float(C), p1, p2))
        res = constraint_residual(tuned, init, params)
        if res > tol:
            def h(c):
                return energy_density_initial(base.with_bump(Bump(c, p1, p2)), init, params) - target
            lo, hi = C - 0.01 * abs(C) - 1e-12, C + 0.01 * abs(C) + 1e-12
            if h(lo) * h(hi) < 0:
                C = brentq(h, lo, hi, xtol=1e-15 * abs(C), rtol=4e-16, maxiter=200)
                tuned = base.with_bump(Bump(float(C), p1, p2))
                res = constraint_residual(tuned, init, params)
        rho_t = energy_density_initial(tuned, init, params)
        rep = TuningReport(float(C), p1, p2, rho0, rho_t, target, res, (c0, a1, a2))
        return (tuned, rep) if return_report else tuned
    raise ConstraintUnreachable(
        f"no bump up to p2 = {p1 * 2.0**max_doublings:.3e} reaches rho = {target:.6e} "
        f"from {rho0:.6e}")
