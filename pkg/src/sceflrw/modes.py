"""Temporal mode functions of the scalar field.

Conformal-vacuum modes ``chi_k`` solve ``chi'' + (k0^2 + V) chi = 0`` with
positive-frequency data at ``tau0``.  The physical state's modes ``zeta_k``
are fixed by their initial modulus and energy and are expressed through
Bogoliubov coefficients, ``zeta = A chi + B conj(chi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from . import parallel
from .errors import (
    ConfigError,
    EnergyBelowHeisenbergBound,
    NormalizationViolation,
    TruncationBoundTooLarge,
)
from .geometry import (
    InitialData,
    Params,
    TimeGrid,
    interaction_propagate,
    potential_slope_initial,
    solve_linear_second_order,
)


@dataclass(frozen=True)
class ModeParams:
    k: float
    k0: float

    def __post_init__(self):
        if not self.k0 > 0:
            raise ConfigError("initial frequency k0 must be positive")

    @classmethod
    def from_k(cls, k, w0sq):
        return cls(float(k), float(np.sqrt(k * k + w0sq)))


@dataclass
class ModeSolution:
    chi: np.ndarray
    chip: np.ndarray

    def wronskian_defect(self):
        """``max |chi' conj(chi) - chi conj(chi)' - i|``."""
        w = self.chip * np.conj(self.chi) - self.chi * np.conj(self.chip)
        return float(np.max(np.abs(w - 1j)))


def conformal_vacuum_initial(k0, tau0):
    """Positive-frequency data ``(e^{i k0 tau0}, i k0 e^{i k0 tau0}) / sqrt(2 k0)``."""
    k0 = np.asarray(k0, dtype=float)
    u = np.exp(1j * k0 * tau0) / np.sqrt(2.0 * k0)
    return u, 1j * k0 * u


# ---------------------------------------------------------------------------
# single-wavenumber solvers


def dyson_tail_bound(order, x, k0):
    """Bound on ``sum_{n > order} |chi^n|`` with ``x = (tau - tau0) ||V|| / k0``."""
    x = np.asarray(x, dtype=float)
    return np.exp(x) * special.gammainc(order + 1, x) / np.sqrt(2.0 * k0)


def dyson_term_bound(n, x, k0):
    return x**n / (special.factorial(n) * np.sqrt(2.0 * k0))


def _cumsimpson(y, t):
    # scipy's cumulative Simpson rule is real-only
    return (integrate.cumulative_simpson(y.real, x=t, initial=0.0)
            + 1j * integrate.cumulative_simpson(y.imag, x=t, initial=0.0))


def solve_mode_dyson(mp: ModeParams, V, grid: TimeGrid, order=None, tol=1e-8,
                     max_order=80, return_terms=False):
    """Sum the Dyson series for the conformal-vacuum mode.

    Each term is the retarded convolution of the previous one with
    ``-sin(k0 (tau - eta)) V(eta) / k0``, evaluated with cumulative Simpson
    sums of the cosine and sine projections.

    Parameters
    ----------
    order : int, optional
        Truncation order.  If omitted the smallest order whose analytic tail
        bound at ``tau1`` is below ``tol`` is used.
    tol : float
        Largest admissible tail bound.

    Returns
    -------
    ModeSolution, float
        The partial sum and the tail bound at ``tau1``; with
        ``return_terms`` a list of the individual terms is appended.
    """
    V = np.asarray(V, dtype=float)
    k0 = mp.k0
    t = grid.offsets
    x_end = t[-1] * np.max(np.abs(V)) / k0
    if order is None:
        order = 1
        while dyson_tail_bound(order, x_end, k0) > tol and order < max_order:
            order += 1
    if order < 1:
        raise ValueError("Dyson order must be at least 1")
    bound = float(dyson_tail_bound(order, x_end, k0))
    if bound > tol:
        raise TruncationBoundTooLarge(
            f"tail bound {bound:.3e} exceeds {tol:.1e} at order {order}; "
            "raise the order or shrink the interval")
    phase0 = np.exp(1j * k0 * grid.tau0)
    cs, sn = np.cos(k0 * t), np.sin(k0 * t)
    term = phase0 * np.exp(1j * k0 * t) / np.sqrt(2 * k0)
    dterm = 1j * k0 * term
    chi, chip = term.copy(), dterm.copy()
    terms = [term]
    for _ in range(order):
        src = V * term
        C = _cumsimpson(cs * src, t)
        S = _cumsimpson(sn * src, t)
        term = -(sn * C - cs * S) / k0
        dterm = -(cs * C + sn * S)
        chi += term
        chip += dterm
        terms.append(term)
    sol = ModeSolution(chi, chip)
    if return_terms:
        return sol, bound, terms
    return sol, bound


def solve_mode_ode(mp: ModeParams, V, grid: TimeGrid, method="interaction"):
    """Integrate the mode equation directly from conformal-vacuum data.

    Uses :func:`geometry.solve_linear_second_order` with ``k = k0`` and
    ``W = V``.  The default interaction-picture propagator conserves the
    Wronskian to rounding.
    """
    chi0, chip0 = conformal_vacuum_initial(mp.k0, grid.tau0)
    chi, chip = solve_linear_second_order(V, 0.0, mp.k0, complex(chi0), complex(chip0),
                                          grid, method=method)
    return ModeSolution(chi, chip)


def ode_error_estimate(mp: ModeParams, V, grid: TimeGrid, method="interaction", order=2):
    """Step-doubling estimate of the sup error of :func:`solve_mode_ode`.

    The solution on every other node is compared with the full-resolution
    one; the difference is scaled by ``1 / (2^order - 1)``.
    """
    n = grid.n if grid.n % 2 == 1 else grid.n - 1
    fine_grid = grid.truncated(n)
    coarse = TimeGrid(grid.tau0, fine_grid.tau0 + fine_grid.h * (n - 1), (n - 1) // 2 + 1)
    V = np.asarray(V)[:n]
    fine = solve_mode_ode(mp, V, fine_grid, method)
    crs = solve_mode_ode(mp, V[::2], coarse, method)
    return float(np.max(np.abs(fine.chi[::2] - crs.chi)) / (2**order - 1))


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class Bump:
    C: float
    p1: float
    p2: float

    def __post_init__(self):
        if not (0 < self.p1 < self.p2):
            raise ConfigError(f"bump needs 0 < p1 < p2, got p1={self.p1}, p2={self.p2}")


@dataclass(frozen=True)
class StateSpec:
    """Initial data of the state's modes as functions of ``k``.

    ``Phi(k) = |zeta(tau0)|^2`` and ``E(k) = |zeta'(tau0)|^2``.  When
    ``E_excess`` is supplied it returns ``E - 1/(4 Phi)`` directly, which
    avoids cancellation for near-minimal states.  ``d_Phi`` optionally
    returns ``1 - 2 k Phi`` in a cancellation-free form.
    """

    Phi: Callable
    E: Callable
    s: int = 1
    bump: Optional[Bump] = None
    E_excess: Optional[Callable] = None
    d_Phi: Optional[Callable] = None
    family: str = "custom"

    def __post_init__(self):
        if self.s not in (-1, 1):
            raise ConfigError("sign s must be +1 or -1")

    def with_bump(self, bump):
        return StateSpec(self.Phi, self.E, self.s, bump, self.E_excess, self.d_Phi, self.family)

    def excess(self, k):
        """``E - 1/(4 Phi)``; raises if negative beyond rounding."""
        k = np.asarray(k, dtype=float)
        if self.E_excess is not None:
            ex = np.asarray(self.E_excess(k), dtype=float)
        else:
            Phi = np.asarray(self.Phi(k), dtype=float)
            E = np.asarray(self.E(k), dtype=float)
            ex = E - 0.25 / Phi
            slack = 1e-12 * np.abs(E)
            if np.any(ex < -slack):
                i = int(np.argmin(ex + slack))
                kk = np.atleast_1d(k)[i] if np.ndim(k) else float(k)
                raise EnergyBelowHeisenbergBound(
                    f"E < 1/(4 Phi) at k = {kk:.6g}")
            ex = np.maximum(ex, 0.0)
        if np.any(ex < 0):
            raise EnergyBelowHeisenbergBound("E < 1/(4 Phi)")
        return ex

    def bump_profile(self, k):
        """``s C k^{-5/2}`` on ``[p1, p2]`` and zero elsewhere."""
        k = np.asarray(k, dtype=float)
        if self.bump is None:
            return np.zeros_like(k)
        b = self.bump
        inside = (k >= b.p1) & (k <= b.p2)
        return np.where(inside, self.s * b.C * k ** -2.5, 0.0)

    def real_derivative(self, k, bump_mask=None):
        """``Re zeta'(tau0)`` including the bump.

        ``bump_mask`` overrides the interval test (used where a node sits
        exactly on a bump edge and belongs to one panel only).
        """
        base = self.s * np.sqrt(self.excess(k))
        if self.bump is None:
            return base
        if bump_mask is None:
            return base + self.bump_profile(k)
        k = np.asarray(k, dtype=float)
        return base + np.where(bump_mask, self.s * self.bump.C * k ** -2.5, 0.0)

    def one_minus_2kPhi(self, k):
        if self.d_Phi is not None:
            return np.asarray(self.d_Phi(k), dtype=float)
        return 1.0 - 2.0 * np.asarray(k, float) * np.asarray(self.Phi(k), float)


def vacuum_like_state(w0sq, s=1):
    """``Phi = 1/(2 k0)``, ``E = k0/2``: the conformal vacuum at ``tau0``."""
    k0 = lambda k: np.sqrt(np.asarray(k, float) ** 2 + w0sq)
    return StateSpec(
        Phi=lambda k: 0.5 / k0(k),
        E=lambda k: 0.5 * k0(k),
        s=s,
        E_excess=lambda k: np.zeros_like(np.asarray(k, float)),
        d_Phi=lambda k: w0sq / (k0(k) * (k0(k) + np.asarray(k, float))),
        family="vacuum",
    )


def adiabatic_state(init: InitialData, params: Params):
    """Vacuum modulus with the derivative matched to the initial potential slope.

    ``Phi = 1/(2 k0)`` and ``Re zeta' = -V'(tau0) / (8 k0^3 sqrt(Phi))`` so
    that ``d|zeta|^2/dtau`` equals the derivative of the local subtraction
    term at ``tau0``.  Reduces to :func:`vacuum_like_state` when
    ``V'(tau0) = 0``.
    """
    w0sq = init.w0sq
    Vp0 = potential_slope_initial(init, params)
    s = -1 if Vp0 > 0 else 1
    k0 = lambda k: np.sqrt(np.asarray(k, float) ** 2 + w0sq)

    def rho_p(k):
        kk = k0(k)
        return -Vp0 / (8.0 * kk**3 * np.sqrt(0.5 / kk))

    return StateSpec(
        Phi=lambda k: 0.5 / k0(k),
        E=lambda k: 0.5 * k0(k) + rho_p(k) ** 2,
        s=s,
        E_excess=lambda k: rho_p(k) ** 2,
        d_Phi=lambda k: w0sq / (k0(k) * (k0(k) + np.asarray(k, float))),
        family="adiabatic",
    )


def _loglog_interp(kt, vt):
    kt = np.asarray(kt, float)
    vt = np.asarray(vt, float)
    if np.any(kt <= 0) or np.any(vt <= 0) or np.any(np.diff(kt) <= 0):
        raise ConfigError("tabulated state needs increasing positive k and positive values")
    lk, lv = np.log(kt), np.log(vt)
    lo_slope = (lv[1] - lv[0]) / (lk[1] - lk[0])
    hi_slope = (lv[-1] - lv[-2]) / (lk[-1] - lk[-2])

    def f(k):
        x = np.log(np.asarray(k, float))
        y = np.interp(x, lk, lv)
        # power-law continuation outside the table
        y = np.where(x < lk[0], lv[0] + lo_slope * (x - lk[0]), y)
        y = np.where(x > lk[-1], lv[-1] + hi_slope * (x - lk[-1]), y)
        return np.exp(y)

    return f


def tabulated_state(k_Phi, Phi_vals, k_E, E_vals, s=1):
    """State from two tables, interpolated linearly in ``log k``/``log value``."""
    return StateSpec(Phi=_loglog_interp(k_Phi, Phi_vals), E=_loglog_interp(k_E, E_vals),
                     s=s, family="tabulated")


def load_table(path):
    """Two-column text file ``k value`` (``#`` comments allowed)."""
    try:
        data = np.loadtxt(path, comments="#", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read table {path}: {exc}") from exc
    if data.shape[1] != 2 or data.shape[0] < 2:
        raise ConfigError(f"{path}: expected at least two rows of 'k value'")
    return data[:, 0], data[:, 1]


def state_initial_values(spec: StateSpec, k, bump_mask=None):
    """``zeta(tau0) = sqrt(Phi)`` and ``zeta'(tau0) = Re + i / (2 sqrt(Phi))``.

    The phase convention puts ``zeta(tau0)`` on the positive real axis.
    """
    k = np.asarray(k, dtype=float)
    Phi = np.asarray(spec.Phi(k), dtype=float)
    if np.any(Phi <= 0):
        raise ConfigError("Phi must be positive")
    rho = np.sqrt(Phi)
    return rho + 0j, spec.real_derivative(k, bump_mask) + 0.5j / rho


def bogoliubov_coefficients(zeta0, zetap0, chi0, chip0, tol=1e-10):
    """Coefficients with ``zeta = A chi + B conj(chi)``.

    Projecting with the Wronskian ``W[f, g] = f' g - f g'`` and
    ``W[chi, conj chi] = i`` gives ``A = -i W[zeta, conj chi]`` and
    ``B = i W[zeta, chi]``.

    Raises
    ------
    NormalizationViolation
        if ``|A|^2 - |B|^2`` deviates from one by more than ``tol``.
    """
    A = -1j * (zetap0 * np.conj(chi0) - zeta0 * np.conj(chip0))
    B = 1j * (zetap0 * chi0 - zeta0 * chip0)
    norm = np.abs(A) ** 2 - np.abs(B) ** 2
    dev = np.max(np.abs(np.atleast_1d(norm) - 1.0))
    if dev > tol:
        raise NormalizationViolation(f"|A|^2 - |B|^2 deviates from 1 by {dev:.3e}")
    return A, B


# ---------------------------------------------------------------------------
# mode tables on a wavenumber grid


@dataclass
class ModeTable:
    """Interaction-picture data for many wavenumbers on one time grid.

    ``chi = e^{i k0 tau0} (alpha e^{i k0 t} + beta e^{-i k0 t}) / sqrt(2 k0)``
    with ``t = tau - tau0``; arrays have shape ``(n_tau, n_k)``.
    """

    k: np.ndarray
    k0: np.ndarray
    grid: TimeGrid
    alpha: np.ndarray
    beta: np.ndarray
    first_q: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def theta(self):
        """``2 k0 (tau - tau0)``."""
        if "theta" not in self._cache:
            self._cache["theta"] = 2.0 * np.outer(self.grid.offsets, self.k0)
        return self._cache["theta"]

    @property
    def rotor(self):
        if "rotor" not in self._cache:
            self._cache["rotor"] = np.exp(1j * self.theta)
        return self._cache["rotor"]

    def chi(self):
        half = np.exp(0.5j * self.theta)
        g = np.exp(1j * self.k0 * self.grid.tau0)
        return g * (self.alpha * half + self.beta * np.conj(half)) / np.sqrt(2 * self.k0)

    def chip(self):
        half = np.exp(0.5j * self.theta)
        g = np.exp(1j * self.k0 * self.grid.tau0)
        return 1j * self.k0 * g * (self.alpha * half - self.beta * np.conj(half)) / np.sqrt(2 * self.k0)

    def modulus_excess(self):
        """``|chi|^2 - 1/(2 k0)`` without cancellation."""
        ab = self.alpha * np.conj(self.beta) * self.rotor
        return (np.abs(self.beta) ** 2 + ab.real) / self.k0

    def modulus_derivative(self):
        """``d|chi|^2 / dtau``."""
        return -2.0 * (self.alpha * np.conj(self.beta) * self.rotor).imag

    def beyond_first_order(self):
        """Parts of ``|chi|^2`` and its derivative beyond first order in ``V``.

        The first-order Bogoliubov amplitude is ``beta_1 = -i first_q``, with
        ``first_q`` the exact cell-wise oscillatory integral used by the
        propagator, so the split is consistent cell by cell.
        """
        beta1 = -1j * self.first_q
        cross = (self.alpha * np.conj(self.beta) - np.conj(beta1)) * self.rotor
        r = (np.abs(self.beta) ** 2 + cross.real) / self.k0
        rd = -2.0 * cross.imag
        return r, rd

    def wronskian_defect(self):
        """Max deviation of ``|alpha|^2 - |beta|^2`` from one (equals the Wronskian defect)."""
        return float(np.max(np.abs(np.abs(self.alpha) ** 2 - np.abs(self.beta) ** 2 - 1.0)))


def solve_modes(k, w0sq, V, grid: TimeGrid, threads=None) -> ModeTable:
    """Propagate conformal-vacuum modes for every ``k`` (parallel over ``k``)."""
    k = np.asarray(k, dtype=float)
    k0 = np.sqrt(k * k + w0sq)
    V = np.asarray(V, dtype=float)

    def work(sl):
        sol = interaction_propagate(V, k0[sl], grid)
        return sol.alpha, sol.beta, sol.first_q

    alpha, beta, first_q = parallel.map_chunks(work, len(k), threads, axis=1)
    return ModeTable(k, k0, grid, alpha, beta, first_q)
