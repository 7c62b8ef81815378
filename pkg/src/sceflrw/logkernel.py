"""Retarded log-kernel convolution and its inverse.

The forward operator is

    T[f](tau) = -(1 / 8 pi^2) int_{tau0}^{tau} f'(eta) log(tau - eta) d eta,

which is unbounded in the sup norm.  Its inverse on functions vanishing at
``tau0`` is a convolution with a positive, locally integrable kernel ``K``
whose Laplace transform is ``8 pi^2 / (gamma + log s)``.  ``K`` splits into
an exponentially growing pole term and a remainder that is available both
as a branch-cut integral (used for tables) and as a pair of Fourier
integrals (used as an independent check).
"""
from __future__ import annotations

import hashlib
import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import (
    InconsistentDerivative,
    NonzeroInitialValue,
    QuadratureNotConverged,
)

EULER_GAMMA = float(np.euler_gamma)
EIGHT_PI2 = 8.0 * np.pi**2
# residue location of 1 / (gamma + log s)
POLE = float(np.exp(-EULER_GAMMA))


# ---------------------------------------------------------------------------
# forward operator


def _log_moments(c, d):
    """Integrals of ``log(c + s)`` and ``s log(c + s)`` over ``|s| < d/2``.

    ``c`` is the distance from a cell midpoint to the evaluation point and
    ``d`` the cell width, with ``c >= d/2``.  The second moment is tiny for
    far cells and is summed as a series there to avoid cancellation.
    """
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    r = d / (2.0 * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp = (1 + r) * np.log1p(r)
        lm = np.where(r < 1, (1 - r) * np.log1p(-np.where(r < 1, r, 0.0)), 0.0)
        m0 = d * np.log(c) + c * (lp - lm) - d
    # s log(c+s) moment: c^2 [r - (1 - r^2) atanh r]
    m1 = np.empty_like(c)
    far = r <= 0.34
    rf = r[far]
    r2 = rf * rf
    acc = np.zeros_like(rf)
    term = rf * r2
    for n in range(1, 40):
        acc += 2.0 * term / (4 * n * n - 1)
        term = term * r2
    m1[far] = c[far] ** 2 * acc
    near = ~far
    rn = r[near]
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(rn < 1, (1 - rn * rn) * np.arctanh(np.where(rn < 1, rn, 0.0)), 0.0)
    m1[near] = c[near] ** 2 * (rn - corr)
    return m0, m1


def _check_derivative(tau, f, fp, rtol):
    fd = np.gradient(f, tau, edge_order=2)
    scale = max(np.max(np.abs(fp)), np.max(np.abs(fd)), 1e-300)
    err = np.max(np.abs(fd - fp))
    if err > rtol * scale:
        raise InconsistentDerivative(
            f"derivative samples disagree with finite differences of f "
            f"(max deviation {err:.3e}, scale {scale:.3e})")


def t_apply(tau, f=None, fp=None, *, derivative_rtol=0.05):
    """Apply the retarded log-kernel operator at every node.

    Parameters
    ----------
    tau : ndarray
        Increasing nodes; ``tau[0]`` is the origin.  Need not be uniform.
    f : ndarray, optional
        Samples of the function.  If ``fp`` is omitted, each cell uses the
        exact cell mean of ``f'`` plus a slope from the backward second
        difference (zero on the first cell), which keeps the result causal
        and second order without a ``log h`` factor.
    fp : ndarray, optional
        Samples of ``f'``.  Treated as piecewise linear; each cell against
        ``log`` is integrated in closed form.  When both are given they are
        cross-checked with a finite-difference test.
    derivative_rtol : float
        Relative sup-norm tolerance for that test.

    Returns
    -------
    ndarray
        ``T[f]`` at the nodes (zero at ``tau[0]``).
    """
    tau = np.asarray(tau, dtype=float)
    if fp is None and f is None:
        raise ValueError("need f or fp")
    if fp is not None and f is not None:
        _check_derivative(tau, np.asarray(f, float), np.asarray(fp, float), derivative_rtol)
    t = tau - tau[0]
    d = np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    if fp is None:
        f = np.asarray(f, dtype=float)
        mean = np.diff(f) / d
        slope = np.zeros_like(mean)
        slope[1:] = 2.0 * np.diff(mean) / (d[1:] + d[:-1])
    else:
        fp = np.asarray(fp, dtype=float)
        mean = 0.5 * (fp[1:] + fp[:-1])
        slope = (fp[1:] - fp[:-1]) / d
    n = len(t)
    out = np.zeros(n)
    for i in range(1, n):
        c = t[i] - mid[:i]
        m0, m1 = _log_moments(c, d[:i])
        # eta - mid = -s with s the offset in the log argument
        out[i] = np.sum(mean[:i] * m0 - slope[:i] * m1)
    return -out / EIGHT_PI2


# ---------------------------------------------------------------------------
# mollified double step


def _mollifier_table(npts=4001):
    s = np.linspace(-1.0, 1.0, npts)
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.where(np.abs(s) < 1, np.exp(-1.0 / (1.0 - s * s)), 0.0)
    cum = integrate.cumulative_simpson(bump, x=s, initial=0.0)
    norm, _ = integrate.quad(lambda t: np.exp(-1.0 / (1.0 - t * t)), -1, 1,
                             epsabs=0, epsrel=1e-13)
    return s, cum / cum[-1], norm


_MOLL = None


def smooth_step(y, eps):
    """Mollified Heaviside step of width ``eps`` and its derivative."""
    global _MOLL
    if _MOLL is None:
        _MOLL = _mollifier_table()
    s, cum, norm = _MOLL
    u = np.asarray(y, dtype=float) / eps
    step = np.interp(u, s, cum, left=0.0, right=1.0)
    inside = np.abs(u) < 1
    dens = np.zeros_like(u)
    ui = u[inside]
    dens[inside] = np.exp(-1.0 / (1.0 - ui * ui)) / norm
    return step, dens / eps


def _graded_nodes(r, centers, eps, coarse=400, inner=200, ratio=1.08):
    pts = [np.linspace(0.0, r, coarse + 1)]
    for c in centers:
        pts.append(c + eps * np.linspace(-1.0, 1.0, inner + 1))
        # geometric fan-out away from the transition layer
        off = eps * ratio ** np.arange(1, int(np.log(r / eps) / np.log(ratio)) + 2)
        off = off[off < r]
        pts.append(c + eps + off)
        pts.append(c - eps - off)
    x = np.concatenate(pts)
    x = np.unique(x[(x >= 0) & (x <= r)])
    # merge near-coincident nodes from overlapping families
    keep = np.concatenate([[True], np.diff(x) > 1e-3 * eps])
    return x[keep]


def unboundedness_demo(eps, x1=0.3, x2=0.7, r=1.0, return_profile=False):
    """Sup norm of ``T`` applied to a mollified indicator of ``[x1, x2]``.

    The input has sup norm one for every ``eps``, while the output grows
    like ``log(1/eps) / (8 pi^2)``.

    Returns
    -------
    float or (float, nodes, f, Tf)
    """
    if not (0 < x1 < x2 < r):
        raise ValueError("need 0 < x1 < x2 < r")
    if not eps < min(x1, x2 - x1) / 4:
        raise ValueError("eps too large for the step separation")
    x = _graded_nodes(r, (x1, x2), eps)
    s1, d1 = smooth_step(x - x1, eps)
    s2, d2 = smooth_step(x - x2, eps)
    f = s1 - s2
    Tf = t_apply(x, fp=d1 - d2)
    sup = float(np.max(np.abs(Tf)))
    if return_profile:
        return sup, x, f, Tf
    return sup


# ---------------------------------------------------------------------------
# kernel evaluation


def _quad(fun, a, b, tol, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(fun, a, b, epsabs=0.0, epsrel=tol, full_output=1, **kw)
    val, err, info = out[0], out[1], out[2]
    ier = out[3] if len(out) > 3 and isinstance(out[3], str) else None
    if not np.isfinite(val) or (err > max(100 * tol * abs(val), 1e-13)):
        raise QuadratureNotConverged(
            f"quadrature on [{a}, {b}] reached only {err:.2e} (value {val:.6e})"
            + (f": {ier}" if ier else ""))
    return val


def _cut_density(t):
    # branch-cut weight after u = e^t
    return 1.0 / ((EULER_GAMMA + t) ** 2 + np.pi**2)


def _split_points(x):
    lx = float(np.log(1.0 / x))
    return lx - 45.0, lx, lx + float(np.log(60.0))


def kernel_remainder_cut(x, tol=1e-10):
    """Non-pole part of ``K`` from its branch-cut integral."""
    lo, mid, hi = _split_points(x)
    f = lambda t: np.exp(t - x * np.exp(t)) * _cut_density(t)
    return EIGHT_PI2 * (_quad(f, lo, mid, tol, limit=400) + _quad(f, mid, hi, tol, limit=400))


def _arctan_tail(T):
    # int_T^inf dt / ((gamma + t)^2 + pi^2)
    return (0.5 * np.pi - np.arctan((EULER_GAMMA + T) / np.pi)) / np.pi


def kernel_K1(r, tol=1e-10, method="branch_cut"):
    """``int_0^r K(x) dx``; equal to ``int_0^r |K|`` since ``K > 0``."""
    if not r > 0:
        return 0.0
    pole = EIGHT_PI2 * np.expm1(POLE * r)
    if method == "fourier":
        return pole + _remainder_K1_fourier(r, tol)
    lo, mid, hi = _split_points(r)
    f = lambda t: -np.expm1(-r * np.exp(t)) * _cut_density(t)
    cut = _quad(f, lo, mid, tol, limit=400) + _quad(f, mid, hi, tol, limit=400) + _arctan_tail(hi)
    return pole + EIGHT_PI2 * cut


def _excess_exp(y):
    """exp(-y) - 1 + y, accurate for small y."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = y < 0.1
    ys = y[small]
    acc = np.zeros_like(ys)
    term = ys * ys / 2.0
    for n in range(2, 14):
        acc += term
        term = -term * ys / (n + 1)
    out[small] = acc
    out[~small] = y[~small] + np.expm1(-y[~small])
    return out


def _pole_K2(x):
    # 8 pi^2 e^gamma (e^{s x} - 1 - s x), s = e^{-gamma}
    y = POLE * x
    if y < 0.1:
        acc, term = 0.0, y * y / 2
        for n in range(2, 16):
            acc += term
            term *= y / (n + 1)
    else:
        acc = np.expm1(y) - y
    return EIGHT_PI2 * np.exp(EULER_GAMMA) * acc


def kernel_K2(x, tol=1e-10):
    """Second antiderivative ``int_0^x (x - y) K(y) dy``."""
    if not x > 0:
        return 0.0
    lo, mid, hi = _split_points(x)
    f = lambda t: _excess_exp(x * np.exp(t)) * np.exp(-t) * _cut_density(t)
    body = _quad(f, lo, mid, tol, limit=400) + _quad(f, mid, hi, tol, limit=400)
    # beyond hi the exponential is negligible: integrand x - e^{-t}
    g = lambda t: np.exp(-t) * _cut_density(t)
    tail = x * _arctan_tail(hi) - _quad(g, hi, hi + 60.0, tol, limit=200)
    return _pole_K2(x) + EIGHT_PI2 * (body + tail)


def _L(k):
    return EULER_GAMMA + np.log(k)


def _fourier_parts(x, tol, c=np.pi**2 / 4):
    """Cosine and sine integrals of the non-pole part at offset ``x``.

    On ``[1, inf)`` one integration by parts trades the slow ``1/log k``
    decay for ``1/(k log^3 k)``; the boundary terms are explicit.
    """
    def f_cos(k):
        if k <= 0:
            return 0.0
        lk = _L(k)
        return lk / (lk * lk + c)

    def f_sin(k):
        if k <= 0:
            return 0.0
        lk = _L(k)
        return 1.0 / (lk * lk + c)

    def d_cos(k):
        lk = _L(k)
        return (c - lk * lk) / (k * (lk * lk + c) ** 2)

    def d_sin(k):
        lk = _L(k)
        return -2.0 * lk / (k * (lk * lk + c) ** 2)

    ic = _quad(f_cos, 0.0, 1.0, tol, weight="cos", wvar=x, limit=400)
    ic += -np.sin(x) * f_cos(1.0) / x - _fourier_tail(d_cos, x, "sin", tol) / x
    js = _quad(f_sin, 0.0, 1.0, tol, weight="sin", wvar=x, limit=400)
    js += np.cos(x) * f_sin(1.0) / x + _fourier_tail(d_sin, x, "cos", tol) / x
    return ic, js


def _fourier_tail(fun, x, kind, tol):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(fun, 1.0, np.inf, weight=kind, wvar=x,
                                  limlst=400, limit=400, epsabs=tol * 1e-3)[:2]
    if not np.isfinite(val) or err > max(1e3 * tol * abs(val), 1e-3 * tol):
        raise QuadratureNotConverged(f"oscillatory tail at x={x}: error {err:.2e}")
    return val


def kernel_K(x, tol=1e-10, method="fourier"):
    """Inversion kernel ``K(x)`` for ``x > 0``.

    Parameters
    ----------
    method : {"fourier", "branch_cut"}
        ``"fourier"`` evaluates the non-pole part from the cosine/sine
        integrals of ``1 / (log k + gamma +- i pi/2)``; ``"branch_cut"``
        from the Laplace-type integral along the negative axis.  The two
        representations are independent and agree to quadrature accuracy.
    """
    if not x > 0:
        raise ValueError("kernel is evaluated at positive offsets only")
    pole = EIGHT_PI2 * np.exp(POLE * x - EULER_GAMMA)
    if method == "branch_cut":
        return pole + kernel_remainder_cut(x, tol)
    if method != "fourier":
        raise ValueError(f"unknown method {method!r}")
    ic, js = _fourier_parts(x, tol)
    return pole + 8.0 * np.pi * ic + 4.0 * np.pi**2 * js


def _remainder_K1_fourier(r, tol, c=np.pi**2 / 4):
    sc = np.sqrt(c)

    def a_head(k):
        if k <= 0:
            return 0.0
        lk = _L(k)
        return np.sin(k * r) / k * lk / (lk * lk + c)

    def b_head(k):
        if k <= 0:
            return 0.0
        lk = _L(k)
        return (1.0 - np.cos(k * r)) / k / (lk * lk + c)

    # tails: g(k) = L/(k(L^2+c)) against sin and 1/(k(L^2+c)) against cos,
    # each integrated by parts once
    ga = lambda k: _L(k) / (k * (_L(k) ** 2 + c))
    dga = lambda k: (c - _L(k) ** 2 - _L(k) * (_L(k) ** 2 + c)) / (k * k * (_L(k) ** 2 + c) ** 2)
    gb = lambda k: 1.0 / (k * (_L(k) ** 2 + c))
    dgb = lambda k: -(2 * _L(k) + _L(k) ** 2 + c) / (k * k * (_L(k) ** 2 + c) ** 2)
    a = _quad(a_head, 0.0, 1.0, tol, limit=800)
    a += np.cos(r) * ga(1.0) / r + _fourier_tail(dga, r, "cos", tol) / r
    b = _quad(b_head, 0.0, 1.0, tol, limit=800)
    # int_1^inf dk / (k (L^2 + c)) in closed form
    b += (0.5 * np.pi - np.arctan(EULER_GAMMA / sc)) / sc
    b -= -np.sin(r) * gb(1.0) / r - _fourier_tail(dgb, r, "sin", tol) / r
    return 8.0 * np.pi * a + 4.0 * np.pi**2 * b


def laplace_transform_K(s, x_max=200.0, tol=1e-10, method="branch_cut"):
    """Numeric ``int_0^inf e^{-s x} K(x) dx`` with the domain cut at ``x_max``.

    Integrates by parts against ``K1`` so that the integrable singularity
    at zero never has to be sampled (below ``x = 1e-3`` the branch-cut form
    of ``K1`` is used for either method); the remainder beyond ``x_max`` is
    estimated from the ``1/x`` decay of the non-pole part.
    """
    def K1(x):
        # the Fourier tails amplify quadrature error by 1/x near zero
        return kernel_K1(x, tol, method=method if x >= 1e-3 else "branch_cut")

    f = lambda x: np.exp(-s * x) * K1(x)
    pts = [p for p in (1e-3, 1e-2, 0.1, 1.0, 10.0) if p < x_max]
    val = s * _quad(f, 0.0, x_max, max(tol, 1e-9), points=pts, limit=400)
    val += np.exp(-s * x_max) * K1(x_max)
    # pole part is exact beyond x_max; remainder ~ c / x
    tail_pole = EIGHT_PI2 * np.exp(-EULER_GAMMA) * np.exp(-(s - POLE) * x_max) / (s - POLE)
    rem = kernel_K(x_max, tol, method="branch_cut") - EIGHT_PI2 * np.exp(POLE * x_max - EULER_GAMMA)
    tail_rem = rem * np.exp(-s * x_max) / s
    return val + tail_pole + tail_rem


def laplace_target(s):
    return EIGHT_PI2 / (EULER_GAMMA + np.log(s))


# ---------------------------------------------------------------------------
# tables and inverse operator


@dataclass(frozen=True)
class KernelTable:
    """Product-integration weights for ``T^{-1}`` on a uniform grid.

    ``weights[l]`` multiplies ``h(x_i - l*step)``; they are exact for
    piecewise-linear ``h`` given exact ``K``.  ``xs[l] = l * step`` and
    ``Ks[l] = K(xs[l])`` (``Ks[0] = inf``).  ``C_inf`` is ``int_0^r |K|``.
    """

    r: float
    n: int
    tol: float
    step: float
    xs: np.ndarray
    Ks: np.ndarray
    weights: np.ndarray
    C_inf: float


def _cut_weight(l, step, tol):
    # (1/step) int e^{-u (l-1) step} (1 - e^{-u step})^2 / u^2 / (L^2 + pi^2) du
    lo, mid, hi = _split_points(step)
    a = (l - 1) * step

    def f(t):
        u = np.exp(t)
        return np.exp(-u * a) * np.expm1(-u * step) ** 2 * np.exp(-t) * _cut_density(t)

    pts_hi = hi if l > 1 else hi + 40.0
    val = _quad(f, lo, mid, tol, limit=400) + _quad(f, mid, pts_hi, tol, limit=400)
    if l == 1:
        # remaining integrand tends to e^{-t} / (L^2 + pi^2)
        g = lambda t: np.exp(-t) * _cut_density(t)
        val += _quad(g, pts_hi, pts_hi + 60.0, tol, limit=200)
    return EIGHT_PI2 * val / step


def _pole_weight(l, step):
    return (EIGHT_PI2 * np.exp(EULER_GAMMA) * np.exp(POLE * l * step)
            * 4.0 * np.sinh(0.5 * POLE * step) ** 2 / step)


def kernel_weights(n, step, tol=1e-10):
    """Toeplitz product weights for ``n`` nodes with spacing ``step``."""
    w = np.empty(n)
    w[0] = kernel_K2(step, tol) / step
    for l in range(1, n):
        w[l] = _pole_weight(l, step) + _cut_weight(l, step, tol)
    return w


def build_kernel_table(r, n, tol=1e-10, cache_dir=None):
    """Precompute the inverse-kernel table on ``[0, r]`` with ``n`` nodes.

    With ``cache_dir`` set, a binary cache keyed by ``(r, n, tol)`` is read
    or written; a hit returns bit-identical arrays.
    """
    if cache_dir is not None:
        path = cache_path(cache_dir, r, n, tol)
        if os.path.exists(path):
            return load_kernel_table(path, r, n, tol)
    step = r / (n - 1)
    xs = step * np.arange(n)
    Ks = np.empty(n)
    Ks[0] = np.inf
    for l in range(1, n):
        Ks[l] = kernel_K(xs[l], tol, method="branch_cut")
    weights = kernel_weights(n, step, tol)
    table = KernelTable(float(r), int(n), float(tol), step, xs, Ks, weights,
                        float(kernel_K1(r, tol)))
    if cache_dir is not None:
        save_kernel_table(table, path)
    return table


_MAGIC = b"SCEKTAB1"


def _header(r, n, tol):
    return f"r={float(r).hex()} n={int(n)} tol={float(tol).hex()}\n".encode()


def cache_path(cache_dir, r, n, tol):
    key = hashlib.sha256(_header(r, n, tol)).hexdigest()[:16]
    return os.path.join(cache_dir, f"kernel_{key}.bin")


def save_kernel_table(table: KernelTable, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_header(table.r, table.n, table.tol))
        fh.write(struct.pack("<dd", table.step, table.C_inf))
        for arr in (table.xs, table.Ks, table.weights):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_kernel_table(path, r=None, n=None, tol=None) -> KernelTable:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a kernel table")
        header = fh.readline().decode()
        fields = dict(item.split("=") for item in header.split())
        r_f, n_f, tol_f = float.fromhex(fields["r"]), int(fields["n"]), float.fromhex(fields["tol"])
        if r is not None and _header(r, n, tol) != _header(r_f, n_f, tol_f):
            raise ValueError("kernel cache header does not match the request")
        step, C_inf = struct.unpack("<dd", fh.read(16))
        arrs = [np.frombuffer(fh.read(8 * n_f), dtype="<f8").astype(float) for _ in range(3)]
    return KernelTable(r_f, n_f, tol_f, step, arrs[0], arrs[1], arrs[2], C_inf)


def t_inverse_apply(h, table: KernelTable, step=None, rtol_zero=1e-12):
    """Retarded convolution ``int_0^x K(x - y) h(y) dy`` at the nodes.

    Parameters
    ----------
    h : ndarray
        Samples on a uniform grid with ``h[0] == 0``.
    table : KernelTable
        Must share the grid spacing and have at least ``len(h)`` entries.
    step : float, optional
        Spacing of ``h``'s grid, checked against the table.

    Raises
    ------
    NonzeroInitialValue
        if ``h[0]`` is not zero.
    """
    h = np.asarray(h, dtype=float)
    n = len(h)
    if n > table.n:
        raise ValueError(f"table has {table.n} nodes, input has {n}")
    if step is not None and abs(step - table.step) > 1e-12 * table.step:
        raise ValueError("grid spacing differs from the kernel table's")
    scale = np.max(np.abs(h)) if n else 0.0
    if abs(h[0]) > rtol_zero * scale:
        raise NonzeroInitialValue(f"h(tau0) = {h[0]:.3e} must vanish")
    w = table.weights
    out = np.zeros(n)
    for i in range(1, n):
        out[i] = np.dot(w[i::-1], h[:i + 1])
    return out


def forward_slope_matrix(n, step):
    """Matrix of :func:`t_apply` on a uniform grid, acting on cell slopes.

    Row ``i - 1`` maps ``u_j = (f_j - f_{j-1}) / step`` to ``T[f](tau_i)``.
    Lower triangular and Toeplitz apart from the first column, which
    carries no second-difference correction.
    """
    m = n - 1
    lag = np.arange(m)
    m0, m1 = _log_moments((lag + 0.5) * step, np.full(m, step))
    A = -m0 / EIGHT_PI2
    B = -m1 / EIGHT_PI2 / step
    L = lag[:, None] - lag[None, :]
    Lc = np.maximum(L, 0)
    M = np.where(L >= 0, A[Lc], 0.0)
    # cell k's slope (u_k - u_{k-1}) / step enters with -m1
    M -= np.where((L >= 0) & (lag[None, :] >= 1), B[Lc], 0.0)
    M += np.where(L >= 1, B[np.maximum(L - 1, 0)], 0.0)
    return M


def t_inverse_discrete(h, step, rtol_zero=1e-12):
    """Exact inverse of the discretized forward operator on a uniform grid.

    Returns ``g`` with ``g[0] = 0`` and ``t_apply(tau, g) == h`` up to
    rounding.  Unlike :func:`t_inverse_apply` it carries no quadrature error
    of its own, only that of the forward discretization.
    """
    from scipy.linalg import solve_triangular
    h = np.asarray(h, dtype=float)
    n = len(h)
    scale = np.max(np.abs(h)) if n else 0.0
    if abs(h[0]) > rtol_zero * scale:
        raise NonzeroInitialValue(f"h(tau0) = {h[0]:.3e} must vanish")
    M = forward_slope_matrix(n, step)
    slopes = solve_triangular(M, h[1:], lower=True)
    return np.concatenate([[0.0], step * np.cumsum(slopes)])


def c_inf(r, tol=1e-10):
    """Sup-norm bound of ``T^{-1}`` on ``[0, r]``."""
    return kernel_K1(r, tol)
