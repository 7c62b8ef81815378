"""Wavenumber quadrature for the mode sums.

Nodes are log-spaced on panels ``[k_min, p1]``, ``[p1, p2]``, ``[p2, k_max]``
so that the edges of a state bump coincide with panel edges.  A node on a
shared edge is duplicated, one copy per panel, which lets the bump be
discontinuous there without spoiling the trapezoid rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TailNotConverged


@dataclass(frozen=True)
class KGrid:
    k: np.ndarray
    weights: np.ndarray
    coarse_weights: np.ndarray
    bump_mask: np.ndarray
    k_min: float
    k_max: float
    tail_nodes: np.ndarray  # indices of the last panel's nodes, increasing k

    @property
    def size(self):
        return len(self.k)


@dataclass
class KIntegral:
    """Result of a ``(1/2 pi^2) int k^2 f dk`` evaluation (arrays over tau)."""

    value: np.ndarray
    quad_error: np.ndarray
    tail: np.ndarray
    tail_exponent: np.ndarray


def _panel(lo, hi, n):
    u = np.linspace(np.log(lo), np.log(hi), n)
    k = np.exp(u)
    k[0], k[-1] = lo, hi
    du = u[1] - u[0]
    w = np.full(n, du)
    w[[0, -1]] = 0.5 * du
    # every-other-node trapezoid on the same panel
    wc = np.zeros(n)
    wc[::2] = 2 * du
    wc[[0, -1]] = du
    return k, w * k, wc * k


def make_kgrid(w0, k_min_factor=1e-3, k_max=1000.0, k_nodes=128, p1=None, p2=None):
    """Build the wavenumber grid.

    Parameters
    ----------
    w0 : float
        Initial mass scale ``sqrt(w0sq)``.
    k_nodes : int
        Approximate total node count, shared between panels in proportion to
        their logarithmic length (each panel gets an odd count, at least 5).
    p1, p2 : float, optional
        Bump edges; the upper end is raised to ``2 p2`` if needed.
    """
    k_min = k_min_factor * w0
    if not (0 < k_min < k_max):
        raise ConfigError("need 0 < k_min < k_max")
    edges = [k_min]
    if p1 is not None and p2 is not None:
        if not (k_min < p1 < p2):
            raise ConfigError("bump edges must satisfy k_min < p1 < p2")
        edges += [p1, p2]
        k_max = max(k_max, 2.0 * p2)
    edges.append(k_max)
    logs = np.diff(np.log(edges))
    counts = np.maximum(5, np.round(k_nodes * logs / logs.sum()).astype(int))
    counts = counts + (counts % 2 == 0)
    ks, ws, wcs, mask, idx = [], [], [], [], []
    start = 0
    for i, (lo, hi, n) in enumerate(zip(edges[:-1], edges[1:], counts)):
        k, w, wc = _panel(lo, hi, n)
        ks.append(k)
        ws.append(w)
        wcs.append(wc)
        mask.append(np.full(n, p1 is not None and i == 1))
        idx = np.arange(start, start + n)
        start += n
    return KGrid(np.concatenate(ks), np.concatenate(ws), np.concatenate(wcs),
                 np.concatenate(mask), k_min, k_max, idx)


def _tail(kg: KGrid, g):
    """Power-law tail of ``int_{k_max}^inf g dk`` from the last panel's envelope."""
    idx = kg.tail_nodes
    kk = kg.k[idx]
    sel = kk >= kk[-1] / 10.0
    kk = kk[sel]
    gg = np.abs(g[..., idx][..., sel])
    # upper envelope from the right, so oscillation zeros do not bias the fit
    env = np.flip(np.maximum.accumulate(np.flip(gg, axis=-1), axis=-1), axis=-1)
    lk = np.log(kk)
    with np.errstate(divide="ignore"):
        le = np.log(env)
    finite = np.all(np.isfinite(le), axis=-1)
    le = np.where(np.isfinite(le), le, 0.0)
    A = np.vstack([lk, np.ones_like(lk)]).T
    coef = np.linalg.lstsq(A, np.moveaxis(le, -1, 0).reshape(len(lk), -1), rcond=None)[0]
    slope = coef[0].reshape(le.shape[:-1])
    slope = np.where(finite, slope, -np.inf)
    g_end = env[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(slope < -1, g_end * kk[-1] / (-slope - 1), np.inf)
    tail = np.where(g_end == 0, 0.0, tail)
    # rows that are still pre-asymptotic at k_max (tau very close to tau0)
    # get the bound g_end * k_max, i.e. k^-2 decay assumed beyond k_max
    tail = np.where(np.isinf(tail) & finite, g_end * kk[-1], tail)
    # sign-definite tails are corrected for; oscillating ones only reported
    tail_signed = np.sign(g[..., idx[-1]]) * tail
    definite = np.all(np.sign(g[..., idx][..., sel]) == np.sign(g[..., idx[-1]])[..., None], axis=-1)
    return tail, slope, np.where(definite & np.isfinite(tail), tail_signed, 0.0)


def k_integral(kg: KGrid, f, strict=False, rel_tail_limit=0.1):
    """``(1/2 pi^2) int_0^inf k^2 f(k) dk`` from node values ``f[..., j]``.

    The piece below ``k_min`` is approximated by ``f(k_min) k_min^3 / 3``.

    Raises
    ------
    TailNotConverged
        with ``strict`` set, if the fitted decay is not integrable or the
        tail exceeds ``rel_tail_limit`` of the value somewhere.
    """
    f = np.asarray(f)
    g = kg.k**2 * f
    val = g @ kg.weights
    coarse = g @ kg.coarse_weights
    val = val + f[..., 0] * kg.k_min**3 / 3.0
    coarse = coarse + f[..., 0] * kg.k_min**3 / 3.0
    tail, slope, corr = _tail(kg, g)
    val = val + corr
    pref = 1.0 / (2.0 * np.pi**2)
    res = KIntegral(pref * val, pref * np.abs(val - corr - coarse) / 3.0, pref * tail, slope)
    if strict:
        scale = np.maximum(np.abs(res.value), np.max(np.abs(res.value)))
        bad = ~np.isfinite(res.tail) | (res.tail > rel_tail_limit * scale + 1e-300)
        if np.any(bad):
            raise TailNotConverged(
                f"mode-sum tail not under control (fitted exponent {np.min(slope):.2f}); "
                "raise k_max")
    return res
