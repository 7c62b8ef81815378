"""Randomized invariants checked with hypothesis."""
import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sceflrw.cli import parse_config_text
from sceflrw.geometry import Params, TimeGrid, derive_initial_conditions
from sceflrw.logkernel import t_apply, t_inverse_discrete
from sceflrw.modes import (
    StateSpec,
    bogoliubov_coefficients,
    conformal_vacuum_initial,
    solve_modes,
    state_initial_values,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
samples = arrays(np.float64, st.integers(4, 40), elements=finite)
FAST = settings(max_examples=40, deadline=None)


@FAST
@given(samples, samples, finite)
def test_forward_operator_is_linear(f, g, c):
    n = min(len(f), len(g))
    f, g = f[:n], g[:n]
    x = np.linspace(0, 1, n)
    lhs = t_apply(x, f + c * g)
    rhs = t_apply(x, f) + c * t_apply(x, g)
    scale = 1 + np.max(np.abs(t_apply(x, np.abs(f) + abs(c) * np.abs(g))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


@FAST
@given(samples, st.data())
def test_forward_operator_is_causal(f, data):
    n = len(f)
    cut = data.draw(st.integers(1, n - 1))
    g = f.copy()
    g[cut:] = data.draw(arrays(np.float64, n - cut, elements=finite))
    x = np.linspace(0, 2, n)
    assert np.array_equal(t_apply(x, f)[:cut], t_apply(x, g)[:cut])


@FAST
@given(samples, st.floats(1e-3, 1.0))
def test_discrete_inverse_roundtrip(f, frac):
    # the inverse grows like exp(0.56 r) on long intervals, so keep r <= 2
    h = 2.0 * frac / (len(f) - 1)
    x = h * np.arange(len(f))
    back = t_inverse_discrete(t_apply(x, f), h)
    assert np.max(np.abs(back - (f - f[0]))) <= 1e-8 * (1 + np.max(np.abs(f)))


@FAST
@given(st.floats(0.05, 5.0), st.floats(0.0, 3.0), st.sampled_from([-1, 1]),
       st.floats(0.01, 50.0), st.floats(-5, 5))
def test_bogoliubov_roundtrip(Phi, extra, s, k0, tau0):
    E = 0.25 / Phi + extra
    spec = StateSpec(Phi=lambda k: np.full_like(k, Phi), E=lambda k: np.full_like(k, E), s=s)
    z, zp = state_initial_values(spec, np.array([1.0]))
    c, cp = conformal_vacuum_initial(k0, tau0)
    A, B = bogoliubov_coefficients(z, zp, c, cp)
    assert abs(A * c + B * np.conj(c) - z)[0] <= 1e-10 * (1 + abs(z[0]))
    assert abs(A * cp + B * np.conj(cp) - zp)[0] <= 1e-10 * (1 + abs(zp[0]))
    norm = abs(A[0]) ** 2
    assert abs(norm - abs(B[0]) ** 2 - 1) <= 1e-10 * norm


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, 33, elements=st.floats(-0.5, 0.5)),
       arrays(np.float64, 3, elements=st.floats(0.01, 20.0)))
def test_mode_propagation_keeps_normalization(V, k):
    V[0] = 0.0
    g = TimeGrid(0.0, 1.0, 33)
    table = solve_modes(np.sort(k), 1.0, V, g)
    assert table.wronskian_defect() < 1e-12


@FAST
@given(st.floats(0.1, 10), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(0.1, 3), st.floats(-0.4, 0.1))
def test_initial_condition_arithmetic(a0, a0p, a0pp, a0ppp, m, xi):
    p = Params(m=m, xi=xi)
    try:
        init = derive_initial_conditions(0.0, a0, a0p, a0pp, a0ppp, p)
    except ValueError:
        # frequency not positive for this draw
        assert m * m * a0 * a0 + (6 * xi - 1) * a0pp / a0 <= 0
        return
    assert init.X0 == a0pp / a0
    assert np.isclose(init.R0, 6 * a0pp / a0**3, rtol=1e-14)
    assert np.isclose(init.X0p, a0ppp / a0 - a0pp * a0p / a0**2, rtol=1e-12, atol=1e-14)
    assert init.w0sq > 0


@FAST
@given(st.floats(0.01, 100), st.floats(-1, 1), st.integers(33, 4097),
       st.sampled_from(["adiabatic", "vacuum"]))
def test_config_values_roundtrip(m, xi, n, family):
    text = (f"init.a0 = 1\ninit.a0p = 0\ninit.a0pp = 0\ninit.a0ppp = 0\n"
            f"params.m = {m!r}\nparams.xi = {xi!r}\ngrid.tau1 = 1\ngrid.n = {n}\n"
            f"state.family = {family}  # trailing comment\n")
    cfg = parse_config_text(text)
    assert cfg["params.m"] == m and cfg["params.xi"] == xi
    assert cfg["grid.n"] == n and cfg["state.family"] == family
