import numpy as np
import pytest

from sceflrw.geometry import Params, TimeGrid, build_trajectory, derive_initial_conditions
from sceflrw.kgrid import make_kgrid
from sceflrw.logkernel import EIGHT_PI2
from sceflrw.expectation import (
    first_order_kernel,
    first_order_kernel_oracle,
    first_order_pair,
    lipschitz_estimate,
    q_0_pair,
    q_c_pair,
    q_f_pair,
)
from sceflrw.modes import solve_modes


def _trajectory(Xp_fn, n=129, tau1=0.5, m=1.0, a0p=0.0, a0pp=0.05, **kw):
    p = Params(m=m, xi=0.0, **kw)
    init = derive_initial_conditions(0.0, 1.0, a0p, a0pp, 0.0, p)
    g = TimeGrid(0.0, tau1, n)
    return build_trajectory(init.X0p + Xp_fn(g.offsets), init, g, p), init, p


def test_static_space_has_no_vacuum_sum():
    tr, init, _ = _trajectory(lambda t: 0 * t, a0pp=0.0)
    kg = make_kgrid(init.w0, k_nodes=64)
    modes = solve_modes(kg.k, init.w0sq, tr.V, tr.grid)
    qc = q_c_pair(tr, modes, kg, init.w0)
    assert np.all(qc.Q_c == 0.0) and np.all(qc.Q_c_d == 0.0)


@pytest.mark.parametrize("x", [0.0, 1e-3, 0.05, 0.4, 1.0, 3.0, 12.0])
@pytest.mark.parametrize("w0", [0.5, 1.0, 2.0])
def test_first_order_kernel_matches_cosine_integral_form(x, w0):
    g, _ = first_order_kernel(np.array([x]), w0)
    assert g[0] == pytest.approx(first_order_kernel_oracle(x, w0), abs=1e-6)


def test_first_order_kernel_derivative_by_differences():
    w0 = 1.3
    x = np.linspace(0.01, 5, 200)
    h = 1e-5
    gp = first_order_kernel(x, w0)[1]
    fd = (first_order_kernel(x + h, w0)[0] - first_order_kernel(x - h, w0)[0]) / (2 * h)
    assert np.max(np.abs(gp - fd)) < 1e-8


def test_first_order_pair_is_zero_for_zero_slope():
    g = TimeGrid(0.0, 1.0, 33)
    lf, lfd = first_order_pair(np.zeros(33), g, 1.0)
    assert np.all(lf == 0) and np.all(lfd == 0)


def test_first_order_pair_for_constant_slope():
    # V' = c: lf = c int_0^t g / 8 pi^2, and the V'' convolution lfd vanishes
    c, w0 = 0.7, 1.0
    g = TimeGrid(0.0, 1.0, 257)
    lf, lfd = first_order_pair(np.full(257, c), g, w0)
    xs = np.linspace(0, 1, 20001)
    ker = first_order_kernel(xs, w0)[0]
    ref = c * np.trapezoid(ker, xs) / EIGHT_PI2
    assert lf[-1] == pytest.approx(ref, rel=1e-5)
    # product integration is exact for linear data, so only rounding remains
    assert np.max(np.abs(lfd)) < 1e-14


def test_local_part_static_closed_form():
    m = 2.0
    tr, init, p = _trajectory(lambda t: 0 * t, a0pp=0.0, m=m)
    Q0, Q0d = q_0_pair(tr, init, p)
    ref = m * m * np.log(m) / EIGHT_PI2 - m * m / (2 * EIGHT_PI2)
    assert np.allclose(Q0, ref, rtol=1e-14)
    assert np.all(Q0d == 0)


def test_local_part_derivative_is_consistent():
    tr, init, p = _trajectory(lambda t: 0.3 * np.sin(4 * t), n=1025, a0p=0.2,
                              alpha1=0.1, alpha2=-0.05)
    Q0, Q0d = q_0_pair(tr, init, p)
    h = tr.grid.h
    fd = (Q0[2:] - Q0[:-2]) / (2 * h)
    assert np.max(np.abs(fd - Q0d[1:-1])) < 1e-4 * np.max(np.abs(Q0d))


def test_remainder_is_second_order_in_potential():
    tr, init, _ = _trajectory(lambda t: 0 * t, a0pp=0.0)
    kg = make_kgrid(init.w0, k_nodes=64)
    V = 0.2 * np.sin(3 * tr.grid.offsets)
    r1 = solve_modes(kg.k, init.w0sq, V, tr.grid).beyond_first_order()[0]
    r2 = solve_modes(kg.k, init.w0sq, V / 2, tr.grid).beyond_first_order()[0]
    i = np.argmax(np.abs(r1[:, 10]))
    assert r1[i, 10] / r2[i, 10] == pytest.approx(4.0, rel=0.1)


def test_bookkeeping(minimal_solution):
    ev, _ = minimal_solution
    b, qc = ev.bundle, ev.qc
    Qf, Qfd = q_f_pair(qc)
    assert np.array_equal(Qf, b.Q_f) and np.array_equal(Qfd, b.Q_f_d)
    assert np.allclose(b.a2phi2, b.phi2 * ev.traj.a**2, rtol=1e-14, atol=1e-16)
    assert np.allclose(qc.Q_c, qc.first + qc.T_V + qc.remainder.value, rtol=0, atol=1e-16)


def test_derivative_matches_differences(minimal_solution):
    ev, _ = minimal_solution
    b = ev.bundle
    h = ev.traj.grid.h
    for val, der in ((b.Q_0, b.Q_0_d), (b.Q_s, b.Q_s_d), (b.Q_c, b.Q_c_d),
                     (b.a2phi2, b.d_a2phi2)):
        fd = (val[2:] - val[:-2]) / (2 * h)
        scale = max(np.max(np.abs(der)), 1e-12)
        assert np.max(np.abs(fd - der[1:-1])) < 1e-3 * scale


def test_lipschitz_estimate_values():
    assert lipschitz_estimate([0, 2], [0, 1], [0, 4], [0, 0]) == 0.25
    assert lipschitz_estimate([1.0], [2.0], [3.0], [3.0]) == 0.0


def test_measured_lipschitz_is_small():
    tr, init, p = _trajectory(lambda t: 0 * t, a0pp=0.0)
    kg = make_kgrid(init.w0, k_nodes=64)
    out = []
    for amp in (0.1, 0.12):
        tr2, _, _ = _trajectory(lambda t: amp * t, a0pp=0.0)
        modes = solve_modes(kg.k, init.w0sq, tr2.V, tr2.grid)
        out.append((q_f_pair(q_c_pair(tr2, modes, kg, init.w0))[0], tr2.V))
    L = lipschitz_estimate(out[0][0], out[1][0], out[0][1], out[1][1])
    # the regular remainder responds weakly to V on a short window
    assert 0 < L < 1
