import os

import numpy as np
import pytest
from scipy import integrate

from sceflrw.errors import InconsistentDerivative, NonzeroInitialValue
from sceflrw.logkernel import (
    EIGHT_PI2,
    EULER_GAMMA,
    POLE,
    build_kernel_table,
    cache_path,
    forward_slope_matrix,
    kernel_K,
    kernel_K1,
    laplace_target,
    laplace_transform_K,
    t_apply,
    t_inverse_apply,
    t_inverse_discrete,
    unboundedness_demo,
)


@pytest.fixture(scope="module")
def table_r1():
    return build_kernel_table(1.0, 129)


def test_forward_of_zero():
    x = np.linspace(0, 1, 33)
    assert np.all(t_apply(x, np.zeros(33)) == 0)
    assert np.all(t_apply(x, fp=np.zeros(33)) == 0)


def _sine_oracle(x):
    # -(1/8 pi^2) int_0^x sin(y) log(x - y) dy with the log weight handled by QUADPACK
    val = integrate.quad(lambda y: np.sin(x - y), 0, x, weight="alg-loga", wvar=(0, 0),
                         epsabs=1e-15, epsrel=1e-14)[0]
    return -val / EIGHT_PI2


@pytest.mark.parametrize("use_derivative", [True, False])
def test_forward_sine_against_quadrature(use_derivative):
    x = np.linspace(0.0, 1.0, 2049)
    tau = 2.0 + x
    Tf = t_apply(tau, fp=np.sin(x)) if use_derivative else t_apply(tau, 1 - np.cos(x))
    assert abs(Tf[-1] - _sine_oracle(1.0)) < 1e-7


def test_forward_inconsistent_derivative():
    x = np.linspace(0, 1, 65)
    with pytest.raises(InconsistentDerivative):
        t_apply(x, np.sin(x), np.cos(x) + 0.5)


def test_forward_nonuniform_grid_matches_uniform_limit():
    u = np.linspace(0, 1, 4097)
    x = u + 0.3 * u * (1 - u)
    xu = np.linspace(0, 1, 4097)
    a = t_apply(x, np.sin(2 * x))[-1]
    b = t_apply(xu, np.sin(2 * xu))[-1]
    assert abs(a - b) < 1e-8


def test_slope_matrix_reproduces_forward(rng):
    n, h = 50, 0.02
    tau = h * np.arange(n)
    f = rng.standard_normal(n).cumsum()
    M = forward_slope_matrix(n, h)
    assert np.allclose(M @ (np.diff(f) / h), t_apply(tau, f)[1:], rtol=0, atol=1e-14)
    assert np.all(np.triu(M, 1) == 0)


def test_discrete_inverse_roundtrip():
    n, h = 257, 1 / 256
    x = h * np.arange(n)
    f = np.exp(x) * np.sin(3 * x) + x**2
    g = t_inverse_discrete(t_apply(x, f), h)
    assert np.max(np.abs(g - (f - f[0]))) < 1e-12
    with pytest.raises(NonzeroInitialValue):
        t_inverse_discrete(np.ones(n), h)


def test_unboundedness_pointwise_limit():
    x1, x2 = 0.3, 0.7
    _, x, f, Tf = unboundedness_demo(1e-6, x1, x2, return_profile=True)
    assert np.max(np.abs(f)) == pytest.approx(1.0, abs=1e-12)
    for xx in (0.4, 0.5, 0.6):
        i = int(np.argmin(np.abs(x - xx)))
        assert abs(Tf[i] - (-np.log(x[i] - x1) / EIGHT_PI2)) < 1e-3


def test_unboundedness_demo_validation():
    with pytest.raises(ValueError):
        unboundedness_demo(0.1, 0.3, 0.7)
    with pytest.raises(ValueError):
        unboundedness_demo(1e-3, 0.7, 0.3)


def test_kernel_methods_agree():
    for x in (0.01, 0.3, 1.0, 5.0):
        a = kernel_K(x, method="fourier")
        b = kernel_K(x, method="branch_cut")
        assert abs(a - b) <= 1e-7 * abs(b)


def test_kernel_remainder_decays_like_inverse_x():
    xs = np.geomspace(1.0, 100.0, 12)
    rem = np.array([kernel_K(x, method="branch_cut") - EIGHT_PI2 * np.exp(POLE * x - EULER_GAMMA)
                    for x in xs])
    c = np.max(np.abs(rem) * xs)
    assert np.all(np.abs(rem) <= c / xs * (1 + 1e-12))
    # the product |rem| x does not grow over two decades
    assert (np.abs(rem) * xs)[-1] <= 2 * (np.abs(rem) * xs)[0]


def test_kernel_local_integrability():
    a, b = kernel_K1(0.01), kernel_K1(0.1)
    assert np.isfinite(a) and 0 < a < b


def test_kernel_positive():
    assert all(kernel_K(x) > 0 for x in (1e-4, 1e-2, 0.5, 3.0))


def test_laplace_identity_at_two():
    val = laplace_transform_K(2.0)
    assert abs(val / laplace_target(2.0) - 1) <= 1e-3


def test_inverse_of_zero_and_linearity(table_r1):
    h = np.sin(np.linspace(0, 1, 129)) ** 2
    assert np.all(t_inverse_apply(np.zeros(129), table_r1) == 0)
    a = t_inverse_apply(2 * h, table_r1)
    b = 2 * t_inverse_apply(h, table_r1)
    assert np.max(np.abs(a - b)) <= 4 * np.finfo(float).eps * np.max(np.abs(b))


def test_inverse_roundtrip_sine(table_r1):
    x = np.linspace(0, 1, 129)
    f = np.sin(x)
    g = t_inverse_apply(t_apply(x, f), table_r1)
    assert np.max(np.abs(g - f)) <= 1e-3 * np.max(np.abs(f))


def test_inverse_rejects_nonzero_start(table_r1):
    with pytest.raises(NonzeroInitialValue):
        t_inverse_apply(np.ones(129), table_r1)


def test_inverse_sup_bound(table_r1, rng):
    h = rng.standard_normal(129)
    h[0] = 0
    g = t_inverse_apply(h, table_r1)
    assert np.max(np.abs(g)) <= table_r1.C_inf * np.max(np.abs(h)) * (1 + 1e-9)


def test_causality(table_r1, rng):
    x = np.linspace(0, 1, 129)
    f = np.sin(3 * x)
    g = f.copy()
    g[80:] += rng.standard_normal(49)
    assert np.array_equal(t_apply(x, f)[:80], t_apply(x, g)[:80])
    h1, h2 = t_apply(x, f), t_apply(x, g)
    assert np.array_equal(t_inverse_apply(h1, table_r1)[:80], t_inverse_apply(h2, table_r1)[:80])
    assert np.array_equal(t_inverse_discrete(h1, x[1])[:80], t_inverse_discrete(h2, x[1])[:80])


def test_translation_covariance():
    x = np.linspace(0, 1, 129)
    f = np.cos(2 * x)
    a = t_apply(x, f)
    b = t_apply(x + 3.25, f)
    assert np.max(np.abs(a - b)) < 1e-14


def test_cache_roundtrip_bit_exact(tmp_path):
    d = str(tmp_path)
    t1 = build_kernel_table(0.5, 17, cache_dir=d)
    path = cache_path(d, 0.5, 17, 1e-10)
    assert os.path.exists(path)
    before = open(path, "rb").read()
    t2 = build_kernel_table(0.5, 17, cache_dir=d)
    assert open(path, "rb").read() == before
    for name in ("xs", "Ks", "weights"):
        assert np.array_equal(getattr(t1, name), getattr(t2, name))
    assert t1.C_inf == t2.C_inf


def test_kernel_inverse_agrees_with_discrete_inverse(table_r1):
    x = np.linspace(0, 1, 129)
    f = np.sin(2 * x) + x**2
    h = t_apply(x, f)
    a = t_inverse_apply(h, table_r1)
    b = t_inverse_discrete(h, x[1])
    assert np.max(np.abs(a - b)) <= 1e-3 * np.max(np.abs(f))
