import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughkit.gaussian import (
    ConvergenceError,
    RngSpec,
    fbm_covariance,
    finallemma_check,
    gamma,
    hyp2f1,
    hyp2f1_series,
    increasing_violations,
    increment_covariance,
    increment_covariance_matrix,
    kernel_covariance,
    kernel_dt,
    kernel_K,
    rgamma,
    sample_bm,
    sample_fbm,
    wick_fourth_moment,
)

mpmath.mp.dps = 40

times = st.floats(0.0, 1.0)
hurst = st.floats(0.05, 0.95)


def _mp_f(a, b, c, z):
    return float(mpmath.hyp2f1(a, b, c, z))


# --- covariances ----------------------------------------------------------


def test_fbm_covariance_examples():
    assert fbm_covariance(0.3, 0.8, 0.5) == pytest.approx(0.3, abs=1e-15)
    for H in (0.1, 0.4, 0.9):
        assert fbm_covariance(1.0, 1.0, H) == 1.0
    expected = 0.5 * (0.75**0.8 + 0.25**0.8 - 0.5**0.8)
    assert fbm_covariance(0.25, 0.75, 0.4) == pytest.approx(expected, rel=1e-15)
    with pytest.raises(ValueError):
        fbm_covariance(0.2, 0.3, 1.0)


def test_increment_covariance_examples():
    assert increment_covariance(0.2, 0.7, 0.2, 0.7, 0.3) == pytest.approx(0.5**0.6, rel=1e-14)
    assert increment_covariance(0.0, 0.3, 0.6, 0.9, 0.35) <= 0.0
    val = increment_covariance(0.0, 0.5, 0.5, 1.0, 0.4)
    assert val == pytest.approx(0.5 * (1.0 - 2.0 ** (1.0 - 0.8)), rel=1e-14)
    assert val < 0


@given(s=times, t=times, s2=times, t2=times, H=hurst)
def test_increment_covariance_identity(s, t, s2, t2, H):
    lhs = increment_covariance(s, t, s2, t2, H)
    rhs = (
        fbm_covariance(t, t2, H) - fbm_covariance(t, s2, H) - fbm_covariance(s, t2, H) + fbm_covariance(s, s2, H)
    )
    assert abs(lhs - rhs) < 1e-12


@pytest.mark.parametrize("H", [0.3, 0.5, 0.8])
def test_cholesky_reproduces_covariance(H):
    from roughkit.gaussian import _cholesky_factor

    g = np.linspace(0, 1, 2**10 + 1)
    C = increment_covariance_matrix(g, H)
    L = _cholesky_factor(tuple(g.tolist()), H)
    assert np.max(np.abs(L @ L.T - C)) < 1e-10


# --- samplers ---------------------------------------------------------------


def test_bm_sampler_examples():
    g = np.linspace(0, 1, 9)
    a = sample_bm(g, 2, RngSpec(5, 3))
    b = sample_bm(g, 2, RngSpec(5, 3))
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[0] == 0)
    assert not np.array_equal(a.values, sample_bm(g, 2, RngSpec(5, 4)).values)
    with pytest.raises(ValueError):
        sample_bm([0.1, 0.5], 1, RngSpec(0))
    with pytest.raises(ValueError):
        RngSpec(-1)
    assert RngSpec(7, 2).header() == "seed=7,stream=2"


def test_bm_variance_band():
    M = 10**4
    g = np.array([0.0, 0.5, 1.0])
    ends = np.array([sample_bm(g, 1, RngSpec(11, r)).values[-1, 0] for r in range(M)])
    assert abs(np.mean(ends**2) - 1.0) < 4.0 / np.sqrt(2 * M)


def _fbm_pairs(H, M, method, seed):
    g = np.linspace(0, 1, 9)
    vals = np.array([sample_fbm(g, 1, H, RngSpec(seed, r), method).values[[4, 8], 0] for r in range(M)])
    return vals[:, 0], vals[:, 1]


@pytest.mark.parametrize("method", ["cholesky", "davies_harte"])
def test_fbm_covariance_band(method):
    M, H = 10**4, 0.4
    a, b = _fbm_pairs(H, M, method, 21)
    prod = a * b
    se = prod.std(ddof=1) / np.sqrt(M)
    assert abs(prod.mean() - fbm_covariance(0.5, 1.0, H)) < 4 * se


def test_fbm_methods_agree_in_moments():
    M, H = 10**4, 0.3
    a1, b1 = _fbm_pairs(H, M, "cholesky", 1)
    a2, b2 = _fbm_pairs(H, M, "davies_harte", 2)
    for u, v in ((a1, a2), (b1, b2), (a1 * b1, a2 * b2), (b1**2, b2**2)):
        se = np.sqrt(u.var(ddof=1) / M + v.var(ddof=1) / M)
        assert abs(u.mean() - v.mean()) < 4 * se


def test_fbm_half_is_bm_law():
    g = np.linspace(0, 1, 17)
    C = increment_covariance_matrix(g, 0.5)
    np.testing.assert_allclose(C, np.diag(np.diff(g)), atol=1e-15)


def test_fbm_sampler_errors():
    with pytest.raises(ValueError):
        sample_fbm([0.0, 0.1, 1.0], 1, 0.3, RngSpec(0), "davies_harte")
    with pytest.raises(ValueError):
        sample_fbm([0.0, 1.0], 1, 0.3, RngSpec(0), "hosking")
    g = np.linspace(0, 1, 33)
    a = sample_fbm(g, 2, 0.3, RngSpec(9, 1), "davies_harte")
    assert np.array_equal(a.values, sample_fbm(g, 2, 0.3, RngSpec(9, 1), "davies_harte").values)


# --- special functions ------------------------------------------------------


@pytest.mark.parametrize("x", [0.05, 0.2, 0.5, 0.9, 1.0, 1.2, 1.5, 2.5, 3.7, -0.3, -1.2, -2.5])
def test_gamma_against_math(x):
    assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-12)
    assert rgamma(x) == pytest.approx(1.0 / math.gamma(x), rel=1e-12)


def test_gamma_poles():
    assert rgamma(0.0) == 0.0 and rgamma(-3.0) == 0.0
    with pytest.raises(ValueError):
        gamma(-2.0)


def test_hyp2f1_trivial():
    assert hyp2f1(0.0, 0.7, 1.3, -5.0) == 1.0
    assert hyp2f1(0.3, 0.7, 1.3, 0.0) == 1.0
    with pytest.raises(ValueError):
        hyp2f1(0.3, 0.7, -2.0, 0.1)
    with pytest.raises(ValueError):
        hyp2f1(0.3, 0.7, 1.3, 1.5)
    with pytest.raises(ValueError):
        hyp2f1(0.8, 0.7, 1.3, 1.0)


def test_hyp2f1_at_one():
    a, b, c = 0.3, -0.4, 1.4
    gauss = hyp2f1(a, b, c, 1.0)
    oracle = mpmath.hyp2f1(a, b, c, mpmath.mpf(1) - mpmath.mpf("1e-8"))
    assert gauss == pytest.approx(float(oracle), rel=1e-6)
    assert gauss == pytest.approx(float(mpmath.gamma(c) * mpmath.gamma(c - a - b) / (mpmath.gamma(c - a) * mpmath.gamma(c - b))), rel=1e-12)
    assert hyp2f1(a, b, c, 1 - 1e-8) == pytest.approx(float(oracle), rel=1e-10)


@pytest.mark.parametrize("H", [0.26, 0.3, 0.4, 0.45, 0.6, 0.75, 0.9])
@pytest.mark.parametrize("z", [-1e4, -300.0, -7.0, -1.5, -1.0, -0.75, -0.5, -0.2, 0.2, 0.5, 0.7, 0.95, 0.999])
def test_hyp2f1_kernel_parameters(H, z):
    a, b, c = H - 0.5, 0.5 - H, H + 0.5
    assert hyp2f1(a, b, c, z) == pytest.approx(_mp_f(a, b, c, z), rel=1e-10)


@given(
    a=st.floats(-2.5, 2.5),
    b=st.floats(-2.5, 2.5),
    c=st.floats(0.1, 4.0),
    z=st.floats(-50.0, 0.99),
)
def test_hyp2f1_random(a, b, c, z):
    expected = _mp_f(a, b, c, z)
    got = hyp2f1(a, b, c, z)
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-12 * max(1.0, abs(expected)))


@given(z=st.floats(-0.999, -0.5), a=st.floats(-1.5, 1.5), b=st.floats(-1.5, 1.5), c=st.floats(0.2, 3.0))
def test_pfaff_matches_series(z, a, b, c):
    direct = hyp2f1_series(a, b, c, z)
    pfaff = (1.0 - z) ** (-a) * hyp2f1_series(a, c - b, c, z / (z - 1.0))
    assert pfaff == pytest.approx(direct, rel=1e-10, abs=1e-13)


def test_series_convergence_error():
    with pytest.raises(ConvergenceError) as info:
        hyp2f1_series(0.5, 0.5, 1.0, 0.99999, max_terms=50)
    assert "terms=50" in str(info.value)


# --- Volterra kernel --------------------------------------------------------


def test_kernel_half_is_one():
    for t, s in ((0.8, 0.3), (1.0, 0.01), (0.5, 0.49)):
        assert kernel_K(t, s, 0.5) == pytest.approx(1.0, abs=1e-15)


def test_kernel_domain():
    with pytest.raises(ValueError):
        kernel_K(0.3, 0.3, 0.4)
    with pytest.raises(ValueError):
        kernel_K(0.3, 0.0, 0.4)
    with pytest.raises(ValueError):
        kernel_dt(0.3, 0.5, 0.4)


@pytest.mark.parametrize("H,t,s", [(0.4, 0.8, 0.3), (0.3, 0.6, 0.2), (0.7, 0.9, 0.5), (0.45, 1.0, 0.05)])
def test_kernel_derivative_finite_difference(H, t, s):
    h = 1e-6
    fd = (kernel_K(t + h, s, H) - kernel_K(t - h, s, H)) / (2 * h)
    assert abs(kernel_dt(t, s, H) - fd) / abs(fd) < 1e-5


@pytest.mark.parametrize("H", [0.3, 0.4, 0.7])
@pytest.mark.parametrize("s,t", [(0.25, 0.75), (0.5, 1.0), (0.6, 0.6)])
def test_kernel_reproduces_covariance(H, s, t):
    assert abs(kernel_covariance(s, t, H) - fbm_covariance(s, t, H)) < 1e-3


# --- Wick and the covariance lemmas -----------------------------------------


def test_wick_examples():
    assert wick_fourth_moment(*([2.0] * 6)) == 12.0
    assert wick_fourth_moment(0.3, 0, 0, 0, 0, 0.7) == pytest.approx(0.21)


def test_wick_monte_carlo():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4))
    C = A @ A.T / 4
    X = rng.multivariate_normal(np.zeros(4), C, size=10**6)
    prod = X.prod(axis=1)
    formula = wick_fourth_moment(C[0, 1], C[0, 2], C[0, 3], C[1, 2], C[1, 3], C[2, 3])
    assert abs(prod.mean() - formula) < 4 * prod.std(ddof=1) / np.sqrt(len(prod))


def test_finallemma_examples():
    assert finallemma_check([0.0, 1.0], 0.4, 3.0) == pytest.approx((1.0, 1.0))
    D = np.linspace(0, 1, 17)
    lhs, rhs = finallemma_check(D, 0.5, 3.0)
    assert lhs == pytest.approx(np.sum(np.diff(D) ** 2), rel=1e-12)
    for bad in ((0.2, 6.0), (0.4, 2.0), (0.4, 4.5)):
        with pytest.raises(ValueError):
            finallemma_check(D, *bad)


def test_finallemma_ratio_h04():
    ratios = []
    for n in (4, 8, 16, 32, 64, 128, 256):
        lhs, rhs = finallemma_check(np.linspace(0, 1, n + 1), 0.4, 3.0)
        ratios.append(lhs / rhs)
    assert np.all(np.diff(ratios) <= 1e-12)


@pytest.mark.parametrize("H", [0.3, 0.4, 0.5, 0.7])
def test_increasing_outer_bounds(H):
    v = increasing_violations(H)
    assert v["nested_lower"] == 0
    assert v["nested_upper"] == 0
    if H <= 0.5:
        assert v["disjoint_lower"] == 0 and v["disjoint_upper"] == 0
    if H >= 0.5:
        assert v["nested_middle"] == 0


@pytest.mark.parametrize("H", [0.3, 0.4])
def test_nested_middle_reverses_below_half(H):
    """Disjoint increments are negatively correlated, so the middle inequality flips."""
    s, t = 0.5, 1.0
    lat = s + (t - s) * np.arange(1, 21) / 20
    for u in lat:
        for v in lat[lat > u]:
            assert increment_covariance(s, u, s, t, H) <= increment_covariance(s, u, s, v, H) + 1e-15
