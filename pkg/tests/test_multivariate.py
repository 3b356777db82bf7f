import math

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import gammaln

from skewt.errors import DomainError
from skewt.harness import BIVARIATE_ALPHA_DIR, BIVARIATE_OMEGA
from skewt.inversion import init_regression
from skewt.multivariate import (
    MSTParams,
    alpha_to_delta,
    delta_to_alpha,
    feasibility_adjust,
    init_multivariate,
    mst_logpdf,
    mst_pdf,
    mst_sample,
    product_cdf_W,
    scale_split,
    solve_rho,
)
from skewt.univariate import STParams, st_pdf

OMEGA = np.array([[1.0, 0.5], [0.5, 1.0]])


def test_params_validation():
    with pytest.raises(DomainError):
        MSTParams(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2), 3.0)
    with pytest.raises(DomainError):
        MSTParams(np.zeros(2), np.array([[1.0, 0.2], [0.1, 1.0]]), np.zeros(2), 3.0)
    with pytest.raises(DomainError):
        MSTParams(np.zeros(2), OMEGA, np.zeros(3), 3.0)
    p = MSTParams(np.zeros(2), 4.0 * OMEGA, [1.0, 0.0], 3.0)
    np.testing.assert_allclose(p.omega, [2.0, 2.0])
    np.testing.assert_allclose(p.Omega_bar, OMEGA)
    omega, Obar = scale_split(4.0 * OMEGA)
    np.testing.assert_allclose(omega, [2.0, 2.0])
    np.testing.assert_allclose(Obar, OMEGA)


@pytest.mark.parametrize("nu", [1.0, 3.0, 10.0])
def test_density_at_origin(nu):
    p = MSTParams(np.zeros(2), np.eye(2), np.zeros(2), nu)
    ref = math.exp(gammaln((nu + 2) / 2) - gammaln(nu / 2)) / (nu * math.pi)
    assert mst_pdf(np.zeros(2), p) == pytest.approx(ref, rel=1e-12)


def test_density_normalizes():
    p = MSTParams(np.zeros(2), OMEGA, [1.0, 2.0], 3.0)
    # polar coordinates: the radial integral over (0, inf) is mapped to (0, 1)
    f = lambda t, th: mst_pdf(  # noqa: E731
        np.array([math.cos(th), math.sin(th)]) * t / (1 - t), p
    ) * t / (1 - t) ** 3
    total = integrate.dblquad(f, 0, 2 * math.pi, 0, 1, epsabs=1e-9, epsrel=1e-9)[0]
    assert total == pytest.approx(1.0, abs=1e-4)


def test_marginal_is_univariate_st():
    alpha = np.array([1.0, 2.0])
    p = MSTParams(np.zeros(2), OMEGA, alpha, 3.0)
    # the first marginal has slant delta_1 / sqrt(1 - delta_1^2)
    d1 = p.delta[0]
    lam1 = d1 / math.sqrt(1 - d1 * d1)
    for z1 in (-2.0, -0.5, 0.0, 0.7, 2.5):
        m = integrate.quad(lambda z2: mst_pdf(np.array([z1, z2]), p), -np.inf, np.inf, epsabs=1e-11)[0]
        assert m == pytest.approx(st_pdf(z1, STParams(0, 1, lam1, 3.0)), abs=1e-4)


def test_logpdf_with_regression():
    X = np.column_stack([np.ones(3), [0.0, 1.0, 2.0]])
    beta = np.array([[0.0, 1.0], [1.0, -1.0]])
    p = MSTParams(beta, OMEGA, [0.5, 0.5], 4.0)
    y = np.array([[0.0, 1.0], [1.0, 0.0], [2.5, -1.0]])
    got = mst_logpdf(y, p, X)
    for i in range(3):
        pi = MSTParams(X[i] @ beta, OMEGA, [0.5, 0.5], 4.0)
        assert got[i] == pytest.approx(float(mst_logpdf(y[i], pi)), rel=1e-13)


def test_sample_gaussian_covariance():
    p = MSTParams(np.array([1.0, -1.0]), np.array([[2.0, 0.6], [0.6, 1.0]]), np.zeros(2), math.inf)
    y = mst_sample(10**5, p, seed=1)
    S = np.cov(y.T)
    se = np.sqrt((p.Omega**2 + np.outer(np.diag(p.Omega), np.diag(p.Omega))) / y.shape[0])
    assert np.all(np.abs(S - p.Omega) <= 3 * se)
    np.testing.assert_array_equal(mst_sample(30, p, seed=5), mst_sample(30, p, seed=5))
    assert mst_sample(0, p).shape == (0, 2)


def test_sample_marginal_octiles():
    p = MSTParams(np.zeros(2), OMEGA, [1.0, 2.0], 3.0)
    y = mst_sample(10**5, p, seed=7)
    from skewt.univariate import st_quantile

    d1 = p.delta[0]
    marg = STParams(0, 1, d1 / math.sqrt(1 - d1 * d1), 3.0)
    probs = np.arange(1, 8) / 8
    theo = st_quantile(probs, marg)
    se = np.sqrt(probs * (1 - probs) / y.shape[0]) / st_pdf(theo, marg)
    assert np.all(np.abs(np.quantile(y[:, 0], probs) - theo) <= 4 * se)


def test_product_cdf_examples():
    assert product_cdf_W(0.0, 0.0, 3.0) == pytest.approx(0.5, abs=1e-10)
    # Gaussian orthant probability: P(W <= 0) = 1/2 - arcsin(rho)/pi, so 1/3 at rho = 1/2
    assert product_cdf_W(0.0, 0.5, math.inf) == pytest.approx(1 / 3, abs=1e-7)
    assert 1 - product_cdf_W(0.0, 0.5, math.inf) == pytest.approx(0.6667, abs=1e-4)
    for rho in (-0.8, -0.3, 0.2, 0.9):
        assert product_cdf_W(0.0, rho, math.inf) == pytest.approx(0.5 - math.asin(rho) / math.pi, abs=1e-7)
        # the sign of w = 0 is scale free, so the identity holds for every nu
        assert product_cdf_W(0.0, rho, 2.0) == pytest.approx(0.5 - math.asin(rho) / math.pi, abs=1e-7)


def test_product_cdf_monte_carlo_cauchy():
    # a bivariate t pair shares one chi-square divisor, so at rho = 0 the
    # components are uncorrelated but not independent
    rng = np.random.default_rng(3)
    hits = 0
    for _ in range(10):
        z = rng.standard_normal((10**6, 2)) / np.sqrt(rng.chisquare(1.0, (10**6, 1)))
        hits += int(np.sum(z[:, 0] * z[:, 1] <= 1.0))
    assert product_cdf_W(1.0, 0.0, 1.0) == pytest.approx(hits / 1e7, abs=3e-4)


def _upper_tail_polar(w, rho, nu):
    # P(Z1 Z2 > w), w > 0, for the bivariate t: in polar coordinates
    # z1 z2 = r^2 sin(2 th) / 2, and the radial integral has a closed form
    c = 1 - rho * rho

    def g(th):
        s2 = math.sin(2 * th)
        a = (1 - rho * s2) / (c * nu)
        R2 = 2 * w / s2
        return (1 + a * R2) ** (-nu / 2) / (a * nu) / (2 * math.pi * math.sqrt(c))

    quarter = integrate.quad(g, 0, math.pi / 2, epsabs=1e-13, limit=200)[0]
    return 2 * quarter  # the third quadrant mirrors the first


@pytest.mark.parametrize("w,rho,nu", [(0.7, 0.4, 3.0), (2.0, -0.5, 1.0), (0.1, 0.9, 10.0)])
def test_product_cdf_against_polar_oracle(w, rho, nu):
    assert product_cdf_W(w, rho, nu) == pytest.approx(1 - _upper_tail_polar(w, rho, nu), abs=1e-7)


def test_product_cdf_decreases_in_rho():
    for w in (-1.0, 0.0, 0.3, 2.0):
        for nu in (1.0, 4.0, math.inf):
            F = [product_cdf_W(w, r, nu) for r in np.linspace(-0.95, 0.95, 15)]
            assert np.all(np.diff(F) < 0)


def test_product_cdf_errors():
    with pytest.raises(DomainError):
        product_cdf_W(0.0, 1.0, 3.0)
    with pytest.raises(DomainError):
        product_cdf_W(0.0, 0.2, 0.0)


def test_solve_rho():
    assert solve_rho(0.0, math.inf) == (0.0, False)
    for m in (0.1, 0.3, 0.5):
        r, edge = solve_rho(m, 3.0)
        r2, _ = solve_rho(-m, 3.0)
        assert not edge and r2 == pytest.approx(-r, abs=1e-7)
        assert product_cdf_W(m, r, 3.0) == pytest.approx(0.5, abs=1e-8)
    # the median of Z1 Z2 cannot exceed about t_3(0.75)^2 = 0.585
    r, edge = solve_rho(1.2, 3.0)
    assert edge and r == pytest.approx(1 - 1e-6)


def test_solve_rho_simulated():
    p = MSTParams(np.zeros(2), OMEGA, np.zeros(2), 3.0)
    z = mst_sample(10**5, p, seed=12)
    r, _ = solve_rho(float(np.median(z[:, 0] * z[:, 1])), 3.0)
    assert r == pytest.approx(0.5, abs=0.03)


def test_perturbation_invariance_of_products():
    a = mst_sample(10**5, MSTParams(np.zeros(2), OMEGA, [3.0, -2.0], 3.0), seed=1)
    b = mst_sample(10**5, MSTParams(np.zeros(2), OMEGA, [0.0, 0.0], 3.0), seed=2)
    assert stats.ks_2samp(a[:, 0] * a[:, 1], b[:, 0] * b[:, 1]).pvalue > 0.01


def test_feasibility_adjust():
    Obar = np.array([[1.0, 0.3], [0.3, 1.0]])
    out, dl, k = feasibility_adjust(Obar, np.array([0.2, 0.1]))
    assert k == 0
    np.testing.assert_array_equal(out, Obar)
    np.testing.assert_array_equal(dl, [0.2, 0.1])
    assert feasibility_adjust(np.eye(1), np.array([0.999999]))[2] == 0
    Obar = np.array([[1.0, 0.1], [0.1, 1.0]])
    out, dl, k = feasibility_adjust(Obar, np.array([0.9, -0.9]))
    star = np.block([[out, dl[:, None]], [dl[None, :], np.ones((1, 1))]])
    assert k > 0 and np.linalg.eigvalsh(star).min() > 1e-10
    # k is the smallest such count
    prev = np.block([[np.eye(2) + (out - np.eye(2)) / 0.95, dl[:, None] / 0.95], [dl[None, :] / 0.95, np.ones((1, 1))]])
    assert np.linalg.eigvalsh(prev).min() <= 1e-10


def test_delta_alpha_maps():
    np.testing.assert_array_equal(delta_to_alpha(np.eye(2), np.zeros(2)), np.zeros(2))
    assert delta_to_alpha(np.eye(1), np.array([0.6]))[0] == pytest.approx(0.6 / 0.8)
    rng = np.random.default_rng(4)
    for _ in range(20):
        A = rng.normal(size=(3, 3))
        S = A @ A.T + 3 * np.eye(3)
        _, Obar = scale_split(S)
        alpha = rng.normal(size=3) * 2
        np.testing.assert_allclose(delta_to_alpha(Obar, alpha_to_delta(Obar, alpha)), alpha, rtol=1e-10, atol=1e-10)
    with pytest.raises(DomainError):
        delta_to_alpha(np.eye(2), np.array([0.8, 0.8]))


def test_init_d1_reduces_to_univariate():
    y = mst_sample(300, MSTParams(np.zeros(1), np.eye(1), [2.0], 4.0), seed=3)
    m = init_multivariate(y).params
    u = init_regression(y[:, 0]).params
    assert m.beta[0, 0] == u.beta[0]
    assert m.Omega[0, 0] == pytest.approx(u.omega**2, rel=1e-14)
    assert m.alpha[0] == pytest.approx(u.lam, rel=1e-10)
    assert m.nu == u.nu


def test_init_equivariance():
    p = MSTParams(np.zeros(2), OMEGA, BIVARIATE_ALPHA_DIR * 2.0, 3.0)
    y = mst_sample(400, p, seed=8)
    a = init_multivariate(y).params
    scale, shift = np.array([3.0, 0.5]), np.array([10.0, -2.0])
    b = init_multivariate(y * scale + shift).params
    np.testing.assert_allclose(b.beta[0], a.beta[0] * scale + shift, rtol=1e-9)
    np.testing.assert_allclose(b.Omega_bar, a.Omega_bar, atol=1e-9)
    np.testing.assert_allclose(b.alpha, a.alpha, rtol=1e-8, atol=1e-10)
    m3 = init_multivariate(y, method="M3")
    assert np.all(m3.params.alpha == 0) and m3.params.nu == 10.0


@pytest.mark.slow
def test_init_recovers_correlation():
    p = MSTParams(np.zeros(2), BIVARIATE_OMEGA, 2.0 * BIVARIATE_ALPHA_DIR, 3.0)
    # 200 replicates rather than 50: the median of 50 has a standard error
    # near 0.07 here, too coarse for a +-0.1 check
    rhos = []
    for rep in range(200):
        est = init_multivariate(mst_sample(500, p, seed=100 + rep))
        assert np.all(np.isfinite(est.params.alpha))
        rhos.append(est.params.Omega_bar[0, 1])
    assert np.median(rhos) == pytest.approx(0.5, abs=0.1)
