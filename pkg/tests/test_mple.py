import math

import numpy as np
import pytest

from skewt.errors import DomainError, NumericalError
from skewt.inversion import PreliminaryEstimate
from skewt.mple import (
    NU0,
    _fd_grad,
    _objective,
    _UniModel,
    cumulant_start,
    deviance_grid,
    fit,
    maximize,
    mcumulant_start,
    penalized_loglik,
    penalty,
    st_loglik,
    start_for,
)
from skewt.multivariate import MSTParams, mst_sample
from skewt.univariate import STParams, STRegParams, st_logpdf, st_moments, st_sample


def _reg(lam, nu=3.0, beta=(0.0,), omega=1.0):
    return STRegParams(np.array(beta, float), omega, lam, nu)


def test_loglik_examples():
    assert st_loglik(STParams(0.0, 1.0, 0.0, 1.0), [0.0]) == pytest.approx(math.log(1 / math.pi))
    y = st_sample(100, STParams(0.3, 2.0, 1.5, 4.0), seed=1)
    p = STParams(0.3, 2.0, 1.5, 4.0)
    ref = sum(float(st_logpdf(v, p)) for v in y)
    assert st_loglik(p, y) == pytest.approx(ref, rel=1e-12)
    # shifting data and location together leaves the value unchanged
    assert st_loglik(STParams(5.3, 2.0, 1.5, 4.0), y + 5.0) == pytest.approx(st_loglik(p, y), rel=1e-10)
    X = np.column_stack([np.ones(100), np.linspace(-1, 1, 100)])
    r = STRegParams(np.array([0.3, 2.0]), 2.0, 1.5, 4.0)
    assert st_loglik(r, y + 2.0 * X[:, 1], X) == pytest.approx(st_loglik(p, y), rel=1e-10)


def test_loglik_reports_bad_observation():
    with pytest.raises(NumericalError, match="observation 1"):
        st_loglik(STParams(0, 1, math.inf, 3.0), [1.0, -1.0])


# Pinned values of our own penalty.  They guard against drift and are not
# validated against an external reference implementation.
PENALTY_FIXTURES = {
    0.0: 0.0,
    1.0: 0.541803276872182,
    5.0: 2.7235112729381186,
    20.0: 5.1146199005375514,
}


@pytest.mark.parametrize("lam", sorted(PENALTY_FIXTURES))
def test_penalty_fixtures(lam):
    assert penalty(_reg(lam)) == pytest.approx(PENALTY_FIXTURES[lam], rel=1e-12)
    assert penalty(_reg(-lam)) == penalty(_reg(lam))


def test_penalty_shape():
    vals = [penalty(_reg(v)) for v in np.linspace(0, 50, 501)]
    assert vals[0] == 0.0 and np.all(np.diff(vals) > 0)
    # logarithmic growth
    assert penalty(_reg(1e4)) - penalty(_reg(1e2)) == pytest.approx(0.875913 * 2 * math.log(100), rel=1e-3)
    # the multivariate penalty uses alpha' Omega_bar alpha; d = 1 agrees
    m = MSTParams(np.zeros(1), np.eye(1) * 4.0, [3.0], 5.0)
    assert penalty(m) == pytest.approx(penalty(_reg(3.0)))


def test_penalized_loglik():
    y = st_sample(30, STParams(0, 1, 2, 3), seed=3)
    p = _reg(2.0)
    assert penalized_loglik(p, y) == pytest.approx(st_loglik(p, y) - penalty(p))


def test_cumulant_start_gaussian_like():
    y = np.random.default_rng(5).standard_normal(400)
    est = cumulant_start(y)
    p = est.params
    assert est.method == "M0"
    assert (not est.info["cumulant_inversion"] and (p.lam, p.nu) == (0.0, 10.0)) or (
        abs(p.lam) < 0.5 and p.nu > 20
    )


def test_cumulant_start_negative_kurtosis_falls_back():
    y = np.linspace(-1, 1, 200)  # uniform-like: gamma2 < 0
    est = cumulant_start(y)
    assert not est.info["cumulant_inversion"]
    assert (est.params.lam, est.params.nu) == (0.0, 10.0)
    assert est.params.omega == pytest.approx(np.std(y, ddof=1))


def test_cumulant_inversion_recovers_shape():
    from skewt.mple import _invert_cumulants
    from skewt.univariate import lambda_of_delta

    m = st_moments(STParams(0, 1, float(lambda_of_delta(0.5)), 8.0))
    delta, nu = _invert_cumulants(m.gamma1, m.gamma2)
    assert delta == pytest.approx(0.5, abs=0.02) and nu == pytest.approx(8.0, abs=0.5)


def test_cumulant_start_recovers_mean_and_variance():
    # the start matches the first two sample moments exactly
    y = st_sample(5000, STParams(1.0, 2.0, 1.0, 12.0), seed=9)
    est = cumulant_start(y)
    assert est.info["cumulant_inversion"]
    m = st_moments(STParams(est.params.beta[0], est.params.omega, est.params.lam, est.params.nu))
    assert m.mu == pytest.approx(y.mean(), rel=1e-8)
    assert m.sigma2 == pytest.approx(y.var(), rel=1e-8)


def test_mcumulant_start_runs():
    y = mst_sample(300, MSTParams(np.zeros(2), np.eye(2), [1.0, 1.0], 10.0), seed=2)
    est = mcumulant_start(y)
    assert est.method == "M0" and np.all(np.isfinite(est.params.alpha))
    with pytest.raises(DomainError):
        cumulant_start(np.ones(1))


def test_start_for_dispatch():
    y = st_sample(60, STParams(0, 1, 1, 3), seed=1)
    assert start_for("m2", y).method == "M1"
    assert start_for("M3", y).method == "M3"
    assert start_for("M0", y).method == "M0"
    with pytest.raises(DomainError):
        start_for("M7", y)


def test_maximize_fixed_point():
    y = st_sample(40, STParams(0, 1, 1, 4), seed=4)
    first = fit(y)
    again = maximize(PreliminaryEstimate(first.params, "M1"), y)
    assert again.iterations <= 3
    assert again.penalized_loglik == pytest.approx(first.penalized_loglik, abs=1e-8)
    np.testing.assert_allclose(again.params.beta, first.params.beta, atol=1e-4)


@pytest.mark.parametrize("method", ["M0", "M2", "M3"])
def test_maximize_monotone_and_flags(method):
    y = st_sample(80, STParams(0, 1, 3, 2), seed=6)
    res = fit(y, method=method)
    start_val = penalized_loglik(res.start.params, y)
    assert res.penalized_loglik >= start_val
    assert res.method_tag == method
    assert res.params.nu >= NU0
    assert res.converged
    assert res.penalized_loglik == pytest.approx(res.loglik - penalty(res.params))
    d = res.as_dict()
    assert d["method"] == method and set(d["params"]) == {"beta", "omega", "lambda", "nu"}


def test_maximize_affine_equivariance():
    y = st_sample(120, STParams(0, 1, 2, 5), seed=8)
    a, b = 3.0, -4.0
    r1 = fit(y)
    r2 = fit(a * y + b)
    assert r2.params.beta[0] == pytest.approx(a * r1.params.beta[0] + b, rel=1e-4, abs=1e-4)
    assert r2.params.omega == pytest.approx(a * r1.params.omega, rel=1e-4)
    assert r2.params.lam == pytest.approx(r1.params.lam, abs=1e-4)
    assert r2.params.nu == pytest.approx(r1.params.nu, rel=1e-4)


def test_maximize_iteration_cap():
    y = st_sample(100, STParams(0, 1, 3, 2), seed=6)
    res = maximize(start_for("M3", y), y, max_iter=1)
    assert not res.converged
    assert res.penalized_loglik >= penalized_loglik(res.start.params, y)


def test_internal_gradient_matches_richardson():
    y = st_sample(60, STParams(0, 1, 1.5, 3), seed=10)
    model = _UniModel(y, np.ones((60, 1)))
    f = _objective(model, penalized=True)
    v = model.pack(_reg(1.2, 2.5, beta=(0.1,), omega=0.9))
    g = _fd_grad(f, v)
    ref = np.empty_like(v)
    for i in range(v.size):
        h = 1e-3
        e = np.zeros_like(v)
        e[i] = h
        ref[i] = (-f(v + 2 * e) + 8 * f(v + e) - 8 * f(v - e) + f(v - 2 * e)) / (12 * h)
    np.testing.assert_allclose(g, ref, rtol=1e-4, atol=1e-6)


def test_multivariate_maximize():
    p = MSTParams(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]]), [1.0, 2.0], 5.0)
    y = mst_sample(150, p, seed=3)
    res = fit(y, method="M3")
    assert res.penalized_loglik >= penalized_loglik(res.start.params, y)
    assert res.params.Omega.shape == (2, 2) and np.all(np.isfinite(res.params.alpha))


@pytest.fixture(scope="module")
def small_sample_grid():
    y = st_sample(50, STParams(0, 1, 1, 2), seed=2024)
    res = fit(y, method="M2")
    lam = np.linspace(-2, 12, 51)
    nus = np.exp(np.linspace(math.log(0.3), math.log(100), 51))
    return y, res, deviance_grid(y, None, lam, nus, global_fit=res)


@pytest.mark.slow
def test_grid_optimum_matches_fit(small_sample_grid):
    _, res, g = small_sample_grid
    D = g.deviance
    assert np.all(np.isfinite(D)) and D.min() >= 0
    i, j = np.unravel_index(np.argmin(D), D.shape)
    # the best cell is next to the MPLE, far from the lambda -> infinity edge
    assert abs(g.lambdas[i] - res.params.lam) <= g.lambdas[1] - g.lambdas[0]
    assert abs(math.log(g.nus[j] / res.params.nu)) <= math.log(g.nus[1] / g.nus[0])
    assert i < len(g.lambdas) - 1 and D[i, j] < 0.1
    assert math.isfinite(res.params.lam) and abs(res.params.lam) < 10


@pytest.mark.slow
def test_deviance_increases_along_ray(small_sample_grid):
    _, _, g = small_sample_grid
    i, j = np.unravel_index(np.argmin(g.deviance), g.deviance.shape)
    assert np.all(np.diff(g.deviance[i:, j]) > 0)
    assert np.all(np.diff(g.deviance[i, j:]) > 0)


def test_deviance_grid_at_fit_and_profile_oracle():
    y = st_sample(60, STParams(0, 1, 1, 4), seed=13)
    res = fit(y)
    lam, nu = res.params.lam, res.params.nu
    g = deviance_grid(y, None, [lam, lam + 1.0], [nu, 2 * nu], global_fit=res)
    assert g.deviance[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert np.all(g.deviance >= 0)
    # direct profile: maximize over (xi, log omega) with scipy from a cold start
    from scipy import optimize

    def neg(v):
        return -st_loglik(STParams(v[0], math.exp(v[1]), lam + 1.0, 2 * nu), y)

    best = optimize.minimize(neg, [np.median(y), 0.0], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12})
    direct = -best.fun - penalty(_reg(lam + 1.0))
    assert g.profile[1, 1] == pytest.approx(direct, abs=1e-6)
    with pytest.raises(DomainError):
        deviance_grid(y, None, [], [1.0], global_fit=res)
