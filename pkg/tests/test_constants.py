import math

import numpy as np
import pytest
from scipy import optimize

from hubtail import constants as C
from hubtail.errors import EtaInfiniteError, IntegerRatioError, UnsupportedDistributionError
from hubtail.weights import DiscreteGrid, Pareto

from reference import ETA_P21, k1_exact, p_two_hubs_quad, phi_pareto21

P21 = Pareto(2.0, 1.0)
# K(3) for Pareto(2,1), from the quadrature oracle in reference.py
K3_QUAD = p_two_hubs_quad() * ETA_P21**-4


def test_hubs_required_examples():
    assert C.hubs_required(3, 2) == (2, False)
    assert C.hubs_required(4, 2) == (2, True)
    assert C.hubs_required(0.5, 2) == (1, False)
    assert C.hubs_required(4 * (1 + 1e-14), 2) == (2, True)


def test_truncated_mean_examples():
    for d in (P21, Pareto(3.0, 2.0), DiscreteGrid(np.array([1.0, 3.0]), np.array([0.5, 0.5]))):
        assert C.truncated_mean(d, 0.0) == 0.0
    assert C.truncated_mean(P21, ETA_P21) == pytest.approx(1.0, abs=1e-14)
    assert C.truncated_mean(P21, 2.0) == 2.0
    assert C.truncated_mean_quad(P21, ETA_P21) == pytest.approx(1.0, abs=1e-10)
    assert C.truncated_mean_quad(P21, 2.0) == pytest.approx(2.0, abs=1e-10)
    with pytest.raises(ValueError):
        C.truncated_mean(P21, -1.0)


@pytest.mark.parametrize("d", [P21, Pareto(1.5, 1.0), Pareto(3.0, 2.0), Pareto(2.5, 0.3)])
def test_closed_form_matches_quadrature_on_log_grid(d):
    etas = np.logspace(-3, 3, 61)
    closed = C.truncated_mean(d, etas)
    quad = np.array([C.truncated_mean_quad(d, e) for e in etas])
    assert np.max(np.abs(closed - quad)) < 1e-9


def test_grid_truncated_mean_matches_quadrature():
    g = DiscreteGrid(np.array([0.0, 0.5, 2.0, 9.0]), np.array([0.1, 0.4, 0.3, 0.2]))
    for e in np.logspace(-2, 2, 25):
        assert C.truncated_mean(g, e) == pytest.approx(C.truncated_mean_quad(g, e), abs=1e-9)


def test_phi_shape():
    etas = np.linspace(0, 6, 601)
    phi = C.truncated_mean(P21, etas)
    assert np.all(np.diff(phi) >= -1e-15)
    assert np.all(np.diff(phi, 2) <= 1e-12)  # concave
    assert np.all(phi <= 2.0) and np.all(phi[etas >= 2.0] == 2.0)
    np.testing.assert_allclose(phi, [phi_pareto21(e) for e in etas], atol=1e-14)


def _eta_by_quadrature(d, a):
    k, _ = C.hubs_required(a, d.mean())
    target = a - (k - 1) * d.mean()
    return optimize.brentq(lambda e: C.truncated_mean_quad(d, e) - target, 1e-9, d.mean() / d.lower_endpoint(), xtol=1e-14)


@pytest.mark.parametrize("a", [1.0, 3.0, 3.9, 0.5, 2.2])
def test_eta_matches_quadrature_root(a):
    assert C.eta_of(P21, a) == pytest.approx(_eta_by_quadrature(P21, a), abs=1e-9)


def test_eta_examples():
    assert abs(C.eta_of(P21, 3.0) - ETA_P21) < 1e-9
    assert abs(C.eta_of(P21, 1.0) - ETA_P21) < 1e-9
    assert abs(C.eta_of(P21, 3.9) - (2 - math.sqrt(0.2))) < 1e-9


@pytest.mark.parametrize("a", [0.3, 1.0, 1.7, 3.0, 3.9, 5.5])
def test_eta_minimality(a):
    mu = P21.mean()
    k, _ = C.hubs_required(a, mu)
    eta = C.eta_of(P21, a)
    assert C.truncated_mean(P21, eta - 1e-9) + (k - 1) * mu < a
    assert a <= C.truncated_mean(P21, eta) + (k - 1) * mu + 1e-9


def test_eta_saturated_and_infinite():
    # a/mu integer with u* > 0: phi saturates at eta = mu / u*
    assert C.eta_of(P21, 4.0) == 2.0
    g0 = DiscreteGrid(np.array([0.0, 4.0]), np.array([0.5, 0.5]))
    with pytest.raises(EtaInfiniteError):
        C.eta_of(g0, 2.0)
    # the same grid reaches any target below its plateau
    assert C.truncated_mean(g0, C.eta_of(g0, 0.8)) == pytest.approx(0.8, abs=1e-9)
    with pytest.raises(EtaInfiniteError):
        C.eta_of(g0, 1.5)  # above the plateau mu * P(X > 0) = 1


def test_c_value():
    assert C.c_value(P21, [0.0, 0.0]) == 0.0
    assert C.c_value(P21, [ETA_P21, ETA_P21]) == pytest.approx(2.0, abs=1e-12)
    assert C.c_value(P21, [5.0, 5.0]) == 4.0
    rng = np.random.default_rng(0)
    x = rng.exponential(size=(1000, 3))
    c = C.c_value(P21, x)
    np.testing.assert_allclose(c, C.c_value(P21, x[:, ::-1]), rtol=1e-15)
    assert np.all(c <= 3 * 2.0)
    assert np.all(C.c_value(P21, x + np.array([0.1, 0.0, 0.0])) >= c)


def test_exceed_prob_examples():
    assert C.estimate_exceed_prob(P21, 3.0, 2.0, 1000, 0) == (1.0, 0.0)
    assert C.estimate_exceed_prob(P21, 4.5, 1.0, 1000, 0, k=2) == (0.0, 0.0)
    # k = 1 forced: a single hub contributes at most mu = 2 < 3
    assert C.estimate_exceed_prob(P21, 3.0, 0.5, 1000, 0, k=1) == (0.0, 0.0)
    with pytest.raises(UnsupportedDistributionError):
        C.estimate_exceed_prob(DiscreteGrid(np.array([1.0]), np.array([1.0])), 0.5, 1.0, 10, 0)


def test_exceed_prob_seed_consistency():
    p1, s1 = C.estimate_exceed_prob(P21, 3.0, ETA_P21, 10**6, 1)
    p2, s2 = C.estimate_exceed_prob(P21, 3.0, ETA_P21, 10**6, 2)
    assert 0 < p1 < 1 and 0 < p2 < 1
    assert abs(p1 - p2) < 4 * math.hypot(s1, s2)
    p_true = p_two_hubs_quad()
    assert abs(p1 - p_true) < 4 * s1


def test_k_constant_fixtures():
    k1 = C.k_of_a_constant(P21, 1.0, 10**5, 0)
    assert (k1.k, k1.mu) == (1, 2.0)
    assert abs(k1.eta - ETA_P21) < 1e-9
    assert k1.K_hat == pytest.approx(k1_exact(), rel=1e-10)
    assert k1.K_stderr == 0.0

    k3 = C.k_of_a_constant(P21, 3.0, 10**6, 0)
    assert k3.k == 2
    assert 0 <= k3.K_hat <= k3.eta ** (-4)
    assert abs(k3.K_hat - K3_QUAD) < 4 * k3.K_stderr
    assert K3_QUAD == pytest.approx(3.0787664645, abs=1e-9)


def test_integer_ratio_rejected():
    with pytest.raises(IntegerRatioError, match="integer"):
        C.k_of_a_constant(P21, 4.0, 100, 0)
    with pytest.raises(IntegerRatioError):
        C.sn_asymptote(P21, 2.0, 100)
    with pytest.raises(IntegerRatioError):
        C.en_asymptote(P21, 1.0, 100)


def test_rate_function():
    assert C.rate_function(1.5, 2.0) == 2.0
    assert C.rate_function(-0.1, 2.0) == math.inf
    assert C.rate_function(0.0, 2.0) == 0.0
    # lower semicontinuity at integers: the value equals the limit from the left
    for m in range(0, 4):
        left = C.rate_function(m - 1e-9, 2.5) if m > 0 else math.inf
        right = C.rate_function(m + 1e-9, 2.5)
        assert C.rate_function(m, 2.5) <= min(left, right)


def test_asymptotes():
    k1 = C.k_of_a_constant(P21, 1.0, 10**4, 0)
    assert C.sn_asymptote(P21, 1.0, 1000, params=k1) == pytest.approx(k1_exact() * 1e-3, rel=1e-10)
    k3 = C.k_of_a_constant(P21, 3.0, 10**4, 0)
    assert C.sn_asymptote(P21, 3.0, 1000, params=k3) == pytest.approx(k3.K_hat * 1e-6, rel=1e-12)
    assert C.en_asymptote(P21, 0.5, 1000, params=k1) == C.sn_asymptote(P21, 1.0, 1000, params=k1)
    grid = DiscreteGrid(np.array([1.0, 3.0]), np.array([0.5, 0.5]))
    assert C.sn_asymptote(grid, 1.0, 100) == 0.0


def test_scaling_identity():
    eta = ETA_P21
    eps = eta / 2
    pe, se = C.estimate_exceed_prob(P21, 3.0, eps, 2 * 10**6, 5)
    ph, sh = C.estimate_exceed_prob(P21, 3.0, eta, 2 * 10**6, 6)
    scale = (eta / eps) ** (-4)
    assert abs(pe - scale * ph) <= 3 * math.hypot(se, scale * sh)
