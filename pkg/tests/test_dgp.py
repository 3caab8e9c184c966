from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose, assert_array_equal

from rcfdml.data import Role
from rcfdml.dgp import (
    GarchSpec,
    Ordering,
    PlrSpec,
    SvarSpec,
    build_svar_matrices,
    garch_filter,
    policy_outcome_index,
    simulate_plr,
    simulate_svar,
    true_irf_svar,
    true_theta_svar,
)
from rcfdml.numerics import RngStream, spectral_radius

SMALL = SvarSpec(n=6, band=2)


def _ols_with_se(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    s2 = r @ r / (len(y) - X.shape[1])
    return beta, np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))


@pytest.mark.parametrize("seed", range(5))
def test_matrix_structure(seed):
    phi, P = build_svar_matrices(SvarSpec(), RngStream(seed))
    assert spectral_radius(phi) <= 0.95 + 1e-10
    dist = np.abs(np.subtract.outer(np.arange(100), np.arange(100)))
    assert np.all(phi[dist > 5] == 0.0)
    assert np.all(np.triu(P, 1) == 0.0)
    assert np.all((np.diag(P) >= 0.8) & (np.diag(P) <= 1.2))
    assert P[99, 98] == 0.5 and P[99, 49] == 0.5


def test_rescaling_binds_for_strong_dynamics():
    phi, _ = build_svar_matrices(SvarSpec(n=20, kappa=2.0), RngStream(1))
    assert spectral_radius(phi) == pytest.approx(0.95, abs=1e-10)


def test_zero_dynamics():
    phi, _ = build_svar_matrices(SvarSpec(n=10, kappa=0.0), RngStream(1))
    assert np.all(phi == 0.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        SvarSpec(d_min=0.0)
    with pytest.raises(ValueError):
        SvarSpec(rho_star=1.0)
    with pytest.raises(ValueError):
        SvarSpec(n=3, ordering="misspecified")
    with pytest.raises(ValueError):
        GarchSpec(alpha_g=0.5, beta_g=0.5)
    with pytest.raises(ValueError):
        PlrSpec(rho=1.0)


def test_policy_positions():
    assert policy_outcome_index(100, "correct") == (98, 99)
    assert policy_outcome_index(100, "misspecified") == (49, 99)


def test_dataset_layout():
    s = simulate_svar(SMALL, 50, RngStream(3))
    d = s.dataset
    assert d.T == 50
    assert d.policy_name == "y5" and d.outcome_name == "y6"
    assert len(d.control_names) == 4 + 6
    assert_array_equal(d.columns["y2_lag1"][1:], d.columns["y2"][:-1])


def test_determinism():
    a = simulate_svar(SMALL, 100, RngStream(5, 2))
    b = simulate_svar(SMALL, 100, RngStream(5, 2))
    for k in a.dataset.columns:
        assert_array_equal(a.dataset.columns[k], b.dataset.columns[k])
    assert a.fingerprint == b.fingerprint
    c = simulate_svar(SMALL, 100, RngStream(5, 3))
    assert a.fingerprint != c.fingerprint


def test_orderings_share_matrices_and_data():
    a = simulate_svar(SMALL, 80, RngStream(4))
    b = simulate_svar(SvarSpec(n=6, band=2, ordering="misspecified"), 80, RngStream(4))
    assert_array_equal(a.matrices["Phi1"], b.matrices["Phi1"])
    assert_array_equal(a.matrices["P"], b.matrices["P"])
    assert list(a.dataset.columns) == list(b.dataset.columns)
    for k in a.dataset.columns:
        assert_array_equal(a.dataset.columns[k], b.dataset.columns[k])
    assert b.dataset.policy_name == "y3"
    assert a.dataset.roles != b.dataset.roles


def test_sample_covariance_matches_lyapunov():
    spec = SvarSpec(n=5, band=2, kappa=0.5)
    s = simulate_svar(spec, 200_000, RngStream(8))
    phi, P = s.matrices["Phi1"], s.matrices["P"]
    sigma = scipy.linalg.solve_discrete_lyapunov(phi, P @ P.T)
    Y = np.column_stack([s.dataset.columns[f"y{i + 1}"] for i in range(5)])
    emp = np.cov(Y.T, bias=True)
    scale = np.sqrt(np.outer(np.diag(sigma), np.diag(sigma)))
    assert np.max(np.abs(emp - sigma) / scale) < 0.05


def test_garch_unconditional_variance():
    z = RngStream(2).generator().standard_normal((200_000, 3))
    u = garch_filter(z, GarchSpec())
    assert_allclose(u.var(axis=0), 1.0, rtol=0.05)
    s = simulate_svar(SvarSpec(n=4, band=1, garch=GarchSpec()), 200, RngStream(1))
    assert np.all(np.isfinite(s.dataset.control_matrix()))


@pytest.mark.parametrize("seed", range(4))
def test_true_theta_equals_structural_ratio(seed):
    phi, P = build_svar_matrices(SvarSpec(n=30), RngStream(seed))
    pol, out = policy_outcome_index(30, "correct")
    assert true_theta_svar(phi, P, "correct") == pytest.approx(P[out, pol] / P[pol, pol], abs=1e-8)


def test_two_variable_static_system():
    phi = np.zeros((2, 2))
    P = np.array([[1.5, 0.0], [0.6, 0.9]])
    # y2 = 0.6 u1 + 0.9 u2 and y1 = 1.5 u1, so the projection slope is 0.6 / 1.5
    assert true_theta_svar(phi, P) == pytest.approx(0.4, abs=1e-12)
    assert_allclose(true_irf_svar(phi, P, 3), [0.4, 0.0, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("ordering", list(Ordering))
def test_true_theta_matches_long_sample_ols(ordering):
    spec = SvarSpec(n=6, band=2, kappa=0.5, ordering=ordering)
    s = simulate_svar(spec, 200_000, RngStream(21))
    d = s.dataset
    X = np.column_stack([np.ones(d.T), d.policy, d.control_matrix()])
    beta, se = _ols_with_se(X, d.outcome)
    assert abs(beta[1] - s.theta_true) < 3 * se[1]


def test_irf_horizon_zero_and_decay():
    phi, P = build_svar_matrices(SvarSpec(n=30), RngStream(3))
    irf = true_irf_svar(phi, P, 40)
    assert irf[0] == pytest.approx(true_theta_svar(phi, P), abs=1e-10)
    pol, out = policy_outcome_index(30, "correct")
    impulse = P[:, pol] / P[pol, pol]
    oracle = [np.linalg.matrix_power(phi, h) @ impulse for h in range(41)]
    assert_allclose(irf, [v[out] for v in oracle], atol=1e-10)
    rho = spectral_radius(phi)
    c = np.linalg.norm(impulse) * np.linalg.cond(np.linalg.eig(phi)[1])
    assert np.all(np.abs(irf) <= c * rho ** np.arange(41) + 1e-12)
    assert abs(irf[40]) <= 0.95**40 * c


def test_irf_zero_dynamics():
    phi, P = build_svar_matrices(SvarSpec(n=10, kappa=0.0), RngStream(3))
    irf = true_irf_svar(phi, P, 5)
    assert_array_equal(irf[1:], 0.0)


def test_misspecified_irf_matches_long_sample_lp():
    spec = SvarSpec(n=6, band=2, kappa=0.5, ordering="misspecified")
    s = simulate_svar(spec, 200_000, RngStream(22), irf_horizon=2)
    d = s.dataset
    X = np.column_stack([np.ones(d.T), d.policy, d.control_matrix()])
    h = 2
    beta, se = _ols_with_se(X[:-h], d.outcome[h:])
    assert abs(beta[1] - s.irf_true[h]) < 3 * se[1]


def test_plr_no_confounding_recovers_theta():
    s = simulate_plr(PlrSpec(p=10, rho=0.0, cor=0.0, coef_scale=0.0), 10_000, RngStream(1))
    d = s.dataset
    X = np.column_stack([np.ones(d.T), d.policy])
    beta, se = _ols_with_se(X, d.outcome)
    assert abs(beta[1] - 0.5) < 3 * se[1]
    assert s.theta_true == 0.5


def test_plr_coefficient_envelope():
    for seed in range(20):
        s = simulate_plr(PlrSpec(p=50), 20, RngStream(seed))
        beta, gamma = s.matrices["beta"], s.matrices["gamma"]
        i = np.arange(1, 51)
        assert np.all(beta <= (1 / i) ** 2) and np.all(beta >= 0)
        assert np.all(gamma <= (2 / i) ** 2)
        assert beta[0] <= 1 and beta[3] <= 1 / 16


def test_plr_stationary_after_burn_in():
    s = simulate_plr(PlrSpec(p=20, rho=0.9, cor=0.7), 100_000, RngStream(2))
    X = s.dataset.control_matrix()
    v1, v2 = X[:50_000].var(axis=0), X[50_000:].var(axis=0)
    assert np.all(np.abs(v1 / v2 - 1) < 0.10)


def test_plr_layout_and_roles():
    s = simulate_plr(PlrSpec(p=3), 30, RngStream(0))
    assert list(s.dataset.columns) == ["y", "d", "x1", "x2", "x3"]
    assert s.dataset.roles["x2"] is Role.CONTROL


def test_plr_zero_noise_identity():
    s = simulate_plr(PlrSpec(p=5, noise_scale=0.0), 50, RngStream(0))
    d = s.dataset
    X = d.control_matrix()
    resid = d.outcome - 0.5 * d.policy - X @ s.matrices["gamma"]
    assert_allclose(resid, 0.0, atol=1e-12)
