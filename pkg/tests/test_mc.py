import math

import numpy as np
import pytest

from mlebound import matrix
from mlebound.mc import (
    PUBLISHED_E_H,
    SimConfig,
    estimate_q_h,
    expect_h_gaussian,
    lemma23_check,
    run_trial,
    standardize,
    standardized_trials,
    table1,
    trial_seed,
)
from mlebound.model import NormalModel
from mlebound.testfn import TestFunction, constant, inverse_quadratic

H = inverse_quadratic()
THETA0 = np.array([1.0, 1.0])
# (1/2) int_0^inf e^{-s/2} / (s + 1) ds, 30-digit mpmath, computed offline
E_H_ORACLE = 0.46145531624186523


def test_standardize_zero_at_truth():
    np.testing.assert_array_equal(standardize(THETA0, THETA0, np.diag([1, 2 ** -0.5]), 100), [0.0, 0.0])


def test_standardize_plug_in():
    # n = 4 observations mu + 1/2 +/- 1: xbar = mu + 1/sqrt(n), biased variance 1
    x = 1.0 + 0.5 + np.array([1.0, -1.0, 1.0, -1.0])
    theta_hat = NormalModel().mle(x)
    s = matrix.principal_sqrt(NormalModel().fisher(THETA0))
    np.testing.assert_allclose(standardize(theta_hat, THETA0, s, 4), [1.0, 0.0], atol=1e-15)


def test_run_trial_matches_batch():
    w, _ = standardized_trials(NormalModel(), THETA0, 50, 100, master_seed=3)
    for i in (0, 17, 99):
        np.testing.assert_allclose(run_trial(NormalModel(), THETA0, 50, trial_seed(3, 50, i)), w[i], rtol=1e-14)
    with pytest.raises(ValueError):
        run_trial(NormalModel(), THETA0, 1, 0)


@pytest.mark.slow
def test_trials_covariance_near_identity():
    w, retries = standardized_trials(NormalModel(), THETA0, 1000, 10**5, master_seed=1)
    assert retries == 0
    np.testing.assert_allclose(np.cov(w.T), np.eye(2), atol=0.02)


def test_expect_h_quadrature():
    e = expect_h_gaussian(H)
    assert e.method == "quadrature"
    assert e.value == pytest.approx(E_H_ORACLE, abs=1e-9)
    assert round(e.value, 3) == PUBLISHED_E_H
    assert expect_h_gaussian(constant(0.25)).value == pytest.approx(0.25, abs=1e-12)


def test_expect_h_mc_agrees():
    mc = expect_h_gaussian(H, method="mc", samples=2 * 10**6, seed=4)
    assert abs(mc.value - E_H_ORACLE) <= 4 * mc.std_err


def test_expect_h_non_radial_falls_back_to_mc():
    h = TestFunction("cos", 2, lambda x: np.cos(x[..., 0]), 1.0, 1.0, 1.0)
    e = expect_h_gaussian(h, samples=10**6, seed=1)
    assert e.method == "mc"
    assert abs(e.value - math.exp(-0.5)) <= 4 * e.std_err


def test_estimate_q_h_prefix_stability():
    a = standardized_trials(NormalModel(), THETA0, 100, 200, master_seed=9)[0]
    b = standardized_trials(NormalModel(), THETA0, 100, 400, master_seed=9)[0]
    assert a.tobytes() == b[:200].tobytes()


def test_estimate_q_h_row():
    row = estimate_q_h(NormalModel(), THETA0, 1000, H, trials=2000, master_seed=5, e_h=PUBLISHED_E_H)
    assert row.q_h == pytest.approx(abs(row.mean_h - PUBLISHED_E_H), abs=0)
    assert row.error == row.bound - row.q_h
    assert round(row.bound, 3) == 0.457
    assert row.q_h >= 0
    with pytest.raises(ValueError):
        estimate_q_h(NormalModel(), THETA0, 1000, H, trials=50, master_seed=5)


def test_table1_single_row_and_workers():
    cfg = SimConfig(n_list=[500], trials=600, master_seed=2)
    r1 = table1(cfg)
    r2 = table1(SimConfig(n_list=[500], trials=600, master_seed=2, workers=2))
    assert len(r1.rows) == 1
    assert r1.rows[0] == r2.rows[0]
    assert r1.e_h_gaussian == PUBLISHED_E_H and r1.e_h_method == "published-rounded"
    assert r1.e_h_quadrature == pytest.approx(E_H_ORACLE, abs=1e-9)
    exact = table1(SimConfig(n_list=[500], trials=600, master_seed=2, exact_ehz=True))
    assert exact.rows[0].mean_h == r1.rows[0].mean_h
    assert exact.e_h_method == "quadrature"


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(trials=10).validate()
    with pytest.raises(ValueError):
        SimConfig(n_list=[]).validate()
    with pytest.raises(ValueError):
        SimConfig(n_list=[1]).validate()
    with pytest.raises(ValueError, match="desk-scale"):
        SimConfig(n_list=[10**6], trials=10**4).validate()
    SimConfig(n_list=[10**6], trials=10**4, allow_full=True).validate()


def test_validity_rows():
    report = table1(SimConfig(n_list=[1000, 4000], trials=1000, master_seed=0))
    assert report.validity_violations() == []
    assert all(r.q_h <= r.bound for r in report.rows)


def test_lemma23_normal_passes():
    assert lemma23_check(NormalModel(), THETA0, samples=5 * 10**4, seed=1).passed


def test_lemma23_mis_scaled_K_fails():
    rep = lemma23_check(NormalModel(), THETA0, samples=5 * 10**4, seed=1, k_scale=0.5)
    assert not rep.passed
    np.testing.assert_allclose(rep.cov, 2 * np.eye(2), atol=0.1)


def test_lemma23_identity_model(mean_model):
    assert lemma23_check(mean_model, np.array([1.0, 2.0, 3.0]), samples=2 * 10**4, seed=3, n=10).passed


def test_lemma23_reparam_model(reparam_model):
    assert lemma23_check(reparam_model, np.array([0.2, 0.1]), samples=2 * 10**4, seed=4, n=10).passed


@pytest.mark.slow
def test_variance_at_n_1e4():
    w, _ = standardized_trials(NormalModel(), THETA0, 10**4, 10**5, master_seed=11)
    v = w.var(axis=0)
    assert np.all((0.97 <= v) & (v <= 1.03))


def test_convergence_of_mean_h():
    small = estimate_q_h(NormalModel(), THETA0, 1000, H, trials=2000, master_seed=1)
    large = estimate_q_h(NormalModel(), THETA0, 10**5, H, trials=2000, master_seed=1)
    assert large.q_h < small.q_h + 2 * (small.std_err + large.std_err)
