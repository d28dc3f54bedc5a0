import math
import warnings

import numpy as np
import pytest

from dephasimeter import closed_form as cf
from dephasimeter import estimation as est
from dephasimeter.dicke import EncodingSpec, StateSpec, build_initial, expect, propagate
from dephasimeter.errors import DomainError


def test_protocol_spec_nu_and_local_regime_warning():
    p = est.ProtocolSpec(b_true=0.01, tau=0.5, T_total=10.0)
    assert p.nu == 20
    with pytest.warns(UserWarning):
        est.ProtocolSpec(b_true=1.0, tau=0.5, T_total=10.0)
    with pytest.raises(DomainError):
        est.ProtocolSpec(b_true=0.0, tau=2.0, T_total=1.0)


def test_eigenstate_readout_has_no_shot_noise():
    rho = build_initial(StateSpec.css(6, 0.0))
    s = est.sample_shots(rho, "Jz", 500, seed=1, replications=3)
    np.testing.assert_allclose(s.mean, 3.0)
    np.testing.assert_allclose(s.var, 0.0, atol=1e-12)


def test_survival_mean_within_shot_noise():
    J = 2
    rho = propagate(build_initial(StateSpec.phi_state(2 * J)), EncodingSpec(2, 0.05, 1.0), 0.02)
    truth = expect(rho, "SurvivalPhi")
    nu = 10**6
    s = est.sample_shots(rho, "SurvivalPhi", nu, seed=3)
    se = math.sqrt((1 - truth**2) / nu)
    assert abs(s.mean[0] - truth) < 4 * se


def test_spin_readout_variance_matches_born_rule():
    rho = build_initial(StateSpec.css(8, 0.9))
    nu = 200000
    s = est.sample_shots(rho, "Jy", nu, seed=2)
    var = expect(rho, "Jy2") - expect(rho, "Jy") ** 2
    assert s.var[0] == pytest.approx(var, rel=0.02)


def test_sampling_is_deterministic_per_stream():
    rho = build_initial(StateSpec.css(4, 0.7))
    a = est.sample_shots(rho, "Jx", 100, seed=9, replications=5)
    b = est.sample_shots(rho, "Jx", 100, seed=9, replications=5)
    np.testing.assert_array_equal(a.mean, b.mean)
    c = est.sample_shots(rho, "Jx", 100, seed=9, replications=5, stream=1)
    assert not np.array_equal(a.mean, c.mean)
    # replication r does not depend on how many replications are drawn
    d = est.sample_shots(rho, "Jx", 100, seed=9, replications=2)
    np.testing.assert_array_equal(d.mean, a.mean[:2])
    with pytest.raises(DomainError):
        est.sample_shots(rho, "Jx", 0)


def test_error_propagation():
    assert est.error_propagation(4.0, 2.0, 100) == pytest.approx(0.1)
    assert est.error_propagation_multi([4.0, 1.0], [0.5, 1.0], 2) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        est.error_propagation(1.0, 0.0, 10)


def test_estimators_invert_exact_means():
    N, theta, tau, b = 8, math.pi / 4, 1.0, 0.02
    m = cf.css_moments(theta, 0.0, b, tau, 0.0, N)
    naive = est.naive_estimator_css([m["Jy"]], N, theta, tau, b)
    assert naive.estimate == pytest.approx(b, rel=1e-9)
    # the CSS phase is (N-1) arctan(cos(theta) tan(b tau)); the estimator linearizes it
    c = math.cos(theta)
    linearized = math.atan(c * math.tan(b * tau)) / (c * tau)
    ratio = est.ratio_estimator_css([m["Jx"]], [m["Jy"]], N, theta, tau, b)
    assert ratio.estimate == pytest.approx(linearized, rel=1e-12)
    # the decay factor cancels in the quotient
    noisy = cf.css_moments(theta, 0.0, b, tau, 0.3, N)
    assert est.ratio_estimator_css([noisy["Jx"]], [noisy["Jy"]], N, theta, tau, b).estimate == \
        pytest.approx(linearized, rel=1e-12)
    J = 3
    d = math.exp(-J * J * 0.1)
    ph = J * J * b * tau
    phi = est.ratio_estimator_phi([d * math.cos(ph)], [d * math.sin(ph)], J, tau, b)
    assert phi.estimate == pytest.approx(b, rel=1e-12)


def test_estimator_domain_errors():
    with pytest.raises(DomainError):
        est.ratio_estimator_css([1.0], [0.1], 8, math.pi / 2, 1.0, 0.0)
    with pytest.raises(DomainError):
        est.ratio_estimator_css([0.0], [0.1], 8, 0.5, 1.0, 0.0)
    with pytest.raises(DomainError):
        est.ratio_estimator_phi([0.0], [0.0], 2, 1.0, 0.0, nu=100)


def test_naive_estimator_out_of_range_counts_as_failure():
    N, theta, tau = 8, math.pi / 4, 1.0
    r = est.naive_estimator_css([0.0, 1e6], N, theta, tau, 0.0)
    assert r.failures == 1
    assert r.replications == 1


def test_naive_estimator_unbiased_without_noise():
    out = est.css_bias_experiment(8, math.pi / 4, 0.0, 1.0, 0.02, 10**4, 400, seed=4)
    naive = out["naive"]
    assert abs(naive.bias) < 3 * naive.bias_se


def test_ratio_std_shrinks_as_inverse_sqrt_nu():
    nus = [1000, 4000, 16000]
    stds = [est.css_bias_experiment(8, math.pi / 4, 0.1, 1.0, 0.02, nu, 400, seed=5)["ratio"].std
            for nu in nus]
    slope = np.polyfit(np.log(nus), np.log(stds), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_phi_ratio_example():
    out = est.phi_bias_experiment(4, 0.2, 1.0, 1e-3, 10**4, 400, seed=6)
    r = out["ratio"]
    assert abs(r.bias) < 3 * r.bias_se
    assert r.std == pytest.approx(out["ratio_analytic"], rel=0.1)
    assert out["shots"] == 2 * 10**4


def test_naive_bias_dominates_ratio_bias():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = est.css_bias_experiment(8, math.pi / 4, 0.1, 1.0, 0.02, 10**4, 300, seed=8)
    assert abs(out["naive"].bias) > 10 * abs(out["ratio"].bias)
    assert abs(out["naive"].bias) > 5 * out["naive"].bias_se
    assert out["shots"]["ratio"] == 2 * out["shots"]["naive"]


def test_result_serialization_drops_means():
    r = est.EstimatorResult.from_estimates(np.array([1.0, 2.0, 3.0]), 2.0, 10, means={"Jy": 1.0})
    d = r.to_dict()
    assert "means" not in d
    assert d["bias"] == 0.0
    assert d["std"] == pytest.approx(1.0)


def test_ratio_estimator_small_signal_example():
    N, theta, tau, kappa, db = 16, math.pi / 4, 1.0, 0.1, 1e-3
    m = cf.css_moments(theta, 0.0, db, tau, kappa, N)
    r = est.ratio_estimator_css([m["Jx"]], [m["Jy"]], N, theta, tau, db)
    assert r.estimate == pytest.approx(db, rel=1e-4)
