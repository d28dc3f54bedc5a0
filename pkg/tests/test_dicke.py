import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dephasimeter.dicke import (DickeDensity, EncodingSpec, StateSpec, build_initial, expect,
                                observable, propagate, qfi_exact, qfi_of, spin_matrices,
                                trajectory_average)
from dephasimeter.errors import DomainError, NormalizationError
from dephasimeter.noise import KAPPA_NORM, NoiseSpectrum, kappa_of_t


def qubit_css(N, theta, phi):
    # product of N identical single-qubit states in the full 2^N space
    q = np.array([math.cos(theta / 2), math.sin(theta / 2) * np.exp(1j * phi)])
    v = q
    for _ in range(N - 1):
        v = np.kron(v, q)
    return v


def collective_ops(N):
    sx = np.array([[0, 1], [1, 0]]) / 2
    sy = np.array([[0, -1j], [1j, 0]]) / 2
    sz = np.array([[1, 0], [0, -1]]) / 2
    out = []
    for s in (sx, sy, sz):
        tot = np.zeros((2**N, 2**N), complex)
        for k in range(N):
            ops = [np.eye(2)] * N
            ops[k] = s
            term = ops[0]
            for o in ops[1:]:
                term = np.kron(term, o)
            tot += term
        out.append(tot)
    return out


@pytest.mark.parametrize("J", [0.5, 1, 2.5, 4])
def test_spin_algebra(J):
    jx, jy, jz = spin_matrices(J)
    np.testing.assert_allclose(jx @ jy - jy @ jx, 1j * jz, atol=1e-12)
    np.testing.assert_allclose(jx @ jx + jy @ jy + jz @ jz, J * (J + 1) * np.eye(int(2 * J + 1)), atol=1e-12)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_css_matches_tensor_product_moments(N):
    theta, phi = 0.9, 0.4
    v = qubit_css(N, theta, phi)
    ops = collective_ops(N)
    rho = build_initial(StateSpec.css(N, theta, phi))
    for name, op in zip(("Jx", "Jy", "Jz"), ops):
        ref = float(np.real(v.conj() @ op @ v))
        assert expect(rho, observable(N / 2, name)) == pytest.approx(ref, abs=1e-12)
    ref2 = float(np.real(v.conj() @ ops[0] @ ops[0] @ v))
    assert expect(rho, observable(N / 2, "Jx2")) == pytest.approx(ref2, abs=1e-12)


def test_css_bloch_vector_and_variance():
    N, theta, phi = 10, 0.7, 1.1
    rho = build_initial(StateSpec.css(N, theta, phi))
    J = N / 2
    # the unitary exp(-i phi Jz) rotates the Bloch vector by +phi about z
    assert expect(rho, "Jz") == pytest.approx(J * math.cos(theta))
    assert expect(rho, "Jx") == pytest.approx(J * math.sin(theta) * math.cos(phi))
    assert expect(rho, "Jy") == pytest.approx(J * math.sin(theta) * math.sin(phi))


def test_oats_squeezes_and_conserves_norm():
    N = 20
    J = N / 2
    mu = (2 * J) ** -0.5
    rho = build_initial(StateSpec.oats(N, mu, math.pi / 2))
    assert np.trace(rho.mat).real == pytest.approx(1.0)
    # twisting about x leaves <Jx^2> unchanged; the quarter turn about z maps it to <Jy^2>
    assert expect(rho, "Jy2") == pytest.approx(J / 2, rel=1e-10)
    assert expect(rho, "Jx2") > 2 * J
    assert np.linalg.matrix_rank(rho.mat, tol=1e-10) == 1


def test_phi_requires_even_N():
    with pytest.raises(DomainError):
        StateSpec.phi_state(5)


def test_density_validation_and_immutability():
    rho = build_initial(StateSpec.css(4, 0.3))
    with pytest.raises(ValueError):
        rho.mat[0, 0] = 2.0
    bad = rho.mat.copy()
    bad[0, 1] += 0.1
    with pytest.raises(NormalizationError):
        DickeDensity(2, bad)
    with pytest.raises(NormalizationError):
        DickeDensity(2, 2 * rho.mat)
    back = DickeDensity.from_json(rho.to_json())
    np.testing.assert_allclose(back.mat, rho.mat, atol=1e-15)


def test_propagate_phases_and_decay():
    N = 4
    J = N / 2
    rho0 = build_initial(StateSpec.css(N, 1.0, 0.2))
    b, t, kappa = 0.7, 0.5, 0.05
    rho = propagate(rho0, EncodingSpec(2, b, t), kappa)
    m = np.arange(J, -J - 1, -1)
    dm = m[:, None] - m[None, :]
    d2 = m[:, None] ** 2 - m[None, :] ** 2
    ref = np.exp(-1j * b * t * d2 - kappa * dm**2) * rho0.mat
    np.testing.assert_allclose(rho.mat, ref, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.floats(0, math.pi), st.floats(0, 2 * math.pi), st.floats(-2, 2),
       st.floats(0, 3), st.floats(0, 2))
def test_propagation_keeps_a_valid_state(N, theta, phi, b, t, kappa):
    rho = propagate(build_initial(StateSpec.css(N, theta, phi)), EncodingSpec(2, b, t), kappa)
    assert np.trace(rho.mat).real == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(rho.mat, rho.mat.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rho.mat).min() > -1e-12
    purity = np.trace(rho.mat @ rho.mat).real
    assert purity <= 1 + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.floats(0.05, 3.0), st.floats(0.0, 1.5))
def test_qfi_of_pure_state_is_variance_of_generator(N, theta, t):
    # for pure states F = 4 t^2 Var(Jz^2), independent of b
    rho0 = build_initial(StateSpec.css(N, theta))
    jz = observable(N / 2, "Jz")
    g = jz @ jz
    var = expect(rho0, g @ g) - expect(rho0, g) ** 2
    F, _ = qfi_of(rho0, EncodingSpec(2, 0.3, t), 0.0)
    assert F == pytest.approx(4 * t * t * var, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("J", [1, 2, 4])
def test_phi_qfi_closed_form(J):
    rho0 = build_initial(StateSpec.phi_state(2 * J))
    for t, kappa in ((0.3, 0.0), (0.5, 0.02), (1.0, 0.1)):
        F, _ = qfi_of(rho0, EncodingSpec(2, 0.1, t), kappa)
        assert F == pytest.approx(t * t * J**4 * math.exp(-2 * J * J * kappa), rel=1e-10)


def test_qfi_decreases_with_dephasing():
    rho0 = build_initial(StateSpec.css(8, 0.8))
    vals = [qfi_of(rho0, EncodingSpec(2, 0.0, 0.4), k)[0] for k in (0.0, 0.01, 0.05, 0.2)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_qfi_exact_returns_sld_solving_lyapunov():
    rho0 = build_initial(StateSpec.css(6, 0.9))
    enc = EncodingSpec(2, 0.2, 0.6)
    rho = propagate(rho0, enc, 0.05)
    m = rho.m
    drho = -1j * enc.t * (m[:, None] ** 2 - m[None, :] ** 2) * rho.mat
    F, L = qfi_exact(rho, drho)
    np.testing.assert_allclose(0.5 * (L @ rho.mat + rho.mat @ L), drho, atol=1e-10)
    assert F == pytest.approx(np.trace(rho.mat @ L @ L).real, rel=1e-10)


def test_survival_observables():
    J = 3
    rho0 = build_initial(StateSpec.phi_state(2 * J))
    b, t, kappa = 0.02, 1.0, 0.01
    rho = propagate(rho0, EncodingSpec(2, b, t), kappa)
    d = math.exp(-J * J * kappa)
    assert expect(rho, "SurvivalPhi") == pytest.approx(d * math.cos(J * J * b * t))
    assert expect(rho, "SurvivalPhiPrime") == pytest.approx(d * math.sin(J * J * b * t))


def test_trajectory_average_matches_decay_law():
    spec = NoiseSpectrum.lorentzian(1.0, 1.0)
    rho0 = build_initial(StateSpec.css(2, 1.2, 0.3))
    enc = EncodingSpec(2, 0.5, 1.0)
    avg, se = trajectory_average(rho0, enc, spec, 4000, seed=11)
    ref = propagate(rho0, enc, KAPPA_NORM * kappa_of_t(spec, 1.0)).mat
    z = np.abs((avg.mat - ref).real) / np.where(se.real > 0, se.real, np.inf)
    assert z.max() < 4
    again, _ = trajectory_average(rho0, enc, spec, 4000, seed=11)
    np.testing.assert_array_equal(again.mat, avg.mat)
