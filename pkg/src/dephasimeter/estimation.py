"""Shot-level estimators: method of moments and ratio estimators.

A single experiment measures an observable ``nu`` times on identically
prepared copies of the encoded state. Replications repeat the whole
experiment with independent counter-based random streams so that bias and
spread of an estimator can be measured separately from shot noise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import closed_form
from .dicke import DickeDensity, EncodingSpec, StateSpec, build_initial, observable, propagate
from .errors import DephasimeterError, DomainError

__all__ = [
    "ProtocolSpec", "EstimatorResult", "ShotSample", "sample_shots", "naive_estimator_css",
    "ratio_estimator_phi", "ratio_estimator_css", "error_propagation",
    "error_propagation_multi", "css_bias_experiment", "phi_bias_experiment",
]


@dataclass(frozen=True)
class ProtocolSpec:
    """Operating conditions of a single-shot-repeated protocol.

    ``nu = floor(T_total / tau)``. A warning is issued when
    ``|b_true - b0| tau`` exceeds 0.1, outside the local regime.
    """

    b_true: float
    tau: float
    T_total: float
    b0: float = 0.0
    readout: str = "Jy"
    kappa: float = 0.0

    def __post_init__(self):
        if self.tau <= 0 or self.T_total < self.tau:
            raise DomainError("need tau > 0 and T_total >= tau")
        if self.kappa < 0:
            raise DomainError("kappa must be non-negative")
        if abs(self.b_true - self.b0) * self.tau > 0.1:
            warnings.warn("|b - b0| tau > 0.1: outside the local estimation regime", stacklevel=2)

    @property
    def nu(self) -> int:
        return int(math.floor(self.T_total / self.tau + 1e-9))


@dataclass
class EstimatorResult:
    """Replicated estimator statistics.

    ``bias_se`` is the standard error of the mean estimate and ``std_se``
    the large-sample standard error of the standard deviation.
    """

    estimate: float
    bias: float
    bias_se: float
    std: float
    std_se: float
    nu: int
    replications: int
    failures: int = 0
    means: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("means")
        return out

    @classmethod
    def from_estimates(cls, estimates: np.ndarray, b_true: float, nu: int, failures: int = 0,
                       means: dict | None = None) -> "EstimatorResult":
        est = np.asarray(estimates, dtype=float)
        R = est.size
        if R == 0:
            raise DephasimeterError("every replication failed")
        mean = float(np.mean(est))
        std = float(np.std(est, ddof=1)) if R > 1 else 0.0
        return cls(mean, mean - b_true, std / math.sqrt(R), std,
                   std / math.sqrt(2 * (R - 1)) if R > 1 else math.inf,
                   nu, R, failures, means or {})


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class ShotSample:
    """Per-replication sample means and (unbiased) sample variances."""

    mean: np.ndarray
    var: np.ndarray
    nu: int


def _generator(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def _born(rho: DickeDensity, readout: str, eta: float):
    mat = observable(rho.J, readout, eta)
    if np.abs(mat - mat.conj().T).max() > 1e-10:
        raise DephasimeterError(f"readout {readout!r} is not Hermitian")
    values, vecs = np.linalg.eigh(mat)
    probs = np.einsum("ji,jk,ki->i", vecs.conj(), rho.mat, vecs).real
    probs = np.clip(probs, 0.0, None)
    return values, probs / probs.sum()


def sample_shots(rho: DickeDensity, readout: str, nu: int, seed: int = 0,
                 replications: int = 1, eta: float = 0.0, stream: int = 0) -> ShotSample:
    """Draw ``nu`` Born-rule outcomes per replication.

    Survival observables (eigenvalues ``+-1``) use a binomial draw; spin
    observables sample the full distribution over eigenvalues. Replication
    ``r`` uses the stream ``(seed, stream, r)``.
    """
    if nu < 1:
        raise DomainError("nu must be at least 1")
    values, probs = _born(rho, readout, eta)
    means = np.empty(replications)
    var = np.empty(replications)
    survival = readout.startswith("Survival")
    if survival:
        p_plus = float(probs[values > 0].sum())
    for r in range(replications):
        gen = _generator(seed, stream, r)
        if survival:
            k = gen.binomial(nu, p_plus)
            m1 = (2 * k - nu) / nu
            m2 = 1.0
        else:
            counts = gen.multinomial(nu, probs)
            m1 = counts @ values / nu
            m2 = counts @ values**2 / nu
        means[r] = m1
        var[r] = max(m2 - m1 * m1, 0.0) * (nu / (nu - 1) if nu > 1 else 1.0)
    return ShotSample(means, var, nu)


# --------------------------------------------------------------------------
# uncertainty propagation


def error_propagation(variance: float, slope: float, nu: int) -> float:
    """``sqrt(Var(O) / (nu (d<O>/db)^2))``.

    Raises
    ------
    DomainError
        If the slope is zero.
    """
    if slope == 0:
        raise DomainError("zero signal slope")
    return math.sqrt(max(variance, 0.0) / (nu * slope * slope))


def error_propagation_multi(variances, gradients, nu: int) -> float:
    """``sqrt(sum_i g_i^2 Var(O_i) / nu)`` for independently measured observables.

    ``gradients`` are the partial derivatives of the estimator with respect
    to each sample mean.
    """
    v = np.asarray(variances, dtype=float)
    g = np.asarray(gradients, dtype=float)
    return float(math.sqrt(np.sum(g * g * v) / nu))


# --------------------------------------------------------------------------
# estimators


def _noiseless_jy(b, N, theta, tau):
    return closed_form.css_moments(theta, 0.0, b, tau, 0.0, N)["Jy"]


def _monotone_window(N: int, theta: float, tau: float, b0: float):
    """Interval around ``b0`` on which the noiseless ``<J_y>(b)`` is monotone."""
    c = abs(math.cos(theta))
    guess = math.pi / (2 * max(N - 1, 1) * max(c, 1e-3) * tau)
    grid = b0 + np.linspace(0.0, 2.0 * guess, 801)[1:]
    vals = np.array([_noiseless_jy(b, N, theta, tau) for b in grid])
    slope0 = math.copysign(1.0, _noiseless_jy(b0 + 1e-9 / tau, N, theta, tau)
                           - _noiseless_jy(b0, N, theta, tau))
    turn = np.nonzero(np.diff(vals) * slope0 < 0)[0]
    hi = grid[turn[0]] if turn.size else grid[-1]
    return b0 - (hi - b0), hi


def naive_estimator_css(mean_jy, N: int, theta: float, tau: float, b_true: float,
                        b0: float = 0.0, nu: int = 1) -> EstimatorResult:
    """Invert the noiseless ``<J_y>(b)`` at the observed sample means.

    Dephasing shrinks the measured mean by ``e^{-kappa}``; ignoring it
    biases the estimate towards ``b0``. Means outside the range of the
    noiseless curve on its monotone window count as failures.
    """
    lo, hi = _monotone_window(N, theta, tau, b0)
    f_lo, f_hi = _noiseless_jy(lo, N, theta, tau), _noiseless_jy(hi, N, theta, tau)
    lo_val, hi_val = min(f_lo, f_hi), max(f_lo, f_hi)
    estimates, failures = [], 0
    for m in np.atleast_1d(mean_jy):
        if not lo_val < m < hi_val:
            failures += 1
            continue
        estimates.append(optimize.brentq(lambda b: _noiseless_jy(b, N, theta, tau) - m, lo, hi,
                                         xtol=1e-15, rtol=1e-14))
    return EstimatorResult.from_estimates(np.array(estimates), b_true, nu, failures,
                                          {"Jy": float(np.mean(mean_jy))})


def ratio_estimator_phi(mean_o, mean_o_prime, J: int, tau: float, b_true: float,
                        nu: int = 1) -> EstimatorResult:
    """``arctan(<O'>/<O>) / (J^2 tau)`` for the Phi / Phi' survival pair.

    The decay factor cancels in the quotient. The protocol uses ``nu``
    shots of each observable, ``2 nu`` in total.

    Raises
    ------
    DomainError
        If both means vanish within shot noise for every replication.
    """
    o = np.atleast_1d(np.asarray(mean_o, dtype=float))
    op = np.atleast_1d(np.asarray(mean_o_prime, dtype=float))
    floor = 1.0 / math.sqrt(max(nu, 1))
    ok = np.hypot(o, op) > floor * 1e-6
    if not ok.any():
        raise DomainError("indeterminate phase: both survival means vanish")
    est = np.arctan(op[ok] / o[ok]) / (J * J * tau)
    return EstimatorResult.from_estimates(est, b_true, nu, int((~ok).sum()),
                                          {"O": float(o.mean()), "O_prime": float(op.mean())})


def ratio_estimator_css(mean_jx, mean_jy, N: int, theta: float, tau: float, b_true: float,
                        nu: int = 1) -> EstimatorResult:
    """``arctan(<J_y>/<J_x>) / ((N-1) cos(theta) tau)`` at ``b0 = 0``.

    Raises
    ------
    DomainError
        For ``theta`` in ``{0, pi/2}`` or a vanishing ``<J_x>``.
    """
    c = math.cos(theta)
    if abs(c) < 1e-12 or abs(math.sin(theta)) < 1e-12:
        raise DomainError("ratio estimator needs 0 < theta < pi/2")
    x = np.atleast_1d(np.asarray(mean_jx, dtype=float))
    y = np.atleast_1d(np.asarray(mean_jy, dtype=float))
    ok = np.abs(x) > 1e-12
    if not ok.any():
        raise DomainError("indeterminate ratio: <J_x> vanishes")
    est = np.arctan(y[ok] / x[ok]) / ((N - 1) * c * tau)
    return EstimatorResult.from_estimates(est, b_true, nu, int((~ok).sum()),
                                          {"Jx": float(x.mean()), "Jy": float(y.mean())})


# --------------------------------------------------------------------------
# experiments


def css_bias_experiment(N: int, theta: float, kappa: float, tau: float, b_true: float, nu: int,
                        replications: int, seed: int = 0) -> dict:
    """Naive and ratio estimators for a CSS with shared ``J_y`` data.

    Returns
    -------
    dict
        ``naive`` and ``ratio`` :class:`EstimatorResult`, the analytic
        uncertainties ``naive_analytic`` (``J_y`` readout) and
        ``ratio_analytic``, and the resource accounting.
    """
    rho = propagate(build_initial(StateSpec.css(N, theta)), EncodingSpec(2, b_true, tau), kappa)
    jy = sample_shots(rho, "Jy", nu, seed, replications, stream=1)
    jx = sample_shots(rho, "Jx", nu, seed, replications, stream=2)
    T = nu * tau
    naive = naive_estimator_css(jy.mean, N, theta, tau, b_true, nu=nu)
    ratio = ratio_estimator_css(jx.mean, jy.mean, N, theta, tau, b_true, nu=nu)
    mom = closed_form.css_moments(theta, 0.0, b_true, tau, kappa, N)
    slope = _jy_slope(N, theta, tau, b_true)
    naive_an = error_propagation(mom["Jy2"] - mom["Jy"] ** 2, slope, nu)
    ratio_an = closed_form.css_ratio_uncertainty(theta, tau, kappa, N, T, b=b_true)
    return {"naive": naive, "ratio": ratio, "naive_analytic": naive_an,
            "ratio_analytic": ratio_an, "shots": {"naive": nu, "ratio": 2 * nu},
            "total_time": {"naive": T, "ratio": 2 * T}}


def _jy_slope(N, theta, tau, b):
    h = 1e-6 / (N * tau)
    return (_noiseless_jy(b + h, N, theta, tau) - _noiseless_jy(b - h, N, theta, tau)) / (2 * h)


def phi_bias_experiment(N: int, kappa: float, tau: float, b_true: float, nu: int,
                        replications: int, seed: int = 0) -> dict:
    """Ratio estimator: the evolved Phi state is read out with both survival observables.

    Each observable gets ``nu`` shots on a fresh copy of the same state.
    """
    J = N // 2
    enc = EncodingSpec(2, b_true, tau)
    rho = propagate(build_initial(StateSpec.phi_state(N)), enc, kappa)
    o = sample_shots(rho, "SurvivalPhi", nu, seed, replications, stream=3)
    op = sample_shots(rho, "SurvivalPhiPrime", nu, seed, replications, stream=4)
    ratio = ratio_estimator_phi(o.mean, op.mean, J, tau, b_true, nu=nu)
    analytic = closed_form.phi_ratio_uncertainty(tau, kappa, J, nu * tau, b=b_true)
    return {"ratio": ratio, "ratio_analytic": analytic, "shots": 2 * nu, "total_time": 2 * nu * tau}
