"""Holstein-Primakoff phase-space engine for properly squeezed OATS.

Near full polarization the collective spin maps onto one bosonic mode with
quadratures ``(x, p)`` scaled so that a coherent spin state has
``Var(x) = J/2`` and ``Var(p) = 1/(2J)``. Under quadratic encoding and
collective dephasing a one-axis-twisted state keeps the Gaussian Wigner
function

    W = (pi^2 Q)^{-1/2} exp[-x^2/(J delta) - (J delta/Q)(p + 2 eta x + phi u)^2],
    u = 2 sin(theta)(J cos(theta) + x sin(theta)),

with ``Q = 1 + 4 J delta kappa sin^2(theta)`` and ``phi = b t``.

Operators up to quadratic order are stored as :class:`QuadForm` Weyl
symbols ``c + a x + b p + e x^2 + f p^2 + g x p``; Gaussian expectation
values and Moyal products of such symbols close in form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from .errors import DomainError, ResolutionError, ValidityError

__all__ = [
    "GaussianState", "ValidityReport", "QuadForm", "effective_parameters", "preset",
    "from_oats", "wigner", "wigner_grid", "wigner_normalization", "gaussian_moments",
    "fokker_planck_residual",
    "sld", "sld_residual", "qfi", "sld_qfi", "readout_precision", "optimal_protocol",
]

VALID_RATIO = 0.25
WARN_RATIO = 0.5


# --------------------------------------------------------------------------
# state parameters


def effective_parameters(mu: float, beta: float, J: float) -> tuple[float, float]:
    """Effective squeezing ``delta`` and displacement ``eta`` of an OATS."""
    s2b = math.sin(2 * beta)
    delta = math.cos(beta) ** 2 + (1 + 4 * J * J * mu * mu) * math.sin(beta) ** 2 + 2 * J * mu * s2b
    eta = 2 * mu * (math.cos(2 * beta) + J * mu * s2b) / (2 * delta)
    return delta, eta


def preset(name: str, J: float) -> tuple[float, float]:
    """``(mu, beta)`` of the named state families.

    ``css``: no squeezing; ``pe``: ``mu = (2J)^{-1/2}``, ``beta = pi/2``;
    ``ku``: minimal transverse dispersion,
    ``mu = 12^{1/6} J^{-2/3}``, ``beta = pi/2 - 3^{-1/6} 2^{-1/3} J^{-1/3}``.
    """
    if name == "css":
        return 0.0, 0.0
    if name == "pe":
        return (2 * J) ** -0.5, math.pi / 2
    if name == "ku":
        return 12 ** (1 / 6) * J ** (-2 / 3), math.pi / 2 - 3 ** (-1 / 6) * 2 ** (-1 / 3) * J ** (-1 / 3)
    raise DomainError(f"unknown state family {name!r}")


@dataclass(frozen=True)
class ValidityReport:
    """Low-excitation check ``<a^dagger a> / J`` of the HP mapping.

    ``status`` is ``valid`` below 0.25, ``warn`` up to 0.5, ``invalid`` above.
    """

    excitations: float
    ratio: float
    properly_squeezed: bool = True

    @property
    def status(self) -> str:
        if self.ratio < VALID_RATIO:
            return "valid"
        return "warn" if self.ratio <= WARN_RATIO else "invalid"

    @property
    def valid(self) -> bool:
        return self.ratio < VALID_RATIO and self.properly_squeezed


def excitations(J: float, delta: float, eta: float, kappa_t: float) -> float:
    """``<a^dagger a> = [1/delta + delta(1 + 4 J^2 eta^2) + 4 J kappa] / 4``."""
    return 0.25 * (1 / delta + delta * (1 + 4 * J * J * eta * eta) + 4 * J * kappa_t)


@dataclass(frozen=True)
class GaussianState:
    """HP-limit state at encoding time ``t``.

    Attributes
    ----------
    J, delta, eta : float
        Spin size, effective squeezing and displacement.
    theta : float
        Angle between the signal axis and the polarization.
    phase : float
        Accumulated ``phi = b t``.
    kappa_t : float
        Decay coefficient at ``t``.
    """

    J: float
    delta: float
    eta: float
    theta: float
    kappa_t: float = 0.0
    phase: float = 0.0
    validity: ValidityReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if self.kappa_t < 0:
            raise DomainError("kappa must be non-negative")

    @property
    def Q(self) -> float:
        return 1.0 + 4.0 * self.J * self.delta * self.kappa_t * math.sin(self.theta) ** 2

    def at(self, kappa_t: float | None = None, phase: float | None = None) -> "GaussianState":
        """Copy with a new decay coefficient and/or phase."""
        kappa_t = self.kappa_t if kappa_t is None else kappa_t
        phase = self.phase if phase is None else phase
        report = ValidityReport(
            excitations(self.J, self.delta, self.eta, kappa_t),
            excitations(self.J, self.delta, self.eta, kappa_t) / self.J,
            self.validity.properly_squeezed if self.validity else True)
        return replace(self, kappa_t=kappa_t, phase=phase, validity=report)


def from_oats(mu: float, beta: float, J: float, theta: float, kappa_t: float = 0.0,
              phase: float = 0.0) -> GaussianState:
    """Gaussian state of ``exp(-i beta J_z) exp(-i mu J_x^2)|J,J>``.

    Squeezing beyond ``(2J)^{-1/2}`` is flagged in the validity report and
    refused beyond twice that band.

    Raises
    ------
    ValidityError
        If ``|mu| > 2 (2J)^{-1/2}``.
    """
    band = (2 * J) ** -0.5
    if abs(mu) > 2 * band * (1 + 1e-12):
        raise ValidityError(f"mu = {mu:.4g} exceeds twice the properly squeezed band {band:.4g}")
    delta, eta = effective_parameters(mu, beta, J)
    n = excitations(J, delta, eta, kappa_t)
    report = ValidityReport(n, n / J, abs(mu) <= band * (1 + 1e-12))
    return GaussianState(J, delta, eta, theta, kappa_t, phase, report)


# --------------------------------------------------------------------------
# Wigner function and moments


def _shift(gs: GaussianState, x):
    return gs.phase * 2 * math.sin(gs.theta) * (gs.J * math.cos(gs.theta) + x * math.sin(gs.theta))


def wigner(gs: GaussianState, x, p):
    """Wigner function of ``gs`` at ``(x, p)`` (broadcasting)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    q = gs.Q
    jd = gs.J * gs.delta
    arg = p + 2 * gs.eta * x + _shift(gs, x)
    return np.exp(-x * x / jd - (jd / q) * arg * arg) / math.sqrt(math.pi**2 * q)


def wigner_grid(gs: GaussianState, width: float = 7.0, n: int = 256):
    """Wigner function on an ``n x n`` grid spanning ``width`` standard deviations.

    Returns
    -------
    xs, ps : ndarray
        Axis samples.
    W : ndarray, shape (n, n)
        ``W[i, j] = W(xs[i], ps[j])``.
    """
    mean, cov = gaussian_moments(gs)
    xs = mean[0] + np.linspace(-width, width, n) * math.sqrt(cov[0, 0])
    ps = mean[1] + np.linspace(-width, width, n) * math.sqrt(cov[1, 1])
    return xs, ps, wigner(gs, xs[:, None], ps[None, :])


def gaussian_moments(gs: GaussianState) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of ``(x, p)`` under ``W``."""
    s, c = math.sin(gs.theta), math.cos(gs.theta)
    jd = gs.J * gs.delta
    slope = 2 * gs.eta + 2 * gs.phase * s * s
    mean = np.array([0.0, -2 * gs.phase * s * gs.J * c])
    vx = jd / 2
    cov = np.array([[vx, -slope * vx], [-slope * vx, gs.Q / (2 * jd) + slope**2 * vx]])
    return mean, cov


# --------------------------------------------------------------------------
# quadratic forms


@dataclass(frozen=True)
class QuadForm:
    """Weyl symbol ``const + x*X + p*P + xx*X^2 + pp*P^2 + xp*X P``.

    ``xp`` multiplies the symbol ``x p``, i.e. the operator ``{x, p} / 2``.
    """

    const: float = 0.0
    x: float = 0.0
    p: float = 0.0
    xx: float = 0.0
    pp: float = 0.0
    xp: float = 0.0

    def scaled(self, factor: float) -> "QuadForm":
        return QuadForm(*(factor * v for v in self.as_tuple()))

    def __add__(self, other: "QuadForm") -> "QuadForm":
        return QuadForm(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self) -> tuple:
        return (self.const, self.x, self.p, self.xx, self.pp, self.xp)

    def linear(self) -> np.ndarray:
        return np.array([self.x, self.p])

    def hessian(self) -> np.ndarray:
        """Matrix ``A`` with symbol quadratic part ``z^T A z``."""
        return np.array([[self.xx, 0.5 * self.xp], [0.5 * self.xp, self.pp]])

    def __call__(self, x, p):
        return (self.const + self.x * x + self.p * p + self.xx * x * x + self.pp * p * p
                + self.xp * x * p)

    def to_dict(self) -> dict:
        return dict(zip(("const", "x", "p", "xx", "pp", "xp"), self.as_tuple()))


def expect_quad(form: QuadForm, mean: np.ndarray, cov: np.ndarray) -> float:
    """Gaussian average of a quadratic symbol."""
    A = form.hessian()
    return float(form.const + form.linear() @ mean + mean @ A @ mean + np.trace(A @ cov))


def expect_product(f: QuadForm, g: QuadForm, mean: np.ndarray, cov: np.ndarray) -> float:
    """``Tr[rho (F G + G F) / 2]`` for quadratic operators ``F, G``.

    The symmetrized Moyal product of two quadratic symbols is the pointwise
    product minus ``(F_xx G_pp - 2 F_xp G_xp + F_pp G_xx) / 8``; the
    Gaussian average of the pointwise product follows from Isserlis' theorem.
    """
    A, B = f.hessian(), g.hessian()
    alpha = f.linear() + 2 * A @ mean
    beta = g.linear() + 2 * B @ mean
    a0 = f.const + f.linear() @ mean + mean @ A @ mean
    b0 = g.const + g.linear() @ mean + mean @ B @ mean
    pointwise = ((a0 + np.trace(A @ cov)) * (b0 + np.trace(B @ cov)) + alpha @ cov @ beta
                 + 2 * np.trace(A @ cov @ B @ cov))
    # second derivatives: F_xx = 2 xx, F_pp = 2 pp, F_xp = xp
    moyal = (2 * f.xx * 2 * g.pp - 2 * f.xp * g.xp + 2 * f.pp * 2 * g.xx) / 8.0
    return float(pointwise - moyal)


# --------------------------------------------------------------------------
# SLD and QFI


def sld(gs: GaussianState, t: float) -> dict[str, QuadForm]:
    """Symmetric logarithmic derivative at ``b0 = 0`` as Weyl symbols.

    Returns ``{"A": L_A, "B": L_B, "L": L}`` where ``L = L_A + L_B`` and
    both parts include the common prefactor ``-4 t sin(theta)``.
    """
    s, c = math.sin(gs.theta), math.cos(gs.theta)
    q = gs.Q
    pref = -4 * t * s
    a = pref * gs.delta * gs.J**2 * c / q
    b = pref * gs.delta * gs.J * s / (q + 1)
    LA = QuadForm(p=a, x=2 * gs.eta * a)
    LB = QuadForm(xp=b, xx=2 * gs.eta * b)
    return {"A": LA, "B": LB, "L": LA + LB}


def sld_residual(gs: GaussianState, t: float, n: int = 256, width: float = 6.0) -> float:
    """Relative grid residual of ``2 d_b W = {L, rho}`` in phase space at ``b = 0``.

    ``d_b W`` is a central difference in ``b``; the Moyal term uses central
    finite differences of ``W`` on a grid sheared along the ``x``-``p``
    correlation. Returns the max-norm residual divided by ``max |2 d_b W|``.
    """
    g0 = gs.at(phase=0.0)
    grid = _sheared_grid(g0, n, width)
    X, P = grid.X, grid.P
    W = wigner(g0, X, P)
    eps = 1e-6 / (gs.J * max(t, 1e-300))
    dW = (wigner(g0.at(phase=eps * t), X, P) - wigner(g0.at(phase=-eps * t), X, P)) / (2 * eps)
    L = sld(g0, t)["L"]
    d = grid.derivatives(W)
    # {L, rho} symbol: 2 L W - (L_xx W_pp - 2 L_xp W_xp + L_pp W_xx) / 4
    rhs = 2 * L(X, P) * W - (2 * L.xx * d["pp"] - 2 * L.xp * d["xp"] + 2 * L.pp * d["xx"]) / 4
    lhs = 2 * dW
    inner = (slice(4, -4), slice(4, -4))
    scale = np.abs(lhs[inner]).max()
    return float(np.abs(lhs[inner] - rhs[inner]).max() / scale)


def qfi(gs: GaussianState, t: float, T: float) -> dict[str, float]:
    """Total QFI over ``nu = T / t`` shots.

    Returns
    -------
    dict
        ``total = F_A + F_B`` with
        ``F_A = 8 delta J^3 t T sin^2 cos^2 / Q`` and
        ``F_B = 4 delta^2 J^2 t T sin^4 / (Q + 1)``; ``leading`` is
        ``2 delta J^3 t T sin^2(2 theta) / Q`` (equal to ``F_A``).
    """
    if t <= 0:
        raise DomainError("t must be positive")
    s, c = math.sin(gs.theta), math.cos(gs.theta)
    q = gs.Q
    pref = 2 * gs.delta * gs.J**2 * t * T * s * s
    fa = pref * 4 * gs.J * c * c / q
    fb = pref * 2 * gs.delta * s * s / (q + 1)
    lead = 2 * gs.delta * gs.J**3 * t * T * math.sin(2 * gs.theta) ** 2 / q
    return {"total": fa + fb, "F_A": fa, "F_B": fb, "leading": lead}


def sld_qfi(gs: GaussianState, t: float, T: float) -> dict[str, float]:
    """QFI from Gaussian contraction of the SLD symbols (cross-check of :func:`qfi`)."""
    g0 = gs.at(phase=0.0)
    mean, cov = gaussian_moments(g0)
    parts = sld(g0, t)
    nu = T / t
    fa = expect_product(parts["A"], parts["A"], mean, cov)
    fb = expect_product(parts["B"], parts["B"], mean, cov)
    cross = expect_product(parts["A"], parts["B"], mean, cov)
    return {"total": nu * (fa + fb + 2 * cross), "F_A": nu * fa, "F_B": nu * fb, "cross": nu * cross}


def readout_precision(gs: GaussianState, t: float, T: float, eta_readout: float | None = None) -> float:
    """Method-of-moments uncertainty of ``O = J p + 2 J eta' x``.

    ``eta'`` defaults to the state's ``eta``. Moments come from the Gaussian
    Wigner function at ``b = 0``; the slope is ``d<O>/db = t d<O>/dphi``.

    Raises
    ------
    DomainError
        If the signal slope vanishes (``theta`` in ``{0, pi/2}``).
    """
    eta_r = gs.eta if eta_readout is None else eta_readout
    g0 = gs.at(phase=0.0)
    s, c = math.sin(gs.theta), math.cos(gs.theta)
    slope = -2 * t * s * c * gs.J**2
    if abs(slope) < 1e-300 or abs(s * c) < 1e-15:
        raise DomainError("readout has zero signal slope")
    form = QuadForm(p=gs.J, x=2 * gs.J * eta_r)
    mean, cov = gaussian_moments(g0)
    var = expect_product(form, form, mean, cov) - expect_quad(form, mean, cov) ** 2
    return math.sqrt(var / ((T / t) * slope * slope))


# --------------------------------------------------------------------------
# Fokker-Planck check


def _d1(a, h, axis):
    # fourth-order central difference
    return (-np.roll(a, -2, axis) + 8 * np.roll(a, -1, axis) - 8 * np.roll(a, 1, axis)
            + np.roll(a, 2, axis)) / (12 * h)


def _d2(a, h, axis):
    return (-np.roll(a, -2, axis) + 16 * np.roll(a, -1, axis) - 30 * a + 16 * np.roll(a, 1, axis)
            - np.roll(a, 2, axis)) / (12 * h * h)


@dataclass(frozen=True)
class _ShearedGrid:
    """Grid ``x = x0 + h1 i``, ``p = p0 - k x + h2 j`` aligned with a tilted Gaussian."""

    X: np.ndarray
    P: np.ndarray
    h1: float
    h2: float
    shear: float

    def derivatives(self, W: np.ndarray) -> dict:
        # d/dw1 = d_x + k d_p and d/dw2 = d_p
        k = self.shear
        W2, W22 = _d1(W, self.h2, 1), _d2(W, self.h2, 1)
        W1, W11 = _d1(W, self.h1, 0), _d2(W, self.h1, 0)
        W12 = _d1(W2, self.h1, 0)
        return {
            "p": W2, "pp": W22,
            "x": W1 - k * W2,
            "xp": W12 - k * W22,
            "xx": W11 - 2 * k * W12 + k * k * W22,
        }


def _sheared_grid(gs: GaussianState, n: int, width: float, stride: int = 1) -> _ShearedGrid:
    mean, cov = gaussian_moments(gs)
    k = cov[0, 1] / cov[0, 0]
    sx = math.sqrt(cov[0, 0])
    sp = math.sqrt(cov[1, 1] - k * k * cov[0, 0])
    w1 = (np.linspace(-width, width, n) * sx)[::stride]
    w2 = (np.linspace(-width, width, n) * sp)[::stride]
    A, B = np.meshgrid(w1, w2, indexing="ij")
    X = mean[0] + A
    P = mean[1] + k * A + B
    return _ShearedGrid(X, P, w1[1] - w1[0], w2[1] - w2[0], k)


def wigner_normalization(gs: GaussianState, n: int = 256, width: float = 7.0) -> float:
    """Simpson integral of ``W`` over an ``n x n`` grid sheared along the x-p correlation.

    The shear has unit Jacobian, so the grid integral estimates the total
    weight directly while resolving strongly tilted (squeezed) states.
    """
    grid = _sheared_grid(gs, n, width)
    W = wigner(gs, grid.X, grid.P)
    return float(integrate.simpson(integrate.simpson(W, dx=grid.h2, axis=1), dx=grid.h1))


@dataclass(frozen=True)
class FokkerPlanckResult:
    """Residual of a Fokker-Planck operator against the Gaussian solution.

    ``residual`` is on the full grid, ``coarse`` on every second point.
    ``discretization_dominated`` is set when halving the grid spacing
    shrinks the residual by more than a factor of four.
    """

    form: str
    residual: float
    coarse: float

    @property
    def discretization_dominated(self) -> bool:
        return self.residual > 0 and self.coarse > 4.0 * self.residual


def _fp_residual(J, delta, eta, theta, b, kappa_fn, rate_fn, t, dt, n, width, form, stride):
    def state(time):
        return GaussianState(J, delta, eta, theta, kappa_fn(time), b * time)

    g = state(t)
    grid = _sheared_grid(g, n, width, stride)
    X, P = grid.X, grid.P
    W = wigner(g, X, P)
    dWdt = (wigner(state(t + dt), X, P) - wigner(state(t - dt), X, P)) / (2 * dt)
    d = grid.derivatives(W)
    Wp, Wpp = d["p"], d["pp"]
    s, c = math.sin(theta), math.cos(theta)
    kdot = rate_fn(t)
    if form == "printed":
        rhs = b * s * (2 * s * X - J * c) * Wp + kdot * Wpp
    elif form == "consistent":
        rhs = 2 * b * s * (J * c + X * s) * Wp + kdot * s * s * Wpp
    else:
        raise DomainError(f"unknown Fokker-Planck form {form!r}")
    inner = (slice(4, -4), slice(4, -4))
    diff = np.abs(dWdt - rhs)[inner].max()
    scale = np.abs(dWdt)[inner].max()
    return float(diff / scale) if scale > 0 else float(diff)


def fokker_planck_residual(J: float, delta: float, eta: float, theta: float, b: float,
                           decay, t: float, dt: float | None = None, n: int = 256,
                           width: float = 7.0, form: str = "consistent",
                           tol: float = 1e-4) -> FokkerPlanckResult:
    """Check that the time-dependent Gaussian ``W`` solves a Fokker-Planck equation.

    Parameters
    ----------
    J, delta, eta, theta : float
        State family.
    b : float
        Signal frequency; ``phi = b t``.
    decay : DecayCoefficient or callable
        ``kappa(t)``; must provide ``rate(t)`` or be differentiable.
    t : float
        Time at which the residual is evaluated.
    dt : float, optional
        Step of the central time difference (default ``1e-4 / omega_c``
        for Zeno decay, else ``1e-4 t``).
    form : {"consistent", "printed"}
        ``consistent`` is
        ``[2 b sin(J cos + x sin) d_p + kappa' sin^2 d_p^2] W``;
        ``printed`` is ``[b sin(2 sin x - J cos) d_p + kappa' d_p^2] W``.

    Raises
    ------
    ResolutionError
        If the residual exceeds ``tol`` and shrinks under grid refinement,
        i.e. the grid is too coarse to decide.
    """
    if dt is None:
        omega = getattr(decay, "omega_c", 0.0) or 0.0
        dt = 1e-4 / omega if omega > 0 else 1e-4 * max(t, 1e-12)
    rate = getattr(decay, "rate", None)
    if rate is None:
        def rate(x, h=1e-6):
            return (decay(x + h) - decay(max(x - h, 0.0))) / (x + h - max(x - h, 0.0))
    args = (J, delta, eta, theta, b, decay, rate, t, dt)
    fine = _fp_residual(*args, n, width, form, 1)
    coarse = _fp_residual(*args, n, width, form, 2)
    result = FokkerPlanckResult(form, fine, coarse)
    if result.discretization_dominated and fine > tol:
        raise ResolutionError(
            f"Fokker-Planck residual {fine:.3g} is discretization dominated; refine the grid")
    return result


# --------------------------------------------------------------------------
# optimal protocol


def optimal_protocol(mu: float, beta: float, J: float, decay, T: float) -> dict:
    """Zeno-regime optimum of the leading QFI ``F_A``.

    ``tau_opt = |csc theta| / (2 kappa0 omega_c sqrt(J delta))`` and
    ``theta_opt = arccos sqrt(2/3)``, giving
    ``db = (3 sqrt3 / 4)^{1/2} (kappa0 omega_c / T)^{1/2} delta^{-1/4} J^{-5/4}``.
    Markovian decay is optimized numerically through
    :func:`dephasimeter.optimizer.optimize_protocol`.
    """
    delta, eta = effective_parameters(mu, beta, J)
    if decay.mode == "zeno":
        scale = decay.zeno_scale
        theta = math.acos(math.sqrt(2 / 3))
        tau = 1 / (2 * scale * math.sin(theta) * math.sqrt(J * delta))
        db = math.sqrt(3 * math.sqrt(3) / 4) * math.sqrt(scale / T) * delta**-0.25 * J**-1.25
        gs = from_oats(mu, beta, J, theta, decay(tau))
        return {"tau": tau, "theta": theta, "db": db, "delta": delta, "eta": eta,
                "validity": gs.validity}
    from .optimizer import optimize_protocol

    res = optimize_protocol(("oats", mu, beta), decay, int(round(2 * J)), T, path="gaussian")
    return {"tau": res.tau, "theta": res.theta, "db": res.db, "delta": delta, "eta": eta,
            "validity": res.validity}
