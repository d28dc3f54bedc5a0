"""Closed-form moments and precision bounds for CSS and Phi states.

All expressions assume quadratic encoding (``k = 2``) of ``b`` through
``J_z^2`` and collective dephasing with decay coefficient ``kappa``.

Sign convention: the encoded coherences carry ``exp(-i b t (m^2 - m'^2))``,
so a CSS prepared with azimuth ``phi`` has ``<J_+> ~ exp(i phi)`` and its
transverse spin precesses towards ``+J_y`` for ``b t > 0`` and
``0 < theta < pi/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError

KappaLike = Union[float, Callable[[float], float]]

__all__ = [
    "MomentKernel", "moment_kernel", "css_moments", "css_jz_moments", "CSSQFI",
    "css_qfi_noiseless", "css_optimal_theta", "css_noisy_uncertainty",
    "css_ratio_uncertainty", "phi_uncertainty", "phi_ratio_uncertainty",
    "phi_optimum", "css_optimum_fixed_theta", "css_optimum",
]


def _kappa(kappa: KappaLike, tau: float) -> float:
    value = kappa(tau) if callable(kappa) else kappa
    if value < 0:
        raise DomainError("kappa must be non-negative")
    return float(value)


# --------------------------------------------------------------------------
# kernel


@dataclass(frozen=True)
class MomentKernel:
    """The complex kernels ``zeta`` and ``Theta`` and their real combinations.

    ``zeta_sum = zeta + zeta*``, ``zeta_diff = (zeta - zeta*) / i`` and
    ``theta_sum = Theta + Theta*`` come from the Chebyshev route when it is
    available (``|2 b t| < pi / 2``) and from the complex route otherwise.
    """

    zeta: complex
    theta_big: complex
    zeta_sum: float
    zeta_diff: float
    theta_sum: float
    route: str


def _log_polar_power(theta: float, x: float, n: int) -> complex:
    # (cos^2(theta/2) e^{ix} + sin^2(theta/2) e^{-ix})^n = (cos x + i cos(theta) sin x)^n
    if n == 0:
        return 1.0 + 0.0j
    re, im = math.cos(x), math.cos(theta) * math.sin(x)
    r = math.hypot(re, im)
    if r == 0.0:
        return 0.0j
    alpha = math.atan2(im, re)
    return complex(math.exp(n * math.log(r)) * math.cos(n * alpha),
                   math.exp(n * math.log(r)) * math.sin(n * alpha))


def _chebyshev_pair(theta: float, x: float, n: int):
    """``r^n T_n(u)`` and ``r^n sin(alpha) U_{n-1}(u)`` by the trigonometric route."""
    u_den = math.hypot(math.cos(x), math.cos(theta) * math.sin(x))
    u = abs(math.cos(x)) / u_den
    a = math.acos(min(1.0, u))
    rn = math.exp(n * math.log(u_den)) if n else 1.0
    T = math.cos(n * a)
    # sin(n a) = sin(a) U_{n-1}(u) with sin(a) = u cos(theta) tan(x)
    s_a = u * math.cos(theta) * math.tan(x)
    if abs(math.sin(a)) > 1e-300:
        U = math.sin(n * a) / math.sin(a)
    else:
        U = float(n)
    return rn * T, rn * s_a * U


def moment_kernel(theta: float, phi: float, bt: float, N: int, route: str = "auto") -> MomentKernel:
    """Evaluate ``zeta`` and ``Theta`` for a CSS of ``N`` qubits.

    ``zeta = e^{i phi} [cos^2(theta/2) e^{i b t} + sin^2(theta/2) e^{-i b t}]^{N-1}``
    and ``Theta`` is the same with ``2 phi``, ``2 b t`` and exponent ``N - 2``.
    Powers are taken in log-polar form to stay finite at large ``N``.
    """
    if N < 2:
        raise DomainError("moment kernels need N >= 2")
    zeta = complex(math.cos(phi), math.sin(phi)) * _log_polar_power(theta, bt, N - 1)
    big = complex(math.cos(2 * phi), math.sin(2 * phi)) * _log_polar_power(theta, 2 * bt, N - 2)
    use_cheb = route == "chebyshev" or (route == "auto" and abs(2 * bt) < math.pi / 2)
    if use_cheb:
        if abs(2 * bt) >= math.pi / 2:
            raise DomainError("Chebyshev route needs |2 b t| < pi/2")
        t1, s1 = _chebyshev_pair(theta, bt, N - 1)
        t2, s2 = _chebyshev_pair(theta, 2 * bt, N - 2)
        zsum = 2.0 * (math.cos(phi) * t1 - math.sin(phi) * s1)
        zdiff = 2.0 * (math.sin(phi) * t1 + math.cos(phi) * s1)
        tsum = 2.0 * (math.cos(2 * phi) * t2 - math.sin(2 * phi) * s2)
        return MomentKernel(zeta, big, zsum, zdiff, tsum, "chebyshev")
    return MomentKernel(zeta, big, 2 * zeta.real, 2 * zeta.imag, 2 * big.real, "complex")


def css_moments(theta: float, phi: float, b: float, t: float, kappa: float, N: int,
                route: str = "complex") -> dict[str, float]:
    """First and second transverse moments of a dephased, encoded CSS.

    Parameters
    ----------
    theta, phi : float
        Polar and azimuthal angle of the initial CSS.
    b, t : float
        Signal frequency and encoding time.
    kappa : float
        Decay coefficient at time ``t``.
    N : int
        Number of qubits (at least 2).
    route : {"complex", "chebyshev", "auto"}

    Returns
    -------
    dict
        Keys ``Jx``, ``Jy``, ``Jx2``, ``Jy2``.
    """
    if kappa < 0:
        raise DomainError("kappa must be non-negative")
    J = N / 2
    k = moment_kernel(theta, phi, b * t, N, route)
    s = math.sin(theta)
    first = 0.5 * J * math.exp(-kappa) * s
    base = (J / 8) * ((1 - 2 * J) * math.cos(2 * theta) + 2 * J + 3)
    corr = (1 / 8) * J * (2 * J - 1) * math.exp(-4 * kappa) * s * s * k.theta_sum
    return {
        "Jx": first * k.zeta_sum,
        "Jy": first * k.zeta_diff,
        "Jx2": base + corr,
        "Jy2": base - corr,
    }


def css_jz_moments(theta: float, N: int) -> dict[str, float]:
    """``<J_z^2>`` and ``<J_z^4>`` of a CSS (invariant under the encoding)."""
    J = N / 2
    c2 = math.cos(2 * theta)
    jz2 = (J / 4) * (1 + 2 * J + (2 * J - 1) * c2)
    # fourth moment from the binomial cumulants of J_z = J - n, n ~ Bin(2J, sin^2(theta/2))
    p = math.sin(theta / 2) ** 2
    n = 2 * J
    mean = J * math.cos(theta)
    k2 = n * p * (1 - p)
    k3 = n * p * (1 - p) * (1 - 2 * p) * -1.0  # J_z = J - n flips the odd cumulants
    k4 = n * p * (1 - p) * (1 - 6 * p * (1 - p))
    jz4 = k4 + 4 * k3 * mean + 3 * k2**2 + 6 * k2 * mean**2 + mean**4
    return {"Jz2": jz2, "Jz4": jz4}


# --------------------------------------------------------------------------
# noiseless QFI


@dataclass(frozen=True)
class CSSQFI:
    """Total noiseless QFI of a CSS.

    ``printed`` is ``(T t J / 2)(2J-1) sin(theta)[4J-1+(4J-3)cos 2theta]``;
    ``exact`` carries ``sin^2(theta)``, which equals ``4 T t Var(J_z^2)``.
    """

    printed: float
    exact: float

    @property
    def relative_discrepancy(self) -> float:
        if self.exact == 0:
            return 0.0 if self.printed == 0 else math.inf
        return (self.printed - self.exact) / self.exact


def css_qfi_noiseless(theta: float, N: int, t: float, T: float) -> CSSQFI:
    """Noiseless total QFI ``nu * 4 t^2 Var(J_z^2)`` with ``nu = T / t``."""
    J = N / 2
    bracket = 4 * J - 1 + (4 * J - 3) * math.cos(2 * theta)
    common = (T * t * J / 2) * (2 * J - 1) * bracket
    return CSSQFI(printed=common * math.sin(theta), exact=common * math.sin(theta) ** 2)


def css_optimal_theta(J: float) -> float:
    """``arctan sqrt((2J-1)/(2J-2))``, maximizer of the exact noiseless QFI."""
    if J <= 1:
        return math.pi / 2
    return math.atan(math.sqrt((2 * J - 1) / (2 * J - 2)))


# --------------------------------------------------------------------------
# noisy CSS


def _check_geometry(theta: float):
    s, c = math.sin(theta), math.cos(theta)
    if abs(s) < 1e-15 or abs(c) < 1e-15:
        raise DomainError("theta in {0, pi/2} gives zero signal slope")
    return s, c


def css_noisy_uncertainty(theta: float, tau: float, kappa: KappaLike, N: int, T: float,
                          form: str = "exact") -> float:
    """``J_y``-readout uncertainty of a dephased CSS at ``b0 = 0``.

    Parameters
    ----------
    theta : float
        Polar angle (not 0 or pi/2).
    tau : float
        Encoding time; ``nu = T / tau`` shots.
    kappa : float or callable
        ``kappa(tau)`` or its value.
    N : int
    T : float
        Total time budget.
    form : {"exact", "large_j", "printed"}
        ``exact`` is the finite-``J`` method-of-moments result,
        ``large_j`` its leading large-``J`` form
        ``[e^{2k} + 2J sin^2 sinh 2k] / (8 J^3 T tau cos^2 sin^2)`` and
        ``printed`` replaces ``2J sin^2`` by ``2J - sin^2`` in that numerator.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    s, c = _check_geometry(theta)
    k = _kappa(kappa, tau)
    J = N / 2
    if form == "exact":
        num = math.exp(2 * k) + (2 * J - 1) * s * s * math.sinh(2 * k)
        var = num / (2 * T * tau * J * (2 * J - 1) ** 2 * s * s * c * c)
    elif form == "large_j":
        num = math.exp(2 * k) + 2 * J * s * s * math.sinh(2 * k)
        var = num / (8 * J**3 * T * tau * c * c * s * s)
    elif form == "printed":
        num = math.exp(2 * k) + 2 * J - s * s * math.sinh(2 * k)
        var = num / (8 * J**3 * T * tau * c * c * s * s)
    else:
        raise DomainError(f"unknown form {form!r}")
    return math.sqrt(var)


def css_ratio_uncertainty(theta: float, tau: float, kappa: KappaLike, N: int, T: float,
                          b: float = 0.0, denominator: str = "exact") -> float:
    """Error-propagated uncertainty of the CSS ratio estimator.

    The estimator is ``arctan(<J_y>/<J_x>) / ((N-1) cos(theta) tau)`` with
    ``nu = T / tau`` shots of each observable. Moments are evaluated at the
    true ``b``. ``denominator="printed"`` uses ``N^2`` in place of
    ``(N-1)^2``.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    _, c = _check_geometry(theta)
    k = _kappa(kappa, tau)
    mom = css_moments(theta, 0.0, b, tau, k, N)
    x, y = mom["Jx"], mom["Jy"]
    vx, vy = mom["Jx2"] - x * x, mom["Jy2"] - y * y
    n_eff = {"exact": N - 1, "printed": N}[denominator]
    num = y * y * vx + x * x * vy
    return math.sqrt(num / (n_eff**2 * T * tau * c * c * (x * x + y * y) ** 2))


# --------------------------------------------------------------------------
# Phi state


def phi_uncertainty(tau: float, kappa: KappaLike, J: int, T: float, b0: float = 0.0) -> dict:
    """QCRB and survival-readout uncertainty of the Phi state.

    Returns
    -------
    dict
        ``qcrb = e^{J^2 kappa} / (sqrt(T tau) J^2)`` and ``survival``, the
        method-of-moments uncertainty of ``O = 2|Phi><Phi| - 1`` at ``b0``
        (infinite where the slope vanishes).
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    k = _kappa(kappa, tau)
    d = math.exp(-J * J * k)
    qcrb = 1.0 / (d * math.sqrt(T * tau) * J * J)
    ph = J * J * b0 * tau
    sin2 = math.sin(ph) ** 2
    if sin2 < 1e-300:
        survival = math.inf
    else:
        survival = math.sqrt((1 - d * d * math.cos(ph) ** 2) / (T * tau * J**4 * d * d * sin2))
    return {"qcrb": qcrb, "survival": survival}


def phi_ratio_uncertainty(tau: float, kappa: KappaLike, J: int, T: float, b: float = 0.0,
                          form: str = "exact") -> float:
    """Uncertainty of the Phi ratio estimator ``arctan(<O'>/<O>) / (J^2 tau)``.

    ``nu = T / tau`` shots of each observable. ``form="printed"`` keeps the
    constant ``-1`` of the printed expression instead of ``-4``.
    """
    k = _kappa(kappa, tau)
    N = 2 * J
    c = math.cos(N * N * b * tau)
    const = {"exact": -4.0, "printed": -1.0}[form]
    return math.sqrt((16 * math.exp(N * N * k / 2) + 4 * c + const) / (N**4 * T * tau))


def phi_optimum(regime: str, J: float, T: float, rate: float) -> dict:
    """Asymptotic time-optimal Phi protocol.

    ``rate`` is ``gamma`` (Markovian) or ``kappa0 * omega_c`` (Zeno).
    """
    if regime == "markov":
        tau = 1 / (2 * rate * J * J)
        db = math.sqrt(2 * math.e * rate / T) / J
    elif regime == "zeno":
        tau = 1 / (2 * rate * J)
        db = math.sqrt(2) * math.exp(0.25) * math.sqrt(rate / T) * J**-1.5
    else:
        raise DomainError(f"unknown regime {regime!r}")
    return {"tau": tau, "db": db}


def css_optimum_fixed_theta(regime: str, J: float, T: float, rate: float) -> dict:
    """Asymptotic time-optimal CSS protocol at ``theta = pi/4``."""
    if regime == "markov":
        return {"tau": 3 ** (1 / 3) / (2 * rate * J ** (1 / 3)),
                "db": math.sqrt(rate / T) / J, "theta": math.pi / 4}
    if regime == "zeno":
        return {"tau": 1 / (math.sqrt(2) * rate * math.sqrt(J)),
                "db": 2**0.25 * math.sqrt(rate / T) * J**-1.25, "theta": math.pi / 4}
    raise DomainError(f"unknown regime {regime!r}")


def css_optimum(regime: str, J: float, T: float, rate: float) -> dict:
    """Asymptotic time- and angle-optimal CSS protocol (``J_y`` readout)."""
    if regime == "markov":
        tau = (3 ** 0.4 / 2 ** 1.2 * J ** -0.2 - 2 ** 0.4 * 3 ** 0.2 / 5 * J ** -0.6) / rate
        return {"tau": tau, "db": math.sqrt(rate / (2 * T)) / J,
                "theta": 2 ** -0.2 * 3 ** -0.1 * J ** -0.2}
    if regime == "zeno":
        return {"tau": math.sqrt(3) / (2 * rate * math.sqrt(J)),
                "db": math.sqrt(3 * math.sqrt(3) / 4) * math.sqrt(rate / T) * J ** -1.25,
                "theta": math.atan(1 / math.sqrt(2))}
    raise DomainError(f"unknown regime {regime!r}")
