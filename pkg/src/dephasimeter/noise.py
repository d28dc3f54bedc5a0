"""Stationary Gaussian dephasing noise: spectra, decay coefficient, samplers.

The noise field ``xi(t)`` couples to the collective spin through ``J_z``.
Its power spectrum ``S(omega)`` determines the dimensionless decay
coefficient

    kappa(t) = (1 / 32 pi) * Integral dw  sin^2(w t / 2) / w^2 * S(w),

which damps Dicke coherences as ``exp(-kappa (m - m')^2)``.

Normalization bridge
--------------------
With the spectrum convention ``S(w) = Integral C(s) exp(-i w s) ds`` used
by the trajectory samplers, the variance of the accumulated phase is
``Var[Integral_0^t xi] = 64 kappa(t)``. Monte Carlo averages of
``exp(-i dm Integral xi)`` therefore decay as
``exp(-KAPPA_NORM * kappa(t) * dm^2)`` with ``KAPPA_NORM = 32``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError, RangeError, ResolutionError

KAPPA_NORM = 32.0

_EPSABS = 1e-12
_EPSREL = 1e-10
_ERR_LIMIT = 1e-10
_QUAD_LIMIT = 2000

SYNTHESIS_MODES = 4096

_KINDS = ("flat", "lorentzian", "hard_cutoff")


@dataclass(frozen=True)
class NoiseSpectrum:
    """Symmetric, non-negative noise power spectrum.

    Parameters
    ----------
    kind : {"flat", "lorentzian", "hard_cutoff"}
    level : float
        ``S0`` for flat and hard-cutoff spectra.
    variance : float
        ``g^2`` for the Lorentzian (Ornstein-Uhlenbeck) spectrum.
    rate : float
        Correlation rate ``gamma_c`` of the Lorentzian.
    cutoff : float
        ``omega_c`` of the hard-cutoff spectrum.
    """

    kind: str
    level: float = 0.0
    variance: float = 0.0
    rate: float = 0.0
    cutoff: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown spectrum kind {self.kind!r}")
        checks = {
            "flat": ("level",),
            "lorentzian": ("variance", "rate"),
            "hard_cutoff": ("level", "cutoff"),
        }[self.kind]
        for name in checks:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{self.kind} spectrum needs {name} > 0, got {value}")

    @classmethod
    def flat(cls, level: float) -> "NoiseSpectrum":
        return cls("flat", level=float(level))

    @classmethod
    def lorentzian(cls, variance: float, rate: float) -> "NoiseSpectrum":
        return cls("lorentzian", variance=float(variance), rate=float(rate))

    @classmethod
    def hard_cutoff(cls, level: float, cutoff: float) -> "NoiseSpectrum":
        return cls("hard_cutoff", level=float(level), cutoff=float(cutoff))

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSpectrum":
        data = dict(data)
        kind = data.pop("kind")
        return cls(kind, **{k: float(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        keys = {
            "flat": ("level",),
            "lorentzian": ("variance", "rate"),
            "hard_cutoff": ("level", "cutoff"),
        }[self.kind]
        return {"kind": self.kind, **{k: getattr(self, k) for k in keys}}

    def __call__(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        if self.kind == "flat":
            return np.full_like(w, self.level)
        if self.kind == "lorentzian":
            return 2.0 * self.variance * self.rate / (self.rate**2 + w**2)
        return np.where(w <= self.cutoff, self.level, 0.0)

    @property
    def omega_c(self) -> float:
        """Characteristic frequency (infinite for a flat spectrum)."""
        if self.kind == "lorentzian":
            return self.rate
        if self.kind == "hard_cutoff":
            return self.cutoff
        return math.inf

    def total_power(self) -> float:
        """``Integral S(w) dw`` over the real line (infinite for flat)."""
        if self.kind == "flat":
            return math.inf
        if self.kind == "lorentzian":
            return 2.0 * math.pi * self.variance
        return 2.0 * self.level * self.cutoff

    def autocovariance(self, lag) -> np.ndarray:
        """``C(s) = (1/2 pi) Integral S(w) exp(i w s) dw``."""
        s = np.abs(np.asarray(lag, dtype=float))
        if self.kind == "lorentzian":
            return self.variance * np.exp(-self.rate * s)
        if self.kind == "hard_cutoff":
            return self.level * self.cutoff / math.pi * np.sinc(self.cutoff * s / math.pi)
        raise DomainError("flat spectrum has a delta-correlated autocovariance")

    def markov_rate(self) -> float:
        """Long-time rate ``gamma = S(0) / 64`` so that ``kappa ~ gamma t``."""
        return float(self(0.0)) / 64.0

    def zeno_coefficient(self) -> float:
        """Short-time coefficient ``kappa0^2 omega_c^2 = Integral S / (128 pi)``."""
        return self.total_power() / (128.0 * math.pi)


def _filter(omega, t):
    """``sin^2(w t / 2) / w^2`` with its ``t^2 / 4`` limit at zero."""
    return 0.25 * t * t * np.sinc(omega * t / (2.0 * math.pi)) ** 2


def _quad(func, a, b, epsabs=_EPSABS, epsrel=_EPSREL, **kw):
    value, err = integrate.quad(func, a, b, epsabs=epsabs, epsrel=epsrel,
                                limit=_QUAD_LIMIT, **kw)[:2]
    return value, err


@lru_cache(maxsize=4096)
def _kappa_cached(spec: NoiseSpectrum, t: float) -> float:
    if t == 0.0:
        return 0.0
    if spec.kind == "flat":
        # Integral over the real line of sin^2(wt/2)/w^2 is pi t / 2.
        half, err = _flat_half_line(t)
        value, err = spec.level * half, spec.level * err
    elif spec.kind == "hard_cutoff":
        wc = spec.cutoff
        breaks = _oscillation_breaks(wc, t)
        value, err = _quad(lambda w: _filter(w, t), 0.0, wc, points=breaks)
        value, err = spec.level * value, spec.level * err
    else:
        value, err = _half_line(lambda w: float(spec(w)), t, spec.rate)
    kappa = value / (16.0 * math.pi)
    err /= 16.0 * math.pi
    if err > _ERR_LIMIT * max(1.0, abs(kappa)):
        raise QuadratureError(f"kappa({t}) quadrature error estimate {err:.3g}", )
    return kappa


def _oscillation_breaks(upper, t):
    n = int(min(upper * t / (2 * math.pi), 40))
    if n < 2:
        return None
    return list(np.linspace(0.0, upper, n + 1)[1:-1])


def _flat_half_line(t):
    # Integral_0^inf sin^2(wt/2)/w^2 dw, split at A with an oscillatory tail.
    a = 50.0 * math.pi / t
    head, e1 = _quad(lambda w: _filter(w, t), 0.0, a, points=_oscillation_breaks(a, t))
    tail_plain, e2 = _quad(lambda w: 0.5 / w**2, a, math.inf)
    tail_cos, e3 = integrate.quad(lambda w: 0.5 / w**2, a, math.inf, weight="cos",
                                  wvar=t, epsabs=_EPSABS, limlst=100)[:2]
    return head + tail_plain - tail_cos, e1 + e2 + e3


def _half_line(spectrum, t, scale):
    """Integral_0^inf spectrum(w) sin^2(wt/2)/w^2 dw for a decaying spectrum."""
    a = max(50.0 * math.pi / t, 20.0 * scale)
    # geometric panels resolve a spectral peak far below the oscillation scale
    edges = [0.0]
    w = scale
    while w < a:
        edges.append(w)
        w *= 10.0
    edges.append(a)
    head, e1 = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        breaks = [x for x in np.arange(2 * math.pi / t, hi, 2 * math.pi / t)[:40] if lo < x < hi]
        # panel errors add up, so each panel asks for a tenth of the target
        v, e = _quad(lambda w: spectrum(w) * _filter(w, t), lo, hi, points=breaks or None, epsabs=0.0,
                     epsrel=0.1 * _EPSREL)
        head += v
        e1 += e
    tol = _EPSREL * head
    tail_plain, e2 = _quad(lambda w: 0.5 * spectrum(w) / w**2, a, math.inf, epsabs=tol)
    tail_cos, e3 = integrate.quad(lambda w: 0.5 * spectrum(w) / w**2, a, math.inf,
                                  weight="cos", wvar=t, epsabs=tol, limlst=100)[:2]
    return head + tail_plain - tail_cos, e1 + e2 + e3


def kappa_of_t(spec: NoiseSpectrum, t):
    """Decay coefficient ``kappa(t)`` by adaptive quadrature.

    Parameters
    ----------
    spec : NoiseSpectrum
    t : float or array_like
        Non-negative times.

    Returns
    -------
    float or ndarray

    Raises
    ------
    QuadratureError
        If the estimated absolute error exceeds ``1e-10`` (relative for
        ``kappa > 1``).
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("kappa_of_t requires finite t >= 0")
    if arr.ndim == 0:
        return _kappa_cached(spec, float(arr))
    return np.array([_kappa_cached(spec, float(x)) for x in arr.ravel()]).reshape(arr.shape)


@dataclass(frozen=True)
class DecayCoefficient:
    """Callable ``kappa(t)`` in one of three modes.

    Use the constructors :meth:`markov`, :meth:`zeno` and :meth:`exact`.
    ``rate(t)`` returns ``d kappa / dt``.
    """

    mode: str
    gamma: float = 0.0
    kappa0: float = 0.0
    omega_c: float = 0.0
    spectrum: NoiseSpectrum | None = None
    table: tuple = field(default=(), compare=False)

    @classmethod
    def markov(cls, gamma: float) -> "DecayCoefficient":
        if not gamma > 0:
            raise DomainError("Markovian rate must be positive")
        return cls("markov", gamma=float(gamma))

    @classmethod
    def zeno(cls, kappa0: float, omega_c: float) -> "DecayCoefficient":
        if not (kappa0 > 0 and omega_c > 0):
            raise DomainError("Zeno parameters must be positive")
        return cls("zeno", kappa0=float(kappa0), omega_c=float(omega_c))

    @classmethod
    def exact(cls, spectrum: NoiseSpectrum, grid: Iterable[float] = ()) -> "DecayCoefficient":
        ts = np.unique(np.asarray(list(grid), dtype=float))
        table = tuple((float(x), float(kappa_of_t(spectrum, x))) for x in ts)
        return cls("exact", spectrum=spectrum, table=table)

    @property
    def zeno_scale(self) -> float:
        """``kappa0 * omega_c`` (Zeno mode only)."""
        return self.kappa0 * self.omega_c

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise DomainError("kappa(t) requires t >= 0")
        if self.mode == "markov":
            out = self.gamma * t
        elif self.mode == "zeno":
            out = (self.kappa0 * self.omega_c * t) ** 2
        else:
            out = kappa_of_t(self.spectrum, t)
        return float(out) if np.ndim(out) == 0 else out

    def rate(self, t):
        """Time derivative ``d kappa / dt``."""
        t = np.asarray(t, dtype=float)
        if self.mode == "markov":
            out = np.full_like(t, self.gamma)
        elif self.mode == "zeno":
            out = 2.0 * (self.kappa0 * self.omega_c) ** 2 * t
        else:
            h = 1e-4 * np.maximum(t, 1e-6)
            out = (kappa_of_t(self.spectrum, t + h) - kappa_of_t(self.spectrum, np.maximum(t - h, 0))) / (
                t + h - np.maximum(t - h, 0))
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> dict:
        if self.mode == "markov":
            return {"mode": "markov", "gamma": self.gamma}
        if self.mode == "zeno":
            return {"mode": "zeno", "kappa0": self.kappa0, "omega_c": self.omega_c}
        return {"mode": "exact", "spectrum": self.spectrum.to_dict()}


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Sampled noise realization on a uniform grid starting at ``t = 0``."""

    t: np.ndarray
    xi: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.t[-1])


def _generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _time_grid(horizon: float, dt: float) -> np.ndarray:
    if not (dt > 0 and horizon >= dt):
        raise DomainError("need dt > 0 and horizon >= dt")
    n = int(math.ceil(horizon / dt - 1e-9))
    return np.arange(n + 1) * (horizon / n)


def _synthesis_band(spec: NoiseSpectrum, horizon: float, dt: float):
    w_min = 2.0 * math.pi / (100.0 * horizon)
    if spec.kind == "flat":
        w_max = math.pi / dt
    else:
        w_max = 20.0 * spec.omega_c
    return w_min, w_max


def synthesis_variance(spec: NoiseSpectrum, horizon: float, dt: float) -> float:
    """Exact variance ``sum_k S(w_k) dw / pi`` of the synthesized process."""
    w, dw = _synthesis_modes(spec, horizon, dt)
    return float(np.sum(spec(w)) * dw / math.pi)


def _synthesis_modes(spec, horizon, dt):
    w_min, w_max = _synthesis_band(spec, horizon, dt)
    dw = (w_max - w_min) / SYNTHESIS_MODES
    w = w_min + (np.arange(SYNTHESIS_MODES) + 0.5) * dw
    return w, dw


def _check_resolution(spec: NoiseSpectrum, dt: float):
    if spec.kind != "flat" and dt * spec.omega_c > 0.1:
        raise ResolutionError(
            f"dt * omega_c = {dt * spec.omega_c:.3g} > 0.1; refine the time step")


def sample_trajectories(spec: NoiseSpectrum, horizon: float, dt: float, seed: int,
                        count: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``count`` independent noise realizations.

    Realization ``i`` uses the counter-based stream ``(seed, start + i)``, so
    any subset can be regenerated independently of the others.

    Returns
    -------
    t : ndarray, shape (n,)
    xi : ndarray, shape (count, n)
    """
    _check_resolution(spec, dt)
    t = _time_grid(horizon, dt)
    step = t[1] - t[0]
    xi = np.empty((count, t.size))
    if spec.kind == "lorentzian":
        # exact Ornstein-Uhlenbeck update
        g, rate = math.sqrt(spec.variance), spec.rate
        decay = math.exp(-rate * step)
        kick = g * math.sqrt(-math.expm1(-2.0 * rate * step))
        z = np.stack([_generator(seed, start + i).standard_normal(t.size) for i in range(count)])
        xi[:, 0] = g * z[:, 0]
        for n in range(1, t.size):
            xi[:, n] = decay * xi[:, n - 1] + kick * z[:, n]
        return t, xi
    w, dw = _synthesis_modes(spec, horizon, dt)
    amp = np.sqrt(spec(w) * dw / math.pi)
    keep = amp > 0
    w, amp = w[keep], amp[keep]
    cos_wt, sin_wt = np.cos(np.outer(w, t)), np.sin(np.outer(w, t))
    for i in range(count):
        ab = _generator(seed, start + i).standard_normal((2, w.size)) * amp
        xi[i] = ab[0] @ cos_wt + ab[1] @ sin_wt
    return t, xi


def sample_trajectory(spec: NoiseSpectrum, horizon: float, dt: float, seed: int,
                      index: int = 0) -> Trajectory:
    """Sample one stationary Gaussian realization of ``xi(t)``.

    Lorentzian spectra use the exact Ornstein-Uhlenbeck update; the other
    kinds use spectral synthesis with Gaussian quadrature amplitudes on the
    band ``[2 pi / (100 horizon), 20 omega_c]`` (``pi / dt`` for flat).

    Raises
    ------
    ResolutionError
        If ``dt * omega_c > 0.1``.
    """
    t, xi = sample_trajectories(spec, horizon, dt, seed, 1, start=index)
    return Trajectory(t, xi[0])


def integrated_phase(trajectory: Trajectory, t: float) -> float:
    """Trapezoid-rule value of ``Integral_0^t xi(s) ds``.

    Times between grid points use linear interpolation of ``xi`` on the
    last partial interval.
    """
    return float(_integrate_rows(trajectory.t, trajectory.xi[None, :], t)[0])


def _integrate_rows(grid: np.ndarray, xi: np.ndarray, t: float) -> np.ndarray:
    if not (0.0 <= t <= grid[-1] * (1 + 1e-12)):
        raise RangeError(f"t = {t} outside trajectory horizon [0, {grid[-1]}]")
    t = min(t, grid[-1])
    n = int(np.searchsorted(grid, t, side="right") - 1)
    n = min(n, grid.size - 1)
    full = np.zeros(xi.shape[0])
    if n > 0:
        full = integrate.trapezoid(xi[:, : n + 1], grid[: n + 1], axis=1)
    rem = t - grid[n]
    if rem > 0:
        frac = rem / (grid[n + 1] - grid[n])
        end = xi[:, n] + frac * (xi[:, n + 1] - xi[:, n])
        full = full + 0.5 * rem * (xi[:, n] + end)
    return full


def integrated_phases(grid: np.ndarray, xi: np.ndarray, t: float) -> np.ndarray:
    """Row-wise :func:`integrated_phase` for a batch of trajectories."""
    return _integrate_rows(np.asarray(grid), np.atleast_2d(xi), t)
