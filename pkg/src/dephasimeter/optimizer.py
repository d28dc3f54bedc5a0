"""Protocol optimization over encoding time and polar angle, scaling fits and the reference scaling table.

Objectives are the single-parameter uncertainty ``db(theta, tau)`` for a
fixed total time ``T``. Three evaluation paths exist: closed-form moment
expressions (CSS and Phi), the Gaussian phase-space QFI (any one-axis
twisted state) and the exact Dicke engine (N <= 512).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import closed_form, gaussian
from .dicke import EncodingSpec, StateSpec, build_initial, expect, observable, propagate, qfi_of
from .errors import DomainError, OptimizationError

__all__ = [
    "COARSE_POINTS", "THETA_MARGIN", "EXACT_MAX_N", "TAU_BRACKET", "OptimizationResult", "ScalingFit", "SweepPlan",
    "golden_section", "objective", "optimize_protocol", "characteristic_time", "fit_scaling",
    "extrapolate_prefactor", "sweep", "audit", "REFERENCE_TABLE", "table1",
]

COARSE_POINTS = 64
THETA_MARGIN = 1e-3
EXACT_MAX_N = 512
TAU_BRACKET = (1e-3, 1e2)
_GOLD = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class OptimizationResult:
    """Minimizer of ``db`` with validity information.

    ``valid`` is ``None`` when no phase-space validity check applies.
    ``at_boundary`` marks a minimizer pinned to a bracket edge.
    """

    state: str
    regime: str
    path: str
    N: int
    T: float
    tau: float
    theta: float
    db: float
    valid: bool | None = None
    validity_status: str | None = None
    at_boundary: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# one-dimensional minimization


def golden_section(f: Callable[[float], float], lo: float, hi: float, *, log: bool = False,
                   rtol: float = 1e-9, coarse: int = COARSE_POINTS, max_iter: int = 200):
    """Minimize ``f`` on ``[lo, hi]`` after a coarse scan.

    The scan locates the best of ``coarse`` points; golden-section search
    then refines inside the neighbouring cells. ``log=True`` scans and
    refines in ``log x``.

    Returns
    -------
    tuple
        ``(x, f(x), at_boundary)``.

    Raises
    ------
    OptimizationError
        If no finite value is found on the scan; the scanned profile is
        attached as ``profile``.
    """
    if not lo < hi:
        raise DomainError("empty bracket")
    fwd = (lambda u: math.exp(u)) if log else (lambda u: u)
    a, b = (math.log(lo), math.log(hi)) if log else (lo, hi)
    grid = np.linspace(a, b, coarse)
    vals = np.array([_safe(f, fwd(u)) for u in grid])
    if not np.isfinite(vals).any():
        raise OptimizationError("objective is not finite anywhere on the bracket",
                                profile=list(zip(map(fwd, grid), vals)))
    i = int(np.nanargmin(np.where(np.isfinite(vals), vals, np.inf)))
    u_lo, u_hi = grid[max(i - 1, 0)], grid[min(i + 1, coarse - 1)]
    g = lambda u: _safe(f, fwd(u))  # noqa: E731
    c, d = u_hi - _GOLD * (u_hi - u_lo), u_lo + _GOLD * (u_hi - u_lo)
    fc, fd = g(c), g(d)
    for _ in range(max_iter):
        if abs(u_hi - u_lo) <= rtol * max(abs(c), abs(d), 1e-300 if log else abs(hi - lo)):
            break
        if fc < fd:
            u_hi, d, fd = d, c, fc
            c = u_hi - _GOLD * (u_hi - u_lo)
            fc = g(c)
        else:
            u_lo, c, fc = c, d, fd
            d = u_lo + _GOLD * (u_hi - u_lo)
            fd = g(d)
    u, fu = (c, fc) if fc < fd else (d, fd)
    if vals[i] < fu:
        u, fu = grid[i], vals[i]
    edge = (i in (0, coarse - 1)) and min(abs(u - a), abs(u - b)) <= (grid[1] - grid[0])
    return fwd(u), float(fu), bool(edge)


def _safe(f, x):
    try:
        v = f(x)
    except (DomainError, OverflowError, ZeroDivisionError, FloatingPointError):
        return math.inf
    return v if math.isfinite(v) else math.inf


# --------------------------------------------------------------------------
# objectives


def _state_name(state) -> str:
    if isinstance(state, str):
        return state
    return f"oats(mu={state[1]:.6g},beta={state[2]:.6g})"


def _oats_params(state, J):
    if isinstance(state, str):
        return gaussian.preset(state, J)
    kind, mu, beta = state
    if kind != "oats":
        raise DomainError(f"unknown state {state!r}")
    return float(mu), float(beta)


def _regime(decay) -> str:
    return "noiseless" if decay is None else decay.mode


def characteristic_time(state, decay, N: int) -> float:
    """Scale of the optimal encoding time, used to place the ``tau`` bracket.

    Zeno: ``1/(kappa0 omega_c sqrt(J delta))``; Markovian:
    ``1/(gamma J^{1/3})``, or ``1/(gamma J^2)`` for the Phi state.
    """
    J = N / 2
    if decay is None:
        return 1.0
    if decay.mode == "zeno":
        if state == "phi":
            delta = J
        else:
            delta = gaussian.effective_parameters(*_oats_params(state, J), J)[0]
        return 1.0 / (decay.zeno_scale * math.sqrt(J * delta))
    if decay.mode == "markov":
        return 1.0 / (decay.gamma * (J * J if state == "phi" else J ** (1 / 3)))
    # exact spectra: small-time Zeno scale from the curvature of kappa(t)
    t0 = 1e-3 / decay.spectrum.omega_c
    return 1.0 / (math.sqrt(decay(t0)) / t0 * math.sqrt(J))


def objective(state, decay, N: int, T: float, path: str = "closedform", readout: str = "Jy",
              qfi_terms: str = "full") -> Callable[[float, float], float]:
    """``db(theta, tau)`` for one protocol family.

    Parameters
    ----------
    state : str or tuple
        ``"css"``, ``"phi"``, ``"pe"``, ``"ku"`` or ``("oats", mu, beta)``.
    decay : DecayCoefficient or None
        ``None`` means noiseless.
    path : {"closedform", "gaussian", "exact"}
    readout : {"Jy", "ratio", "qcrb"}
        For the closed-form CSS path: ``J_y`` method of moments, the ratio
        estimator or the noiseless QCRB. Other paths always return the QCRB.
    qfi_terms : {"full", "leading"}
        Gaussian path: total QFI or its leading term.
    """
    J = N / 2
    kappa = (lambda tau: 0.0) if decay is None else decay
    if path == "closedform":
        if state == "phi":
            if N % 2:
                raise DomainError("Phi state needs even N")
            return lambda theta, tau: closed_form.phi_uncertainty(tau, kappa(tau), int(J), T)["qcrb"]
        if state != "css":
            raise DomainError("closed-form path supports css and phi only")
        if readout == "Jy":
            return lambda theta, tau: closed_form.css_noisy_uncertainty(theta, tau, kappa(tau), N, T)
        if readout == "ratio":
            return lambda theta, tau: closed_form.css_ratio_uncertainty(theta, tau, kappa(tau), N, T)
        if readout == "qcrb":
            if decay is not None:
                raise DomainError("closed-form CSS QCRB is noiseless only")
            return lambda theta, tau: 1 / math.sqrt(
                closed_form.css_qfi_noiseless(theta, N, tau, T).exact)
        raise DomainError(f"unknown readout {readout!r}")
    if path == "gaussian":
        if state == "phi":
            raise DomainError("Phi state is not Gaussian")
        mu, beta = _oats_params(state, J)
        key = {"full": "total", "leading": "F_A"}[qfi_terms]

        def f(theta, tau):
            gs = gaussian.from_oats(mu, beta, J, theta, kappa(tau))
            return 1 / math.sqrt(gaussian.qfi(gs, tau, T)[key])
        return f
    if path == "exact":
        if N > EXACT_MAX_N:
            raise DomainError(f"exact path is capped at N = {EXACT_MAX_N}")
        return _exact_objective(state, kappa, N, T, readout)
    raise DomainError(f"unknown path {path!r}")


def _exact_objective(state, kappa, N, T, readout):
    J = N / 2
    if state == "phi":
        rho_phi = build_initial(StateSpec.phi_state(N))
        return lambda theta, tau: 1 / math.sqrt(
            T / tau * qfi_of(rho_phi, EncodingSpec(2, 0.0, tau), kappa(tau))[0])
    cache = {}

    def initial(theta):
        if theta not in cache:
            cache.clear()
            if state == "css":
                cache[theta] = build_initial(StateSpec.css(N, theta))
            else:
                mu, beta = _oats_params(state, J)
                cache[theta] = build_initial(StateSpec.oats(N, mu, beta, theta))
        return cache[theta]

    if state == "css" and readout == "Jy":
        jy = observable(J, "Jy")
        m2 = np.arange(J, -J - 1, -1.0) ** 2
        d2 = m2[:, None] - m2[None, :]

        def f(theta, tau):
            rho = propagate(initial(theta), EncodingSpec(2, 0.0, tau), kappa(tau))
            mean = expect(rho, jy)
            var = expect(rho, jy @ jy) - mean * mean
            slope = float(np.real(np.sum((-1j * tau * d2 * rho.mat) * jy.T)))
            return math.sqrt(var / ((T / tau) * slope * slope))
        return f

    def f(theta, tau):
        F = qfi_of(initial(theta), EncodingSpec(2, 0.0, tau), kappa(tau))[0]
        return 1 / math.sqrt(T / tau * F)
    return f


# --------------------------------------------------------------------------
# nested optimization


def optimize_protocol(state, decay, N: int, T: float, path: str = "closedform", *,
                      readout: str = "Jy", qfi_terms: str = "full", theta: float | None = None,
                      tau: float = 1.0, tau_bracket: tuple[float, float] = TAU_BRACKET,
                      coarse: int = COARSE_POINTS, allow_boundary: bool = True) -> OptimizationResult:
    """Minimize ``db`` over ``theta`` (outer) and ``tau`` (inner).

    Parameters
    ----------
    theta : float, optional
        Fix the polar angle instead of optimizing it.
    tau : float
        Encoding time for noiseless runs, where only ``theta`` is optimized.
    tau_bracket : tuple
        Multiples of :func:`characteristic_time` bounding the ``tau`` search.
    allow_boundary : bool
        If false, a minimizer at a bracket edge raises.

    Raises
    ------
    OptimizationError
        On scan failure, or at a bracket edge with ``allow_boundary=False``.
    """
    f = objective(state, decay, N, T, path, readout, qfi_terms)
    t_c = characteristic_time(state, decay, N)
    lo, hi = tau_bracket[0] * t_c, tau_bracket[1] * t_c
    edges = {"tau": False}

    def inner(th):
        if decay is None:
            return tau, f(th, tau)
        x, v, edge = golden_section(lambda u: f(th, u), lo, hi, log=True, coarse=coarse)
        edges["tau"] = edge
        return x, v

    theta_free = theta is None and state != "phi"
    if theta_free:
        th, _, th_edge = golden_section(lambda th: inner(th)[1], THETA_MARGIN,
                                        math.pi / 2 - THETA_MARGIN, coarse=coarse)
    else:
        th, th_edge = (math.pi / 4 if theta is None else theta), False
    tau_opt, db = inner(th)
    at_boundary = bool(th_edge or edges["tau"])
    if at_boundary and not allow_boundary:
        raise OptimizationError(f"minimizer at bracket edge (theta={th:.4g}, tau={tau_opt:.4g})")
    valid = status = None
    if path == "gaussian":
        mu, beta = _oats_params(state, N / 2)
        rep = gaussian.from_oats(mu, beta, N / 2, th, 0.0 if decay is None else decay(tau_opt)).validity
        valid, status = rep.valid, rep.status
    return OptimizationResult(_state_name(state), _regime(decay), path, int(N), float(T), float(tau_opt),
                              float(th), float(db), valid, status, at_boundary)


def audit(result: OptimizationResult, state, decay, probes: int = 100, seed: int = 0,
          path: str | None = None, **kwargs) -> float:
    """Smallest ratio ``db(probe) / db_opt`` over random probes near the optimum.

    Probes draw ``theta`` uniformly in its interior range and ``tau`` log-uniformly
    within a factor 10 of ``tau_opt``. A value below 1 flags a missed minimum.
    """
    f = objective(state, decay, result.N, result.T, path or result.path, **kwargs)
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(probes):
        th = rng.uniform(THETA_MARGIN, math.pi / 2 - THETA_MARGIN) if state != "phi" else result.theta
        tau = result.tau if decay is None else result.tau * 10 ** rng.uniform(-1, 1)
        worst = min(worst, _safe(lambda u: f(th, u), tau) / result.db)
    return worst


# --------------------------------------------------------------------------
# scaling fits


@dataclass(frozen=True)
class ScalingFit:
    """Log-log least-squares fit ``db = A N^p`` over ``window``.

    ``prefactor`` is ``db N^{-p}`` at the largest ``N`` in the window; its
    standard error propagates the exponent error at that ``N``.
    """

    exponent: float
    exponent_se: float
    prefactor: float
    prefactor_se: float
    window: tuple[int, int]
    points: int
    residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def fit_scaling(Ns, values, *, exclude_decades: float = 1.0, min_points: int = 6,
                min_span_decades: float = 1.5, fixed_exponent: float | None = None) -> ScalingFit:
    """Fit ``log db`` against ``log N``.

    Parameters
    ----------
    exclude_decades : float
        Points with ``N < N_min 10^exclude_decades`` are dropped as
        pre-asymptotic.
    min_span_decades : float
        Minimum span of the full sweep for an exponent claim.
    fixed_exponent : float, optional
        Report the prefactor for this exponent instead of the fitted one.

    Raises
    ------
    DomainError
        If the sweep is too short or the window holds too few points.
    """
    N = np.asarray(Ns, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(N)
    N, v = N[order], v[order]
    span = math.log10(N[-1] / N[0])
    if span < min_span_decades - 1e-9:
        raise DomainError(f"sweep spans {span:.2f} decades; at least {min_span_decades} required")
    keep = N >= N[0] * 10**exclude_decades * (1 - 1e-12)
    if keep.sum() < min_points:
        raise DomainError(f"fit window holds {int(keep.sum())} points; at least {min_points} required")
    x, y = np.log(N[keep]), np.log(v[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    p, p_se = float(coef[0]), float(math.sqrt(cov[0, 0]))
    p_use = p if fixed_exponent is None else fixed_exponent
    pref = float(v[keep][-1] * N[keep][-1] ** (-p_use))
    pref_se = 0.0 if fixed_exponent is not None else abs(pref) * p_se * math.log(N[keep][-1])
    return ScalingFit(p, p_se, pref, pref_se, (int(N[keep][0]), int(N[keep][-1])), int(keep.sum()),
                      float(np.max(np.abs(np.expm1(resid)))))


def extrapolate_prefactor(Ns, prefactors, correction: float) -> float:
    """Extrapolate ``c(N) = c_inf + a N^{-correction}`` to ``N -> inf`` by least squares."""
    N = np.asarray(Ns, dtype=float)
    A = np.vstack([np.ones_like(N), N**-correction]).T
    coef, *_ = np.linalg.lstsq(A, np.asarray(prefactors, dtype=float), rcond=None)
    return float(coef[0])


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepPlan:
    """Geometric ``N`` grid for one protocol family.

    ``Ns`` holds even integers, strictly increasing.
    """

    state: object
    decay: object
    path: str = "closedform"
    Ns: tuple = field(default_factory=tuple)
    T: float = 1.0
    readout: str = "Jy"
    qfi_terms: str = "full"
    theta: float | None = None
    tau: float = 1.0

    def __post_init__(self):
        Ns = np.asarray(self.Ns)
        if Ns.size == 0 or np.any(np.diff(Ns) <= 0) or np.any(Ns < 2):
            raise DomainError("N grid must be strictly increasing and >= 2")
        if self.path == "exact" and Ns[-1] > EXACT_MAX_N:
            raise DomainError(f"exact path is capped at N = {EXACT_MAX_N}")
        if self.T <= 0 or self.tau <= 0:
            raise DomainError("T and tau must be positive")

    @staticmethod
    def geometric(lo_exp: float, hi_exp: float, per_octave: int = 4) -> tuple:
        """Even integers near ``2^k`` for ``k`` from ``lo_exp`` to ``hi_exp``."""
        ks = np.arange(lo_exp, hi_exp + 1e-9, 1 / per_octave)
        Ns = sorted({int(2 * round(2**k / 2)) for k in ks})
        return tuple(Ns)


def sweep(plan: SweepPlan, workers: int = 1) -> list[OptimizationResult]:
    """Optimize every ``N`` of the plan; results are sorted by ``N``."""

    def job(N):
        return optimize_protocol(plan.state, plan.decay, N, plan.T, plan.path, readout=plan.readout,
                                 qfi_terms=plan.qfi_terms, theta=plan.theta, tau=plan.tau)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(job, plan.Ns))
    else:
        out = [job(N) for N in plan.Ns]
    return sorted(out, key=lambda r: r.N)


# --------------------------------------------------------------------------
# reference scaling table


REFERENCE_TABLE = {
    "css": {"zeno": (math.sqrt(6 * math.sqrt(3)), -1.25), "markov": (2.0, -1.0),
            "noiseless": (2.0, -1.5)},
    "ku": {"zeno": (2 ** -0.25 * 3 ** (2 / 3), -17 / 12), "markov": (2.0, -1.0)},
    "pe": {"zeno": (3 ** 1.25 / 2 ** 0.75, -1.5), "markov": (2.0, -1.0), "noiseless": (4.0, -2.0)},
    "phi": {"zeno": (4 * math.exp(0.25), -1.5), "markov": (2 * math.sqrt(2 * math.e), -1.0),
            "noiseless": (4.0, -2.0)},
}
"""Printed reference constants ``(prefactor, exponent)`` in units of
``sqrt(kappa0 omega_c / T)``, ``sqrt(gamma / T)`` and ``sqrt(1 / (tau T))``."""


def _row_path(state):
    return "closedform" if state in ("css", "phi") else "gaussian"


def table1(T: float = 1.0, kappa0: float = 1.0, omega_c: float = 1.0, gamma: float = 1.0, *,
           Ns=None, tolerance: float = 0.10, qfi_terms: str = "leading", workers: int = 1) -> dict:
    """Numerically optimized scaling table with the printed reference constants alongside.

    Each (row, regime) entry sweeps ``N``, fits the exponent and reports the
    prefactor at the largest ``N`` for the printed exponent, in the printed
    units. Disagreements above ``tolerance`` are collected under
    ``discrepancies``.
    """
    from .noise import DecayCoefficient

    Ns = tuple(Ns) if Ns is not None else SweepPlan.geometric(6, 12)
    regimes = {"zeno": (DecayCoefficient.zeno(kappa0, omega_c), math.sqrt(kappa0 * omega_c / T)),
               "markov": (DecayCoefficient.markov(gamma), math.sqrt(gamma / T)),
               "noiseless": (None, math.sqrt(1.0 / T))}
    # drop the smallest decade when the grid is long enough to keep three points beyond it
    exclude = 1.0 if sum(N >= 10 * Ns[0] for N in Ns) >= 3 else 0.0
    rows, discrepancies = [], []
    for state, printed in REFERENCE_TABLE.items():
        for regime, (pref_ref, exp_ref) in printed.items():
            decay, unit = regimes[regime]
            path = _row_path(state)
            if state == "css" and regime == "noiseless":
                plan = SweepPlan(state, decay, path, Ns, T, readout="qcrb")
            else:
                plan = SweepPlan(state, decay, path, Ns, T, qfi_terms=qfi_terms)
            results = sweep(plan, workers)
            dbs = [r.db / unit for r in results]
            fit = fit_scaling(Ns, dbs, exclude_decades=exclude, min_span_decades=0.0, min_points=3)
            pref = dbs[-1] * Ns[-1] ** (-exp_ref)
            rel = pref / pref_ref - 1
            row = {"state": state, "regime": regime, "path": path, "exponent": fit.exponent,
                   "exponent_se": fit.exponent_se, "prefactor": pref, "reference_prefactor": pref_ref,
                   "reference_exponent": exp_ref, "relative_difference": rel, "N_max": Ns[-1],
                   "valid": results[-1].valid, "at_boundary": any(r.at_boundary for r in results)}
            rows.append(row)
            if abs(rel) > tolerance or abs(fit.exponent - exp_ref) > 0.05:
                discrepancies.append({k: row[k] for k in ("state", "regime", "prefactor", "reference_prefactor",
                                                          "relative_difference", "exponent", "reference_exponent")})
    return {"parameters": {"T": T, "kappa0": kappa0, "omega_c": omega_c, "gamma": gamma,
                           "N": list(Ns), "qfi_terms": qfi_terms, "tolerance": tolerance},
            "rows": rows, "discrepancies": discrepancies}
