"""Exact collective-spin simulator in the Dicke basis.

States of ``N = 2J`` qubits in the symmetric sector are stored as dense
``(2J+1) x (2J+1)`` density matrices with rows and columns ordered
``m = J, J-1, ..., -J``.

Encoding with nonlinearity order ``k`` and collective dephasing act
elementwise::

    rho_mm'(t) = exp(-i b t (m^k - m'^k)) exp(-kappa (m - m')^2) rho_mm'(0)

which is the noise average of ``U = exp(-i b t J_z^k - i J_z Integral xi)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import DomainError, NormalizationError
from .noise import NoiseSpectrum, integrated_phases, sample_trajectories

__all__ = [
    "StateSpec", "DickeDensity", "EncodingSpec", "spin_matrices", "build_initial",
    "propagate", "observable", "expect", "qfi_exact", "qfi_of", "trajectory_average",
]


def m_values(J: float) -> np.ndarray:
    """Magnetic quantum numbers ``J, J-1, ..., -J``."""
    return J - np.arange(int(round(2 * J)) + 1)


def _check_J(J: float) -> float:
    twoJ = 2 * J
    if twoJ < 1 or abs(twoJ - round(twoJ)) > 1e-12:
        raise DomainError(f"J must be a positive half-integer, got {J}")
    return round(twoJ) / 2


def spin_matrices(J: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense ``(J_x, J_y, J_z)`` in the ordered Dicke basis."""
    J = _check_J(J)
    m = m_values(J)
    # <m+1| J_+ |m> on the superdiagonal (row index m+1 precedes m)
    up = np.sqrt(J * (J + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(up, 1).astype(complex)
    jx = 0.5 * (jp + jp.conj().T)
    jy = -0.5j * (jp - jp.conj().T)
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


@dataclass(frozen=True)
class StateSpec:
    """Initial-state description.

    ``kind`` is one of ``"css"``, ``"oats"``, ``"phi"`` or ``"phi_prime"``.
    CSS is ``exp(-i phi J_z) exp(-i theta J_y)|J,J>``; OATS is
    ``exp(-i theta J_y) exp(-i beta J_z) exp(-i mu J_x^2)|J,J>``.
    """

    kind: str
    N: int
    theta: float = 0.0
    phi: float = 0.0
    mu: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("css", "oats", "phi", "phi_prime"):
            raise DomainError(f"unknown state kind {self.kind!r}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError("N must be a positive integer")
        if not 0.0 <= self.theta <= math.pi + 1e-15:
            raise DomainError("theta must lie in [0, pi]")
        if self.kind in ("phi", "phi_prime") and self.N % 2:
            raise DomainError("Phi states need even N so that |J,0> exists")

    @property
    def J(self) -> float:
        return self.N / 2

    @classmethod
    def css(cls, N, theta, phi=0.0):
        return cls("css", int(N), theta=float(theta), phi=float(phi) % (2 * math.pi))

    @classmethod
    def oats(cls, N, mu, beta, theta=0.0):
        return cls("oats", int(N), theta=float(theta), mu=float(mu), beta=float(beta))

    @classmethod
    def phi_state(cls, N):
        return cls("phi", int(N))

    @classmethod
    def phi_prime(cls, N):
        return cls("phi_prime", int(N))


@dataclass(frozen=True)
class EncodingSpec:
    """Signal encoding ``exp(-i b t J_z^k)`` with operating point ``b0``."""

    k: int = 2
    b: float = 0.0
    t: float = 0.0
    b0: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DomainError("k must be a positive integer")
        if self.t < 0:
            raise DomainError("t must be non-negative")

    @property
    def db(self) -> float:
        return self.b - self.b0


class DickeDensity:
    """Immutable density matrix in the Dicke basis.

    Parameters
    ----------
    J : float
        Total spin (half-integer).
    mat : array_like
        Complex ``(2J+1, 2J+1)`` matrix. Hermiticity and unit trace are
        checked to ``1e-10``; :meth:`check` adds positivity.
    """

    __slots__ = ("J", "mat")

    def __init__(self, J: float, mat, validate: bool = True):
        J = _check_J(J)
        mat = np.array(mat, dtype=complex)
        d = int(round(2 * J)) + 1
        if mat.shape != (d, d):
            raise DomainError(f"density shape {mat.shape} does not match J = {J}")
        mat.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "mat", mat)
        if validate:
            scale = max(1.0, float(np.abs(mat).max()))
            if np.abs(mat - mat.conj().T).max() > 1e-10 * scale:
                raise NormalizationError("density matrix is not Hermitian")
            if abs(np.trace(mat) - 1.0) > 1e-10:
                raise NormalizationError(f"trace {np.trace(mat).real:.12g} != 1")

    def __setattr__(self, name, value):
        raise AttributeError("DickeDensity is immutable")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def m(self) -> np.ndarray:
        return m_values(self.J)

    def check(self, tol: float = 1e-10) -> None:
        """Raise :class:`NormalizationError` unless positive semidefinite."""
        low = np.linalg.eigvalsh(self.mat).min()
        if low < -tol:
            raise NormalizationError(f"negative eigenvalue {low:.3g}")

    def to_json(self) -> str:
        return json.dumps({"J": self.J, "re": self.mat.real.tolist(), "im": self.mat.imag.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "DickeDensity":
        data = json.loads(text)
        return cls(data["J"], np.array(data["re"]) + 1j * np.array(data["im"]))

    def __repr__(self):
        return f"DickeDensity(J={self.J}, dim={self.dim})"


def _pure(J: float, psi: np.ndarray) -> DickeDensity:
    psi = psi / np.linalg.norm(psi)
    return DickeDensity(J, np.outer(psi, psi.conj()))


def css_vector(J: float, theta: float, phi: float = 0.0) -> np.ndarray:
    """Amplitudes of ``exp(-i phi J_z) exp(-i theta J_y)|J,J>``."""
    m = m_values(J)
    n = int(round(2 * J))
    weights = stats.binom.pmf(np.round(J + m).astype(int), n, math.cos(theta / 2) ** 2)
    return np.sqrt(weights) * np.exp(-1j * phi * m)


def _expm_hermitian(h: np.ndarray, scale: complex) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(scale * w)) @ v.conj().T


def build_initial(spec: StateSpec) -> DickeDensity:
    """Pure initial state described by ``spec``."""
    J = spec.J
    d = spec.N + 1
    if spec.kind == "css":
        return _pure(J, css_vector(J, spec.theta, spec.phi))
    if spec.kind in ("phi", "phi_prime"):
        psi = np.zeros(d, complex)
        psi[0] = 1.0
        psi[int(round(J))] = 1.0 if spec.kind == "phi" else 1j
        return _pure(J, psi)
    jx, jy, jz = spin_matrices(J)
    psi = np.zeros(d, complex)
    psi[0] = 1.0
    psi = _expm_hermitian((jx @ jx).real, -1j * spec.mu) @ psi
    psi = np.exp(-1j * spec.beta * m_values(J)) * psi
    if spec.theta:
        psi = _expm_hermitian(jy, -1j * spec.theta) @ psi
    return _pure(J, psi)


def encoding_phases(J: float, enc: EncodingSpec) -> np.ndarray:
    """Matrix of ``m^k - m'^k``."""
    mk = m_values(J) ** enc.k
    return mk[:, None] - mk[None, :]


def propagate(rho0: DickeDensity, enc: EncodingSpec, kappa: float) -> DickeDensity:
    """Noise-averaged encoding of ``rho0`` with decay coefficient ``kappa``."""
    if kappa < 0:
        raise DomainError("kappa must be non-negative")
    m = rho0.m
    dm = m[:, None] - m[None, :]
    factor = np.exp(-1j * enc.b * enc.t * encoding_phases(rho0.J, enc) - kappa * dm**2)
    return DickeDensity(rho0.J, rho0.mat * factor, validate=False)


_OBSERVABLES = ("Jx", "Jy", "Jz", "Jx2", "Jy2", "Jz2", "Jz4", "SurvivalPhi", "SurvivalPhiPrime")


def observable(J: float, name: str, eta: float = 0.0) -> np.ndarray:
    """Dense Hermitian matrix of a named observable.

    ``"Nonlinear"`` is ``exp(i eta J_x^2 / 2) J_y exp(-i eta J_x^2 / 2)``.
    Survival observables are ``2|Phi><Phi| - 1`` with eigenvalues ``+-1``.
    """
    jx, jy, jz = spin_matrices(J)
    table = {
        "Jx": lambda: jx, "Jy": lambda: jy, "Jz": lambda: jz,
        "Jx2": lambda: jx @ jx, "Jy2": lambda: jy @ jy, "Jz2": lambda: jz @ jz,
        "Jz4": lambda: np.linalg.matrix_power(jz, 4),
    }
    if name in table:
        return table[name]()
    if name in ("SurvivalPhi", "SurvivalPhiPrime"):
        kind = "phi" if name == "SurvivalPhi" else "phi_prime"
        proj = build_initial(StateSpec(kind, int(round(2 * J)))).mat
        return 2.0 * proj - np.eye(proj.shape[0])
    if name == "Nonlinear":
        u = _expm_hermitian((jx @ jx).real, 0.5j * eta)
        return u @ jy @ u.conj().T
    raise DomainError(f"unknown observable {name!r}")


def expect(rho: DickeDensity, obs, eta: float = 0.0) -> float:
    """``Tr[rho O]`` for a named observable or an explicit matrix."""
    mat = observable(rho.J, obs, eta) if isinstance(obs, str) else np.asarray(obs)
    if mat.shape != rho.mat.shape:
        raise DomainError(f"observable shape {mat.shape} does not match state {rho.mat.shape}")
    return float(np.einsum("ij,ji->", rho.mat, mat).real)


def qfi_exact(rho, drho) -> tuple[float, np.ndarray]:
    """Quantum Fisher information and SLD of a parametrized state.

    Parameters
    ----------
    rho : DickeDensity or ndarray
        State at the operating point.
    drho : ndarray
        Derivative of the state with respect to the parameter.

    Returns
    -------
    F : float
        Per-shot QFI ``Tr[rho L^2]``.
    L : ndarray
        Symmetric logarithmic derivative; pairs with ``p_i + p_j`` below
        ``1e-12 max p`` are dropped.
    """
    mat = rho.mat if isinstance(rho, DickeDensity) else np.asarray(rho)
    p, v = np.linalg.eigh(mat)
    d = v.conj().T @ drho @ v
    s = p[:, None] + p[None, :]
    keep = s > 1e-12 * p.max()
    coef = np.where(keep, 2.0 / np.where(keep, s, 1.0), 0.0)
    L_eig = coef * d
    F = float(np.sum(np.where(keep, 2.0 * np.abs(d) ** 2 / np.where(keep, s, 1.0), 0.0)))
    return F, v @ L_eig @ v.conj().T


def qfi_of(rho0: DickeDensity, enc: EncodingSpec, kappa: float) -> tuple[float, np.ndarray]:
    """QFI with respect to ``b`` of the encoded state at ``b = enc.b0``."""
    at_b0 = EncodingSpec(enc.k, enc.b0, enc.t, enc.b0)
    rho = propagate(rho0, at_b0, kappa)
    drho = -1j * enc.t * encoding_phases(rho0.J, enc) * rho.mat
    return qfi_exact(rho, drho)


def trajectory_average(rho0: DickeDensity, enc: EncodingSpec, noise: NoiseSpectrum, M: int,
                       seed: int = 0, dt: float | None = None
                       ) -> tuple[DickeDensity, np.ndarray]:
    """Monte Carlo average of ``U_xi rho U_xi^dagger`` over noise realizations.

    Each realization contributes the phase ``exp(-i (m - m') Integral_0^t xi)``
    on top of the noiseless encoding.

    Returns
    -------
    rho_bar : DickeDensity
        Empirical average.
    stderr : ndarray (complex)
        Standard errors of the real parts (real component) and imaginary
        parts (imaginary component) of each element.
    """
    if M < 1:
        raise DomainError("need at least one trajectory")
    signal = propagate(rho0, enc, 0.0).mat
    if enc.t == 0:
        return DickeDensity(rho0.J, signal), np.zeros_like(signal)
    if dt is None:
        dt = enc.t / 200.0
        if noise.kind != "flat":
            dt = min(dt, 0.1 / noise.omega_c)
    grid, xi = sample_trajectories(noise, enc.t, dt, seed, M)
    phase = integrated_phases(grid, xi, enc.t)
    m = rho0.m
    dm_values = np.arange(-rho0.dim + 1, rho0.dim)
    # per-realization factor depends only on m - m'
    factors = np.exp(-1j * np.outer(phase, dm_values))
    mean = factors.mean(axis=0)
    ddof = 1 if M > 1 else 0
    var_re = factors.real.var(axis=0, ddof=ddof) / M
    var_im = factors.imag.var(axis=0, ddof=ddof) / M
    cov = np.zeros_like(var_re)
    if M > 1:
        cov = np.sum((factors.real - mean.real) * (factors.imag - mean.imag), axis=0) / (M - 1) / M
    idx = (m[:, None] - m[None, :]).round().astype(int) + rho0.dim - 1
    avg = signal * mean[idx]
    sr, si = signal.real, signal.imag
    vr, vi, c = var_re[idx], var_im[idx], cov[idx]
    se_re = np.sqrt(np.maximum(sr**2 * vr + si**2 * vi - 2 * sr * si * c, 0.0))
    se_im = np.sqrt(np.maximum(sr**2 * vi + si**2 * vr + 2 * sr * si * c, 0.0))
    return DickeDensity(rho0.J, avg), se_re + 1j * se_im
