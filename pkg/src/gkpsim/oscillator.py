"""Truncated Fock-space numerics for a single harmonic oscillator.

Phase-space convention: alpha = q + i p with [q, p] = i/2, so that a coherent
state |alpha> has <q> = Re(alpha) and <p> = Im(alpha). Hence

    q = (a + a^dag) / 2,    p = (a - a^dag) / (2i),
    D(alpha) = exp(alpha a^dag - alpha^* a) = exp(2i (Im(alpha) q - Re(alpha) p)).

Pure states are 1-D complex arrays of Fock amplitudes, mixed states are 2-D
density matrices. Operators are dense N x N complex arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm

PHASE_SPACE_CONVENTION = "alpha = q + ip, [q, p] = i/2"

DEFAULT_FOCK_DIM = 256
MAX_SQUEEZING = 2.0


class TruncationError(ValueError):
    """Raised when an operation would leak out of the truncated Fock space."""


@dataclass(frozen=True)
class Conventions:
    """Numerical setting shared by every module: Fock truncation and the
    (fixed) phase-space convention."""

    fock_dim: int = DEFAULT_FOCK_DIM
    max_squeezing: float = MAX_SQUEEZING

    def __post_init__(self):
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")

    @property
    def phase_space_convention(self) -> str:
        return PHASE_SPACE_CONVENTION

    @property
    def max_displacement(self) -> float:
        """Largest |alpha| accepted by the displacement guard (|alpha|^2 <= N/8)."""
        return math.sqrt(self.fock_dim / 8)


DEFAULT = Conventions()


def ladder_operators(conv: Conventions = DEFAULT):
    """Return ``(a, a_dag, n, q, p)`` as dense matrices."""
    dim = conv.fock_dim
    if dim < 2:
        raise ValueError("fock_dim must be >= 2")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    a_dag = a.conj().T
    n = np.diag(np.arange(dim, dtype=float)).astype(complex)
    q = (a + a_dag) / 2
    p = (a - a_dag) / 2j
    return a, a_dag, n, q, p


def fock_state(n: int, conv: Conventions = DEFAULT) -> np.ndarray:
    psi = np.zeros(conv.fock_dim, dtype=complex)
    psi[n] = 1.0
    return psi


def vacuum(conv: Conventions = DEFAULT) -> np.ndarray:
    return fock_state(0, conv)


def coherent_series(alpha: complex, conv: Conventions = DEFAULT) -> np.ndarray:
    """Coherent state from its truncated number-state series.

    Independent of :func:`displacement`; used as a cross-check.
    """
    n = np.arange(conv.fock_dim)
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    mag = abs(alpha)
    if mag == 0:
        return fock_state(0, conv)
    amp = np.exp(-mag**2 / 2 + n * math.log(mag) - 0.5 * log_fact)
    return amp * np.exp(1j * np.angle(alpha) * n)


def check_displacement(alpha: complex, conv: Conventions = DEFAULT) -> None:
    if abs(alpha) ** 2 > conv.fock_dim / 8 + 1e-12:
        raise TruncationError(
            f"|alpha|^2 = {abs(alpha)**2:.3f} exceeds N/8 = {conv.fock_dim / 8:.3f}; "
            "increase fock_dim"
        )


@lru_cache(maxsize=8)
def _quadrature_spectrum(dim: int):
    # a + a^dag is real symmetric tridiagonal; its eigenbasis diagonalises every
    # displacement generator up to a diagonal phase.
    off = np.sqrt(np.arange(1, dim, dtype=float))
    vals, vecs = eigh_tridiagonal(np.zeros(dim), off)
    return vals, vecs


def _displacement_factors(alpha: complex, dim: int):
    # alpha a^dag - alpha^* a = |alpha| U (a^dag - a) U^dag with U = exp(i arg(alpha) n),
    # and a^dag - a = -i W (a + a^dag) W^dag with W = diag(i^n).
    vals, vecs = _quadrature_spectrum(dim)
    phase = np.exp(1j * (np.angle(alpha) + np.pi / 2) * np.arange(dim))
    return phase, vecs, np.exp(-1j * abs(alpha) * vals)


def displacement(alpha: complex, conv: Conventions = DEFAULT) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha^* a) of the truncated generator.

    The exponential is evaluated in the eigenbasis of the (exactly
    anti-Hermitian) truncated generator, so the result is unitary to machine
    precision and D(alpha)^dag = D(-alpha).
    """
    alpha = complex(alpha)
    check_displacement(alpha, conv)
    return _displacement_matrix(alpha, conv.fock_dim).copy()


@lru_cache(maxsize=512)
def _displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    if alpha == 0:
        return np.eye(dim, dtype=complex)
    phase, vecs, eig = _displacement_factors(alpha, dim)
    core = (vecs * eig) @ vecs.T
    out = phase[:, None] * core * phase.conj()[None, :]
    out.setflags(write=False)
    return out


def displace(alpha: complex, states: np.ndarray, conv: Conventions | None = None) -> np.ndarray:
    """Apply D(alpha) to a state vector, or to every column of a 2-D array.

    Costs O(N^2) per column instead of building the full operator.
    """
    alpha = complex(alpha)
    states = np.asarray(states, dtype=complex)
    dim = states.shape[0]
    check_displacement(alpha, conv or Conventions(dim))
    if alpha == 0:
        return states.copy()
    phase, vecs, eig = _displacement_factors(alpha, dim)
    if states.ndim == 1:
        x = vecs.T @ (phase.conj() * states)
        return phase * (vecs @ (eig * x))
    x = vecs.T @ (phase.conj()[:, None] * states)
    return phase[:, None] * (vecs @ (eig[:, None] * x))


def squeeze(r: float, conv: Conventions = DEFAULT) -> np.ndarray:
    """S(r) = exp(r (a^2 - a^dag^2) / 2); squeezes position for r > 0."""
    r = float(r)
    if r < 0:
        raise ValueError("squeezing parameter must be >= 0")
    if r > conv.max_squeezing:
        raise TruncationError(f"r = {r} exceeds the squeezing guard {conv.max_squeezing}")
    return _squeeze_matrix(r, conv.fock_dim).copy()


@lru_cache(maxsize=32)
def _squeeze_matrix(r: float, dim: int) -> np.ndarray:
    if r == 0:
        return np.eye(dim, dtype=complex)
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    gen = r * (a @ a - a.T @ a.T) / 2
    out = expm(gen).astype(complex)
    out.setflags(write=False)
    return out


def squeezed_vacuum(r: float, conv: Conventions = DEFAULT) -> np.ndarray:
    return squeeze(r, conv)[:, 0].copy()


def squeezing_db(r: float) -> float:
    """Squeezing in dB, 10 log10(e^{2r})."""
    return 10 * math.log10(math.exp(2 * r))


def commutation_phase(alpha: complex, beta: complex) -> float:
    """Phase-space area Phi = Im(beta alpha^*) setting the displacement commutator."""
    return float((complex(beta) * complex(alpha).conjugate()).imag)


def classify_commutation(phi: float, atol: float = 1e-12) -> str:
    """'commute' for Phi = k pi, 'anti-commute' for Phi = (2k+1) pi/2, else 'neither'."""
    x = phi / (np.pi / 2)
    k = round(x)
    if abs(x - k) * np.pi / 2 > atol:
        return "neither"
    return "commute" if k % 2 == 0 else "anti-commute"


def to_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 2:
        return state
    return np.outer(state, state.conj())


def normalize(state: np.ndarray) -> tuple[np.ndarray, float]:
    """Return ``(normalized_state, weight)`` where weight is the norm^2 / trace."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        w = float(np.vdot(state, state).real)
    else:
        w = float(np.trace(state).real)
    if w <= 0:
        return state, 0.0
    return (state / math.sqrt(w) if state.ndim == 1 else state / w), w


def expectation(state: np.ndarray, op: np.ndarray) -> complex:
    """<psi|O|psi> for a vector, Tr(O rho) for a density matrix."""
    state = np.asarray(state)
    op = np.asarray(op)
    if op.shape != (state.shape[0], state.shape[0]):
        raise ValueError(f"dimension mismatch: state {state.shape}, operator {op.shape}")
    if state.ndim == 1:
        return complex(np.vdot(state, op @ state))
    return complex(np.einsum("ij,ji->", op, state))


def char_value(state: np.ndarray, alpha: complex) -> complex:
    """<D(alpha)> of a state (vector or density matrix) without building D."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return complex(np.vdot(state, displace(alpha, state)))
    return complex(np.trace(displace(alpha, state)))


def is_density_matrix(rho: np.ndarray, atol: float = 1e-8) -> bool:
    rho = np.asarray(rho)
    if not np.allclose(rho, rho.conj().T, atol=1e-10):
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return float(np.linalg.eigvalsh(rho).min()) >= -atol


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = to_density(rho) - to_density(sigma)
    return 0.5 * float(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())
