"""Logical state readout, reconstruction and process tomography.

Process matrices use the Pauli basis (I, X, Y, Z) with
E(rho) = sum_mn chi_mn sigma_m rho sigma_n, so trace preservation reads
sum_mn chi_mn sigma_n sigma_m = 1 and the identity channel is diag(1, 0, 0, 0).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .code import LogicalFrame
from .oscillator import char_value

log = logging.getLogger(__name__)

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.array([I2, SX, SY, SZ])

KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}
# phi+ = R_x(pi/2)|0> and phi- = R_x(-pi/2)|0>
KETS["phi+"] = KETS["-i"]
KETS["phi-"] = KETS["+i"]


def logical_readout(osc: np.ndarray, frame: LogicalFrame) -> tuple[float, float, float]:
    """(<X_L>, <Y_L>, <Z_L>) as Re<D(l_j / 2)>."""
    return tuple(float(char_value(osc, frame.pauli_amplitude(j)).real) for j in "xyz")


def stabilizer_readout(osc: np.ndarray, frame: LogicalFrame) -> tuple[float, float]:
    """(<S_x>, <S_z>) as Re<D(l_x)>, Re<D(l_z)>."""
    return (float(char_value(osc, frame.l_x).real), float(char_value(osc, frame.l_z).real))


@dataclass(frozen=True)
class LogicalState:
    rho: np.ndarray
    bloch: tuple

    @property
    def bloch_length(self) -> float:
        return float(np.linalg.norm(self.bloch))

    @property
    def physical(self) -> bool:
        return self.bloch_length <= 1 + 1e-12


def reconstruct_state(x: float, y: float, z: float) -> LogicalState:
    """rho_L = (1 + x X + y Y + z Z) / 2; Bloch vectors longer than 1 are kept
    as they are and only flagged through ``physical``."""
    rho = 0.5 * (I2 + x * SX + y * SY + z * SZ)
    st = LogicalState(rho, (float(x), float(y), float(z)))
    if not st.physical:
        warnings.warn(f"Bloch vector length {st.bloch_length:.4f} > 1", stacklevel=2)
    return st


def state_fidelity(rho_l, ideal) -> float:
    """<id| rho_L |id>; ``ideal`` is a label from KETS, a ket or a Bloch vector."""
    rho = rho_l.rho if isinstance(rho_l, LogicalState) else np.asarray(rho_l)
    if isinstance(ideal, str):
        ket = KETS[ideal]
    else:
        ideal = np.asarray(ideal)
        if ideal.shape == (3,) and np.isrealobj(ideal):
            return float(np.real(np.trace(rho @ reconstruct_state(*ideal).rho)))
        ket = ideal.astype(complex)
    return float(np.real(np.vdot(ket, rho @ ket)))


def chi_from_unitary(U: np.ndarray) -> np.ndarray:
    u = np.array([np.trace(P.conj().T @ U) / 2 for P in PAULIS])
    return np.outer(u, u.conj())


def chi_from_kraus(kraus) -> np.ndarray:
    chi = np.zeros((4, 4), dtype=complex)
    for K in kraus:
        chi += chi_from_unitary(K)
    return chi


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("mn,mab,bc,ncd->ad", chi, PAULIS, rho, PAULIS)


def rotation(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle sigma_axis / 2)."""
    P = {"x": SX, "y": SY, "z": SZ}[axis]
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * P


HADAMARD = (SX + SZ) / np.sqrt(2)


def process_fidelity(chi: np.ndarray, chi_ideal: np.ndarray) -> float:
    return float(np.real(np.trace(chi @ chi_ideal)))


def trace_preservation_residual(chi: np.ndarray) -> float:
    M = np.einsum("mn,nab,mbc->ac", chi, PAULIS, PAULIS)
    return float(np.abs(M - I2).max())


def readout_matrix(bloch_vectors) -> np.ndarray:
    """6 x 4 matrix o with o[j, 0] = 1/2 and o[j, k] = <sigma_k>_j / 2."""
    b = np.asarray(bloch_vectors, dtype=float)
    return np.column_stack([np.full(len(b), 0.5), b / 2])


def build_beta(o: np.ndarray) -> np.ndarray:
    """Linear map from vec(chi) (row-major, index 4 m + n) to lambda_jk.

    beta[(j, k), (m, n)] = sum_a o_ja Tr(sigma_k sigma_m sigma_a sigma_n) / 2,
    rows ordered j-major over k in (I, X, Y, Z).
    """
    o = np.asarray(o, dtype=float)
    tr = np.einsum("kpq,mqr,ars,nsp->kman", PAULIS, PAULIS, PAULIS, PAULIS)
    beta = np.einsum("ja,kman->jkmn", o, tr) / 2
    return beta.reshape(o.shape[0] * 4, 16)


def t_matrix(t: np.ndarray) -> np.ndarray:
    """Lower-triangular T from t_1..t_16 (0-based here)."""
    t = np.asarray(t, dtype=float)
    T = np.zeros((4, 4), dtype=complex)
    T[0, 0], T[1, 1], T[2, 2], T[3, 3] = t[0], t[1], t[2], t[3]
    T[1, 0] = t[4] + 1j * t[5]
    T[2, 1] = t[6] + 1j * t[7]
    T[3, 2] = t[8] + 1j * t[9]
    T[2, 0] = t[10] + 1j * t[11]
    T[3, 1] = t[12] + 1j * t[13]
    T[3, 0] = t[14] + 1j * t[15]
    return T


def chi_from_t(t: np.ndarray) -> np.ndarray:
    T = t_matrix(t)
    return T.conj().T @ T


def t_from_chi(chi: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Parameters t with T^dag T ~= chi (chi is first made PSD)."""
    chi = (chi + chi.conj().T) / 2
    w, v = np.linalg.eigh(chi)
    chi = (v * np.clip(w, 0, None)) @ v.conj().T + eps * np.eye(4)
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ chi @ J)
    T = J @ L.conj().T @ J
    return np.array([
        T[0, 0].real, T[1, 1].real, T[2, 2].real, T[3, 3].real,
        T[1, 0].real, T[1, 0].imag, T[2, 1].real, T[2, 1].imag,
        T[3, 2].real, T[3, 2].imag, T[2, 0].real, T[2, 0].imag,
        T[3, 1].real, T[3, 1].imag, T[3, 0].real, T[3, 0].imag,
    ])


def _tp_constraints(t):
    M = np.einsum("mn,nab,mbc->ac", chi_from_t(t), PAULIS, PAULIS) - I2
    return np.array([M[0, 0].real, M[1, 1].real, M[0, 1].real, M[0, 1].imag])


def _hermitian_basis():
    basis = []
    for m in range(4):
        for n in range(m, 4):
            E = np.zeros((4, 4), dtype=complex)
            E[m, n] = E[n, m] = 1
            basis.append(E)
            if m != n:
                F = np.zeros((4, 4), dtype=complex)
                F[m, n], F[n, m] = -1j, 1j
                basis.append(F)
    return np.array(basis)


def linear_inversion(o: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Unconstrained Hermitian least-squares chi with trace preservation
    imposed as heavily weighted extra rows."""
    beta = build_beta(o).reshape(len(o), 4, 16)[:, 1:, :].reshape(-1, 16)
    basis = _hermitian_basis()
    A = beta @ basis.reshape(16, 16).T
    tp = np.einsum("bmn,nac,mcd->bad", basis, PAULIS, PAULIS)
    tp_rows = np.stack([tp[:, 0, 0].real, tp[:, 1, 1].real, tp[:, 0, 1].real, tp[:, 0, 1].imag])
    tp_rhs = np.array([1.0, 1.0, 0.0, 0.0])
    w = 1e4
    M = np.vstack([A.real, A.imag, w * tp_rows])
    rhs = np.concatenate([np.asarray(lam, float).reshape(-1), np.zeros(A.shape[0]), w * tp_rhs])
    x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    return np.einsum("b,bmn->mn", x, basis)


@dataclass(frozen=True)
class ChiFit:
    chi: np.ndarray
    t: np.ndarray
    objective: float
    constraint_residual: float
    gradient_norm: float
    converged: bool
    starts: int


def fit_chi(o: np.ndarray, lam: np.ndarray, seed: int = 0, n_starts: int = 8,
            maxiter: int = 2000) -> ChiFit:
    """Constrained least squares for chi = T^dag T.

    Minimizes |beta chi - lambda|^2 over the X, Y, Z readout columns subject to
    the four trace-preservation equalities (SLSQP). Starts from the projected
    linear-inversion estimate plus ``n_starts`` seeded random points; the best
    feasible result wins.
    """
    o = np.asarray(o, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (o.shape[0], 3):
        raise ValueError(f"lambda must have shape ({o.shape[0]}, 3), got {lam.shape}")
    if not (np.all(np.isfinite(o)) and np.all(np.isfinite(lam))):
        raise ValueError("readouts must be finite")
    beta = build_beta(o).reshape(len(o), 4, 16)[:, 1:, :].reshape(-1, 16)
    target = lam.reshape(-1)

    def objective(t):
        r = beta @ chi_from_t(t).reshape(-1) - target
        return float(np.vdot(r, r).real)

    def gradient(t):
        # d/dt of |beta vec(T^dag T) - lam|^2 via the chain rule on T
        T = t_matrix(t)
        r = beta @ (T.conj().T @ T).reshape(-1) - target
        G = (beta.conj().T @ r).reshape(4, 4)  # d obj / d chi^* (up to factor)
        dT = 2 * T @ (G + G.conj().T) / 2  # d obj / d T^* times 2
        g = np.empty(16)
        g[0], g[1], g[2], g[3] = (2 * dT[i, i].real for i in range(4))
        for k, (i, j) in zip((4, 6, 8, 10, 12, 14),
                             ((1, 0), (2, 1), (3, 2), (2, 0), (3, 1), (3, 0))):
            g[k] = 2 * dT[i, j].real
            g[k + 1] = 2 * dT[i, j].imag
        return g

    cons = {"type": "eq", "fun": _tp_constraints}
    chi_lin = linear_inversion(o, lam)
    r_lin = beta @ chi_lin.reshape(-1) - target
    # PSD-free optimum: a lower bound on the constrained objective
    bound = float(np.vdot(r_lin, r_lin).real)

    rng = np.random.default_rng(seed)
    starts = [t_from_chi(chi_lin)]
    for _ in range(n_starts):
        starts.append(t_from_chi(np.diag(rng.dirichlet(np.ones(4)))) + 0.1 * rng.normal(size=16))

    best = None
    used = 0
    for x0 in starts:
        res = minimize(objective, x0, jac=gradient, method="SLSQP", constraints=[cons],
                       options={"maxiter": maxiter, "ftol": 1e-15})
        used += 1
        cres = float(np.abs(_tp_constraints(res.x)).max())
        score = res.fun + (0 if cres < 1e-8 else 1e6 * cres)
        if best is None or score < best[0]:
            best = (score, res, cres)
        if cres < 1e-8 and res.fun <= bound + 1e-12 * (1 + bound):
            break  # attains the relaxed lower bound, hence globally optimal
    _, res, cres = best
    # gradient of the Lagrangian is what vanishes at a constrained optimum
    gnorm = _lagrangian_gradient_norm(res.x, gradient)
    converged = cres < 1e-8 and gnorm < 1e-6
    if not converged:
        log.warning("chi fit not converged: constraint %.2e, gradient %.2e", cres, gnorm)
    return ChiFit(chi_from_t(res.x), res.x, float(res.fun), cres, gnorm, converged, used)


def _lagrangian_gradient_norm(t, gradient, h=1e-7):
    g = gradient(t)
    J = np.empty((4, 16))
    for i in range(16):
        e = np.zeros(16)
        e[i] = h
        J[:, i] = (_tp_constraints(t + e) - _tp_constraints(t - e)) / (2 * h)
    mult, *_ = np.linalg.lstsq(J.T, g, rcond=None)
    return float(np.linalg.norm(g - J.T @ mult))


def predicted_readouts(chi: np.ndarray, o: np.ndarray) -> np.ndarray:
    """lambda_jk for k in (X, Y, Z) predicted by chi from inputs o."""
    beta = build_beta(o).reshape(len(o), 4, 16)
    return np.real(beta @ chi.reshape(-1))[:, 1:]
