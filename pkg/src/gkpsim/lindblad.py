"""Lindblad simulation of pulse sequences with motional dephasing.

The dissipator uses L = sqrt(Gamma) (a a^dag + a^dag a) = sqrt(Gamma) (2n + 1),
which is diagonal in the Fock basis, so free evolution has the closed form
rho_nm(t) = rho_nm(0) exp(-2 Gamma t (n - m)^2).

Hybrid density matrices are stored as arrays of shape (2, 2, N, N): the first
two indices are ancilla levels, the last two Fock indices. Every drive used
here is block diagonal in the ancilla X basis, so each segment evolves the
four N x N blocks independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import SequenceRecipe, rotation_matrix
from .code import GridParams, LogicalFrame, default_frame
from .oscillator import (
    DEFAULT,
    Conventions,
    check_displacement,
    displacement,
    ladder_operators,
    squeezed_vacuum,
)

TRAP_FREQUENCY = 2 * math.pi * 1.85e6  # rad/s; metadata only, evolution is in the rotating frame
SDF_DURATION_PER_L = 38e-6  # seconds of SDF pulse for |alpha| = sqrt(2 pi)
CARRIER_DURATION = 5e-6
DISPLACEMENT_DURATION = 10e-6

_H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


class ConvergenceError(RuntimeError):
    """Halving the integration step changed the result by more than the tolerance."""


@dataclass(frozen=True)
class NoiseParams:
    gamma: float = 7.0  # 1/s

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass(frozen=True)
class Segment:
    """kind: ``sdf`` | ``carrier`` | ``displacement`` | ``wait`` | ``measure``."""

    kind: str
    duration: float = 0.0
    alpha: complex = 0j
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sdf", "carrier", "displacement", "wait", "measure"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("segment durations must be >= 0")
        if self.kind == "measure" and self.duration != 0:
            raise ValueError("a measure segment carries no duration")
        object.__setattr__(self, "alpha", complex(self.alpha))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind != "measure":
            d["duration"] = self.duration
        if self.kind in ("sdf", "displacement"):
            d["alpha"] = [self.alpha.real, self.alpha.imag]
        if self.kind == "carrier":
            d.update(theta=self.theta, phi=self.phi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        d = dict(d)
        if "alpha" in d:
            d["alpha"] = complex(*d["alpha"])
        return cls(**d)


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple = field(default_factory=tuple)
    trap_frequency: float = TRAP_FREQUENCY

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(
            s if isinstance(s, Segment) else Segment.from_dict(s) for s in self.segments))

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def to_dict(self) -> dict:
        return {"trap_frequency": self.trap_frequency,
                "segments": [s.to_dict() for s in self.segments]}

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSchedule":
        return cls(tuple(Segment.from_dict(s) for s in d["segments"]),
                   d.get("trap_frequency", TRAP_FREQUENCY))


@dataclass(frozen=True)
class Timings:
    """Pulse durations in seconds. SDF time scales linearly with |alpha|."""

    sdf_per_l: float = SDF_DURATION_PER_L
    carrier: float = CARRIER_DURATION
    displacement: float = DISPLACEMENT_DURATION
    wait: float = 0.0

    def sdf(self, alpha: complex) -> float:
        return self.sdf_per_l * abs(alpha) / math.sqrt(2 * math.pi)


def _dephasing_factors(dim: int, gamma: float, t: float) -> np.ndarray:
    n = np.arange(dim)
    return np.exp(-2 * gamma * t * (n[:, None] - n[None, :]) ** 2)


def dephasing_evolve(rho: np.ndarray, duration: float, noise: NoiseParams) -> np.ndarray:
    """Exact free evolution under motional dephasing (oscillator or hybrid rho)."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    rho = np.asarray(rho, dtype=complex)
    return rho * _dephasing_factors(rho.shape[-1], noise.gamma, duration)


def hybrid_density(osc_rho: np.ndarray, ancilla=(0, 1)) -> np.ndarray:
    """|ancilla><ancilla| (x) rho as a (2, 2, N, N) block array."""
    anc = np.asarray(ancilla, dtype=complex)
    anc = np.outer(anc, anc.conj())
    return anc[:, :, None, None] * np.asarray(osc_rho, dtype=complex)[None, None]


def hybrid_to_matrix(rho: np.ndarray) -> np.ndarray:
    """(2, 2, N, N) blocks -> 2N x 2N matrix ordered (qubit) x (Fock)."""
    n = rho.shape[-1]
    return rho.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)


def _to_x(rho):
    return np.einsum("sa,abij,bt->stij", _H, rho, _H)


def _nonzero(block):
    return bool(np.any(block))


def _drive(rho, unitaries, dim, gamma, duration, steps):
    """Strang-split evolution of X-basis blocks under per-block unitaries."""
    dt = duration / steps
    half = _dephasing_factors(dim, gamma, dt / 2) if gamma > 0 else None
    full = half * half if half is not None else None
    live = [(s, t) for s in range(2) for t in range(2) if _nonzero(rho[s, t])]
    out = rho.copy()
    for s, t in live:
        blk = out[s, t]
        us, ut = unitaries[s], unitaries[t].conj().T
        if half is not None:
            blk = blk * half
        for k in range(steps):
            blk = us @ blk @ ut
            if half is not None:
                blk = blk * (half if k == steps - 1 else full)
        out[s, t] = blk
    return out


def _drive_rk4(rho, gens, dim, gamma, duration, steps):
    """Classical RK4 on X-basis blocks; gens[s] is the block Hamiltonian."""
    dt = duration / steps
    n = np.arange(dim)
    rate = 2 * gamma * (n[:, None] - n[None, :]) ** 2
    out = rho.copy()
    for s in range(2):
        for t in range(2):
            blk = out[s, t]
            if not _nonzero(blk):
                continue
            hs, ht = gens[s], gens[t]
            f = lambda x: -1j * (hs @ x - x @ ht) - rate * x  # noqa: E731
            for _ in range(steps):
                k1 = f(blk)
                k2 = f(blk + dt / 2 * k1)
                k3 = f(blk + dt / 2 * k2)
                k4 = f(blk + dt * k3)
                blk = blk + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            out[s, t] = blk
    return out


def _apply_segment(rho, seg: Segment, gamma: float, steps: int, method: str):
    dim = rho.shape[-1]
    if seg.kind == "wait":
        return dephasing_evolve(rho, seg.duration, NoiseParams(gamma))
    if seg.kind == "measure":
        out = np.zeros_like(rho)
        out[1, 1] = rho[1, 1]
        return out
    if seg.kind == "carrier":
        R = rotation_matrix(seg.theta, seg.phi)
        rho = np.einsum("sa,abij,tb->stij", R, rho, R.conj())
        # ancilla rotation and oscillator dephasing commute
        return dephasing_evolve(rho, seg.duration, NoiseParams(gamma))

    check_displacement(seg.alpha, Conventions(dim))
    if seg.kind == "sdf":
        rho = _to_x(rho)
        amps = (seg.alpha / 2, -seg.alpha / 2)
    else:
        amps = (seg.alpha, seg.alpha)
    if seg.duration == 0:
        us = [displacement(a, Conventions(dim)) for a in amps]
        out = _drive(rho, us, dim, 0.0, 1.0, 1)
    elif method == "rk4":
        a, a_dag, *_ = ladder_operators(Conventions(dim))
        gens = [1j * (b * a_dag - np.conj(b) * a) / seg.duration for b in amps]
        out = _drive_rk4(rho, gens, dim, gamma, seg.duration, steps)
    else:
        us = [displacement(a / steps, Conventions(dim)) for a in amps]
        out = _drive(rho, us, dim, gamma, seg.duration, steps)
    return _to_x(out) if seg.kind == "sdf" else out


@dataclass(frozen=True)
class SimulationResult:
    rho: np.ndarray  # normalized oscillator density matrix of the dark branch
    success_probability: float
    hybrid: np.ndarray  # unnormalized (2, 2, N, N); trace = success probability
    boundary_min_eigenvalues: tuple


def _run(schedule, rho, gamma, steps, method, track):
    mins = []
    for seg in schedule.segments:
        rho = _apply_segment(rho, seg, gamma, steps, method)
        if track:
            m = hybrid_to_matrix(rho)
            mins.append(float(np.linalg.eigvalsh((m + m.conj().T) / 2).min()))
    return rho, mins


def simulate_sequence(schedule: PulseSchedule, initial: np.ndarray, noise: NoiseParams,
                      conv: Conventions = DEFAULT, steps: int = 512, method: str = "strang",
                      check_convergence: bool = True, tol: float = 1e-6,
                      track_positivity: bool = False) -> SimulationResult:
    """Evolve ``initial`` through the schedule, post-selecting dark outcomes.

    ``initial`` is an oscillator state (vector or density matrix); the ancilla
    starts in |1>. With ``check_convergence`` the run is repeated at half the
    step count and a ConvergenceError is raised if any density-matrix element
    moves by more than ``tol``.
    """
    if method not in ("strang", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    initial = np.asarray(initial, dtype=complex)
    if initial.shape[0] != conv.fock_dim:
        raise ValueError("initial state dimension does not match fock_dim")
    osc = np.outer(initial, initial.conj()) if initial.ndim == 1 else initial
    rho0 = hybrid_density(osc)
    rho, mins = _run(schedule, rho0, noise.gamma, steps, method, track_positivity)
    if check_convergence and noise.gamma > 0 and steps >= 2:
        coarse, _ = _run(schedule, rho0, noise.gamma, steps // 2, method, False)
        err = float(np.abs(coarse - rho).max())
        if err > tol:
            raise ConvergenceError(f"step halving changed rho by {err:.3e} > {tol:.1e}")
    prob = float(np.trace(rho[0, 0]).real + np.trace(rho[1, 1]).real)
    osc_rho = rho[0, 0] + rho[1, 1]
    if prob > 0:
        osc_rho = osc_rho / prob
    return SimulationResult(osc_rho, prob, rho, tuple(mins))


def schedule_from_recipe(recipe: SequenceRecipe, params: GridParams,
                         frame: LogicalFrame | None = None,
                         timings: Timings = Timings()) -> PulseSchedule:
    """Translate a state-creation recipe (minus the initial squeeze) into pulses."""
    frame = frame or default_frame(params)
    segs = []
    for step in recipe.steps:
        if step.kind == "squeeze":
            continue
        if step.kind == "modular":
            alpha = step.multiple * frame.direction(step.axis)
            segs += [Segment("sdf", timings.sdf(alpha), alpha), Segment("measure")]
        elif step.kind == "pauli":
            segs.append(Segment("displacement", timings.displacement,
                                frame.pauli_amplitude(step.axis)))
        elif step.kind == "teleport":
            lj = frame.direction(step.axis)
            segs += [
                Segment("carrier", timings.carrier, theta=step.theta, phi=step.phi),
                Segment("sdf", timings.sdf(lj / 2), lj / 2),
                Segment("displacement", timings.displacement, -lj / 4),
                Segment("measure"),
            ]
        if timings.wait > 0:
            segs.append(Segment("wait", timings.wait))
    return PulseSchedule(tuple(segs))


def simulate_recipe(recipe: SequenceRecipe, params: GridParams, noise: NoiseParams,
                    conv: Conventions = DEFAULT, timings: Timings = Timings(),
                    frame: LogicalFrame | None = None, **kw) -> SimulationResult:
    if recipe.steps[0].kind != "squeeze":
        raise ValueError("recipe must start with a squeeze step")
    sched = schedule_from_recipe(recipe, params, frame, timings)
    return simulate_sequence(sched, squeezed_vacuum(params.r, conv), noise, conv, **kw)


def simulated_readout(rho: np.ndarray, alpha: complex, noise: NoiseParams,
                      timings: Timings = Timings(), imaginary: bool = False,
                      steps: int = 512) -> float:
    """P(dark) - P(bright) of a modular readout, dephasing during the SDF pulse.

    With gamma = 0 this equals Re (or Im) Tr(rho D(alpha)).
    """
    rho = np.asarray(rho, dtype=complex)
    anc = np.array([0, 1], dtype=complex)
    if imaginary:
        anc = rotation_matrix(math.pi / 2, -math.pi / 2) @ anc
    h = hybrid_density(rho, anc)
    for seg in (Segment("sdf", timings.sdf(alpha), alpha), Segment("measure")):
        h = _apply_segment(h, seg, noise.gamma, steps, "strang")
    p_dark = float(np.trace(h[1, 1]).real) / float(np.trace(rho).real)
    return 2 * p_dark - 1


def liouvillian(hamiltonian: np.ndarray, jump: np.ndarray, gamma: float) -> np.ndarray:
    """Dense Liouvillian for row-major vectorized rho (small dimensions only)."""
    d = hamiltonian.shape[0]
    eye = np.eye(d)
    LdL = jump.conj().T @ jump
    return (-1j * (np.kron(hamiltonian, eye) - np.kron(eye, hamiltonian.T))
            + gamma * (np.kron(jump, jump.conj()) - 0.5 * np.kron(LdL, eye)
                       - 0.5 * np.kron(eye, LdL.T)))
