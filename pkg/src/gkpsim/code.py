"""GKP grid-code parameters, logical frames and approximate codewords."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .oscillator import (
    DEFAULT,
    Conventions,
    TruncationError,
    commutation_phase,
    displace,
    displacement,
    squeezed_vacuum,
)

SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class GridParams:
    """Grid spacing ``l``, squeezing ``r`` and component weights ``c_k``.

    Coefficients are stored unnormalized, e.g. ``{-1: 1, 0: 2, 1: 1}``.
    """

    l: float = SQRT_2PI
    r: float = 0.9
    coefficients: dict = field(default_factory=lambda: {-1: 1.0, 0: 2.0, 1: 1.0})

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError(f"grid spacing must be positive, got {self.l}")
        if self.r < 0:
            raise ValueError(f"squeezing must be >= 0, got {self.r}")
        coeffs = {int(k): float(v) for k, v in self.coefficients.items()}
        if not any(v != 0 for v in coeffs.values()):
            raise ValueError("at least one coefficient must be non-zero")
        object.__setattr__(self, "coefficients", dict(sorted(coeffs.items())))

    @property
    def k_max(self) -> int:
        return max(abs(k) for k in self.coefficients)

    def to_dict(self) -> dict:
        return {"l": self.l, "r": self.r,
                "coefficients": {str(k): v for k, v in self.coefficients.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "GridParams":
        kw = {}
        if "l" in d:
            kw["l"] = float(d["l"])
        if "r" in d:
            kw["r"] = float(d["r"])
        if "coefficients" in d:
            kw["coefficients"] = {int(k): float(v) for k, v in d["coefficients"].items()}
        return cls(**kw)


@dataclass(frozen=True)
class LogicalFrame:
    """Phase-space directions for the x, y and z logical axes.

    The Pauli operator of axis j is D(l_j / 2), its stabilizer D(l_j).
    """

    l_x: complex
    l_z: complex

    def __post_init__(self):
        object.__setattr__(self, "l_x", complex(self.l_x))
        object.__setattr__(self, "l_z", complex(self.l_z))
        area = commutation_phase(self.l_x, self.l_z)
        if abs(area - 2 * math.pi) > 1e-12:
            raise ValueError(f"Im(l_z l_x^*) must equal 2 pi, got {area}")

    @property
    def l_y(self) -> complex:
        return -self.l_x - self.l_z

    def direction(self, axis: str) -> complex:
        try:
            return {"x": self.l_x, "y": self.l_y, "z": self.l_z}[axis]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None

    def pauli_amplitude(self, axis: str) -> complex:
        return self.direction(axis) / 2

    def stabilizer_amplitude(self, axis: str) -> complex:
        if axis not in ("x", "z"):
            raise ValueError("stabilizers are defined along x and z")
        return self.direction(axis)

    def to_dict(self) -> dict:
        return {"l_x": [self.l_x.real, self.l_x.imag], "l_z": [self.l_z.real, self.l_z.imag]}

    @classmethod
    def from_dict(cls, d: dict) -> "LogicalFrame":
        return cls(complex(*d["l_x"]), complex(*d["l_z"]))


def default_frame(params: GridParams | float) -> LogicalFrame:
    """l_x = l, l_z = 2 pi i / l."""
    l = params.l if isinstance(params, GridParams) else float(params)
    if not l > 0:
        raise ValueError("grid spacing must be positive")
    return LogicalFrame(complex(l), 2j * math.pi / l)


def hadamard_frame(frame: LogicalFrame) -> LogicalFrame:
    """Readout frame after a logical Hadamard, i.e. a pi/2 phase-space rotation.

    Every direction is multiplied by i. For l = sqrt(2 pi) the new x readout
    points along the old z axis and vice versa, and y picks up a sign:
    (X, Y, Z) -> (Z, -Y, X). Applying it twice negates all directions, which
    leaves the (real-part) readouts unchanged.
    """
    return LogicalFrame(1j * frame.l_x, 1j * frame.l_z)


def _check_codeword(params: GridParams, conv: Conventions) -> None:
    reach = params.k_max * params.l + params.l / 2
    if reach**2 > conv.fock_dim / 8:
        raise TruncationError(
            f"codeword reaches |alpha| = {reach:.3f}; fock_dim {conv.fock_dim} too small"
        )


def codeword(params: GridParams, label: int = 0, conv: Conventions = DEFAULT) -> np.ndarray:
    """Normalized approximate codeword sum_k c_k D(k l)|r> (label 1: D(l/2) of it)."""
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    _check_codeword(params, conv)
    base = squeezed_vacuum(params.r, conv)
    psi = np.zeros(conv.fock_dim, dtype=complex)
    for k, c in params.coefficients.items():
        if c != 0:
            psi += c * displace(k * params.l, base, conv)
    psi /= np.linalg.norm(psi)
    if label == 1:
        psi = displace(params.l / 2, psi, conv)
    return psi


def squeezed_overlap(beta: complex, r: float) -> float:
    """<r| D(beta) |r> for squeezed vacuum (real, Gaussian)."""
    return math.exp(-(beta.real**2) * math.exp(2 * r) / 2 - (beta.imag**2) * math.exp(-2 * r) / 2)


def analytic_char(params: GridParams, alpha: complex, label: int = 0) -> complex:
    """<D(alpha)> of a codeword from pairwise displaced-squeezed overlaps.

    Uses D(-a) D(alpha) D(b) = exp(i Im(...)) D(alpha + b - a) for real a, b,
    so it is independent of any Fock truncation.
    """
    alpha = complex(alpha)
    shift = params.l / 2 if label == 1 else 0.0
    items = list(params.coefficients.items())
    num = 0j
    norm = 0.0
    for j, cj in items:
        for k, ck in items:
            a = j * params.l + shift
            b = k * params.l + shift
            beta = alpha + b - a
            # D(-a) D(alpha) D(b) with a, b real
            phase = (alpha * complex(b).conjugate()).imag + (-a * (alpha + b).conjugate()).imag
            num += cj * ck * np.exp(1j * phase) * squeezed_overlap(beta, params.r)
            norm += cj * ck * squeezed_overlap(complex(b - a), params.r)
    return complex(num / norm)


def verify_algebra(params: GridParams, conv: Conventions = DEFAULT) -> dict:
    """Residuals of the logical Pauli/stabilizer algebra.

    ``operator`` entries compare matrices on the n <= N/4 block, where the
    identities hold exactly up to truncation. ``codespace`` entries measure how
    far the approximate codewords are from +1 stabilizer eigenstates.
    """
    frame = default_frame(params)
    D = lambda a: displacement(a, conv)  # noqa: E731
    X = D(frame.l_x / 2)
    Z = D(frame.l_z / 2)
    Y = D(frame.l_y / 2)
    Sx = D(frame.l_x)
    Sz = D(frame.l_z)
    dag = lambda m: m.conj().T  # noqa: E731
    m = conv.fock_dim // 4 + 1
    blk = lambda A, B: float(np.abs((A - B)[:m, :m]).max())  # noqa: E731

    operator = {
        "X^2 = Sx": blk(X @ X, Sx),
        "Y^2 = Sx^dag Sz^dag": blk(Y @ Y, dag(Sx) @ dag(Sz)),
        "Z^2 = Sz": blk(Z @ Z, Sz),
        "XY = i Z^dag": blk(X @ Y, 1j * dag(Z)),
        "XZ = -i Y^dag": blk(X @ Z, -1j * dag(Y)),
        "YZ = i X^dag": blk(Y @ Z, 1j * dag(X)),
        "{X, Z} = 0": blk(X @ Z + Z @ X, np.zeros_like(X)),
    }
    codespace = {}
    for mu in (0, 1):
        psi = codeword(params, mu, conv)
        codespace[f"|(Sx - 1)|{mu}>|"] = float(np.linalg.norm(Sx @ psi - psi))
        codespace[f"|(Sz - 1)|{mu}>|"] = float(np.linalg.norm(Sz @ psi - psi))
        codespace[f"<Sx>_{mu}"] = complex(np.vdot(psi, Sx @ psi))
        codespace[f"<Sz>_{mu}"] = complex(np.vdot(psi, Sz @ psi))
    return {"operator": operator, "codespace": codespace}
