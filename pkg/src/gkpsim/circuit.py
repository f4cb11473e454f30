"""Ancilla-qubit / oscillator circuits.

Hybrid states are ordered ``(qubit level) x (Fock index)``. Conventions:

* ``|+>, |-> = (|0> +- |1>) / sqrt(2)`` are the ancilla X eigenstates; the
  state-dependent force ``D(alpha/2 X)`` displaces the ``|+>`` component by
  ``+alpha/2`` and the ``|->`` component by ``-alpha/2``.
* The ancilla is prepared in ``|1>`` and the dark (no fluorescence) outcome
  projects onto ``|1>``. With these choices the dark branch of a modular
  measurement applies ``E+ = (D(alpha/2) + D(-alpha/2)) / 2`` to the oscillator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .code import GridParams, LogicalFrame, default_frame
from .oscillator import DEFAULT, Conventions, char_value, displace, squeezed_vacuum

DARK, BRIGHT = "dark", "bright"

ANCILLA_0 = np.array([1, 0], dtype=complex)
ANCILLA_1 = np.array([0, 1], dtype=complex)

# R(pi/2, -pi/2)|1> makes the dark probability (1 + Im<D(alpha)>) / 2
IMAG_READOUT_ROTATION = (math.pi / 2, -math.pi / 2)


class ZeroProbabilityBranch(RuntimeError):
    """A post-selected branch with vanishing probability was requested."""


@dataclass(frozen=True)
class HybridState:
    """Ancilla (x) oscillator pure state plus the probability weight of the
    post-selection history that produced it."""

    amplitudes: np.ndarray
    probability_weight: float = 1.0

    @property
    def fock_dim(self) -> int:
        return self.amplitudes.shape[0] // 2

    @property
    def blocks(self) -> np.ndarray:
        return self.amplitudes.reshape(2, -1)

    @classmethod
    def product(cls, ancilla, osc, weight: float = 1.0) -> "HybridState":
        ancilla = np.asarray(ancilla, dtype=complex)
        osc = np.asarray(osc, dtype=complex)
        return cls(np.kron(ancilla, osc), weight)


@dataclass(frozen=True)
class MeasurementBranch:
    outcome: str
    probability: float
    post_state: np.ndarray | None  # None marks an empty (zero-probability) branch


def _x_basis(blocks):
    return (blocks[0] + blocks[1]) / math.sqrt(2), (blocks[0] - blocks[1]) / math.sqrt(2)


def _from_x_basis(plus, minus):
    return np.concatenate([(plus + minus) / math.sqrt(2), (plus - minus) / math.sqrt(2)])


def sdf(state: HybridState, alpha: complex) -> HybridState:
    """State-dependent force exp[(alpha/2) a^dag X - (alpha^*/2) a X] = D(alpha/2 X)."""
    alpha = complex(alpha)
    plus, minus = _x_basis(state.blocks)
    conv = Conventions(state.fock_dim)
    plus = displace(alpha / 2, plus, conv)
    minus = displace(-alpha / 2, minus, conv)
    return HybridState(_from_x_basis(plus, minus), state.probability_weight)


def rotation_matrix(theta: float, phi: float) -> np.ndarray:
    """R(theta, phi) = cos(theta/2) 1 + i sin(theta/2) (sin(phi) X + cos(phi) Y)."""
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    return math.cos(theta / 2) * np.eye(2) + 1j * math.sin(theta / 2) * (
        math.sin(phi) * X + math.cos(phi) * Y
    )


def carrier_rotation(state: HybridState, theta: float, phi: float) -> HybridState:
    R = rotation_matrix(theta, phi)
    return HybridState((R @ state.blocks).reshape(-1), state.probability_weight)


def displace_oscillator(state: HybridState, alpha: complex) -> HybridState:
    """Unconditional displacement D(alpha) acting on the oscillator only."""
    out = displace(alpha, state.blocks.T, Conventions(state.fock_dim)).T
    return HybridState(out.reshape(-1), state.probability_weight)


def fluorescence_measure(state: HybridState) -> tuple[MeasurementBranch, MeasurementBranch]:
    """Project the ancilla: dark keeps the ``|1>`` component, bright the ``|0>`` one.

    Probabilities are conditional on the (normalized) input; an empty branch
    has ``post_state=None`` instead of a division by zero.
    """
    blocks = state.blocks
    total = float(np.vdot(state.amplitudes, state.amplitudes).real)
    out = []
    for outcome, comp in ((DARK, blocks[1]), (BRIGHT, blocks[0])):
        w = float(np.vdot(comp, comp).real) / total
        post = comp / math.sqrt(w * total) if w > 0 else None
        out.append(MeasurementBranch(outcome, w, post))
    return out[0], out[1]


def modular_measurement(osc: np.ndarray, alpha: complex, imaginary: bool = False):
    """Run the modular-variable circuit on an oscillator pure state.

    Returns ``(dark, bright)`` branches. With ``imaginary=True`` a pi/2
    ancilla rotation precedes the force, so P(dark) = (1 + Im<D(alpha)>) / 2.
    """
    anc = ANCILLA_1
    if imaginary:
        anc = rotation_matrix(*IMAG_READOUT_ROTATION) @ anc
    state = HybridState.product(anc, osc)
    return fluorescence_measure(sdf(state, alpha))


def modular_expectation(osc: np.ndarray, alpha: complex, part: str = "real",
                        method: str = "formula") -> float:
    """Re or Im of <D(alpha)>.

    ``method="formula"`` evaluates Tr(rho D(alpha)) directly, ``"circuit"`` runs
    the hybrid circuit and returns P(dark) - P(bright). For density matrices
    the circuit is run on each eigen-component.
    """
    if part not in ("real", "imaginary"):
        raise ValueError("part must be 'real' or 'imaginary'")
    osc = np.asarray(osc, dtype=complex)
    if method == "formula":
        val = char_value(osc, alpha)
        return float(val.real if part == "real" else val.imag)
    if method != "circuit":
        raise ValueError(f"unknown method {method!r}")
    if osc.ndim == 1:
        comps = [(1.0, osc / np.linalg.norm(osc))]
    else:
        w, v = np.linalg.eigh((osc + osc.conj().T) / 2)
        comps = [(wi, v[:, i]) for i, wi in enumerate(w) if abs(wi) > 1e-15]
    total = 0.0
    for wi, vec in comps:
        dark, bright = modular_measurement(vec, alpha, imaginary=(part == "imaginary"))
        total += wi * (dark.probability - bright.probability)
    return float(total)


def pauli_gate(osc: np.ndarray, frame: LogicalFrame, axis: str) -> np.ndarray:
    """Logical Pauli along ``axis`` as the displacement D(l_axis / 2)."""
    osc = np.asarray(osc, dtype=complex)
    return displace(frame.pauli_amplitude(axis), osc, Conventions(osc.shape[0]))


def teleported_gate(osc: np.ndarray, frame: LogicalFrame, axis: str, theta: float,
                    phi: float) -> tuple[np.ndarray | None, float]:
    """Teleport U_L^j(theta, phi) onto the oscillator.

    Ancilla |1> -> R(theta, phi) -> D(l_j/4 X) -> D(-l_j/4) -> dark projection.
    On ideal codewords the dark branch applies
    cos(theta/2)|+_j><+_j| + sin(theta/2) e^{i phi} |-_j><-_j|, with success
    probability 1/2 for normalized code states.
    """
    lj = frame.direction(axis)
    state = HybridState.product(ANCILLA_1, osc)
    state = carrier_rotation(state, theta, phi)
    state = sdf(state, lj / 2)
    state = displace_oscillator(state, -lj / 4)
    dark, _ = fluorescence_measure(state)
    return dark.post_state, dark.probability


@dataclass(frozen=True)
class Step:
    """One entry of a state-creation sequence.

    kind: ``squeeze`` | ``modular`` | ``pauli`` | ``teleport``. Modular
    measurements use alpha = multiple * l_axis.
    """

    kind: str
    axis: str = "x"
    multiple: float = 1.0
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("squeeze", "modular", "pauli", "teleport"):
            raise ValueError(f"unknown step kind {self.kind!r}")
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"unknown axis {self.axis!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "modular":
            d.update(axis=self.axis, multiple=self.multiple)
        elif self.kind == "pauli":
            d.update(axis=self.axis)
        elif self.kind == "teleport":
            d.update(axis=self.axis, theta=self.theta, phi=self.phi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Step":
        return cls(**d)


@dataclass(frozen=True)
class SequenceRecipe:
    name: str
    steps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        steps = tuple(s if isinstance(s, Step) else Step.from_dict(s) for s in self.steps)
        if not steps or steps[0].kind != "squeeze":
            raise ValueError(f"recipe {self.name!r} must start with a squeeze step")
        if any(s.kind == "squeeze" for s in steps[1:]):
            raise ValueError("squeeze is only allowed as the first step")
        object.__setattr__(self, "steps", steps)

    def then(self, *steps: Step, name: str | None = None) -> "SequenceRecipe":
        return SequenceRecipe(name or self.name, self.steps + tuple(steps))

    def to_dict(self) -> dict:
        return {"name": self.name, "steps": [s.to_dict() for s in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceRecipe":
        return cls(d["name"], tuple(Step.from_dict(s) for s in d["steps"]))


@dataclass(frozen=True)
class Preparation:
    state: np.ndarray
    success_probability: float
    branch_probabilities: tuple  # (dark, bright) for every measurement


def prepare_state(recipe: SequenceRecipe, params: GridParams,
                  conv: Conventions = DEFAULT, frame: LogicalFrame | None = None) -> Preparation:
    """Execute a recipe, post-selecting the dark outcome of every measurement."""
    frame = frame or default_frame(params)
    psi = None
    prob = 1.0
    branches = []
    for step in recipe.steps:
        if step.kind == "squeeze":
            psi = squeezed_vacuum(params.r, conv)
        elif step.kind == "modular":
            dark, bright = modular_measurement(psi, step.multiple * frame.direction(step.axis))
            branches.append((dark.probability, bright.probability))
            if dark.post_state is None:
                raise ZeroProbabilityBranch(f"{recipe.name}: dark branch has zero probability")
            psi = dark.post_state
            prob *= dark.probability
        elif step.kind == "pauli":
            psi = pauli_gate(psi, frame, step.axis)
        elif step.kind == "teleport":
            post, p = teleported_gate(psi, frame, step.axis, step.theta, step.phi)
            branches.append((p, 1.0 - p))
            if post is None:
                raise ZeroProbabilityBranch(f"{recipe.name}: dark branch has zero probability")
            psi = post
            prob *= p
    return Preparation(psi, prob, tuple(branches))


SQUEEZE = Step("squeeze")
SEQ0 = SequenceRecipe("0", (SQUEEZE, Step("modular"), Step("modular")))
FOUR_COMPONENT_ONE = SequenceRecipe("1_4c", (SQUEEZE, Step("modular"), Step("modular", multiple=2)))

# Input states used for process tomography: every -1 eigenstate except |1>
# comes straight out of a teleported gate.
TOMOGRAPHY_STATES = (
    SEQ0,
    SEQ0.then(Step("pauli", "x"), name="1"),
    SEQ0.then(Step("teleport", "x", theta=0.0), name="+"),
    SEQ0.then(Step("teleport", "x", theta=math.pi), name="-"),
    SEQ0.then(Step("teleport", "x", theta=math.pi / 2, phi=math.pi / 2), name="phi+"),
    SEQ0.then(Step("teleport", "x", theta=math.pi / 2, phi=-math.pi / 2), name="phi-"),
)

# Readout-scan states: -1 eigenstates made from +1 eigenstates by a Pauli.
READOUT_STATES = (
    SEQ0,
    SEQ0.then(Step("pauli", "x"), name="1"),
    SEQ0.then(Step("teleport", "x", theta=0.0), name="+"),
    SEQ0.then(Step("teleport", "x", theta=0.0), Step("pauli", "z"), name="-"),
    SEQ0.then(Step("teleport", "x", theta=math.pi / 2, phi=math.pi / 2), name="phi+"),
    SEQ0.then(Step("teleport", "x", theta=math.pi / 2, phi=math.pi / 2), Step("pauli", "z"),
              name="phi-"),
)

# Ideal logical Bloch vectors. U_L^x(pi/2, phi) = e^{i phi/2} exp(-i phi X/2), so
# phi = +pi/2 rotates |0> to the -Y eigenstate.
IDEAL_BLOCH = {
    "0": (0.0, 0.0, 1.0),
    "1": (0.0, 0.0, -1.0),
    "+": (1.0, 0.0, 0.0),
    "-": (-1.0, 0.0, 0.0),
    "phi+": (0.0, -1.0, 0.0),
    "phi-": (0.0, 1.0, 0.0),
}


def recipe_by_name(name: str, states=TOMOGRAPHY_STATES) -> SequenceRecipe:
    for rec in states + (FOUR_COMPONENT_ONE,):
        if rec.name == name:
            return rec
    raise KeyError(name)
