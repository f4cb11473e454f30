"""Grid-state (GKP) qubits in a truncated oscillator: state preparation by
post-selected ancilla circuits, motional dephasing, logical tomography and
phase-space diagnostics."""

__version__ = "0.1.0"

from .oscillator import (  # noqa: E402
    DEFAULT,
    Conventions,
    TruncationError,
    displace,
    displacement,
    squeeze,
    squeezed_vacuum,
)
from .code import GridParams, LogicalFrame, codeword, default_frame, hadamard_frame  # noqa: E402
from .circuit import (  # noqa: E402
    IDEAL_BLOCH,
    READOUT_STATES,
    SEQ0,
    TOMOGRAPHY_STATES,
    SequenceRecipe,
    Step,
    prepare_state,
)
from .lindblad import NoiseParams, Timings, simulate_recipe, simulate_sequence  # noqa: E402
from .tomography import (  # noqa: E402
    fit_chi,
    logical_readout,
    process_fidelity,
    reconstruct_state,
    stabilizer_readout,
    state_fidelity,
)
from .phasespace import char_function, marginal_from_scan, wigner  # noqa: E402

__all__ = [
    "DEFAULT", "Conventions", "TruncationError", "displace", "displacement", "squeeze",
    "squeezed_vacuum", "GridParams", "LogicalFrame", "codeword", "default_frame",
    "hadamard_frame", "IDEAL_BLOCH", "READOUT_STATES", "SEQ0", "TOMOGRAPHY_STATES",
    "SequenceRecipe", "Step", "prepare_state", "NoiseParams", "Timings", "simulate_recipe",
    "simulate_sequence", "fit_chi", "logical_readout", "process_fidelity",
    "reconstruct_state", "stabilizer_readout", "state_fidelity", "char_function",
    "marginal_from_scan", "wigner",
]
