import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from gkpsim.circuit import IDEAL_BLOCH
from gkpsim.code import analytic_char, default_frame
from gkpsim.oscillator import Conventions, char_value, vacuum
from gkpsim.tomography import (
    HADAMARD,
    I2,
    KETS,
    PAULIS,
    SX,
    SZ,
    apply_chi,
    build_beta,
    chi_from_kraus,
    chi_from_t,
    chi_from_unitary,
    fit_chi,
    linear_inversion,
    logical_readout,
    predicted_readouts,
    process_fidelity,
    readout_matrix,
    reconstruct_state,
    rotation,
    stabilizer_readout,
    state_fidelity,
    t_from_chi,
    trace_preservation_residual,
)

SIX = ["0", "1", "+", "-", "phi+", "phi-"]


def ideal_o():
    return readout_matrix([IDEAL_BLOCH[k] for k in SIX])


def exact_lambda(chi, o):
    """lambda_jk = Tr(sigma_k E(rho_j)) / 2 by direct conjugation."""
    out = []
    for row in o:
        rho = np.einsum("a,aij->ij", row, PAULIS)
        r_out = apply_chi(chi, rho)
        out.append([np.trace(P @ r_out).real / 2 for P in PAULIS[1:]])
    return np.array(out)


def random_channel(rng, kraus_rank=2):
    V = unitary_group.rvs(2 * kraus_rank, random_state=rng)[:, :2]
    return chi_from_kraus([V[2 * i:2 * i + 2] for i in range(kraus_rank)])


def test_vacuum_readouts():
    conv = Conventions(64)
    f = default_frame(math.sqrt(2 * math.pi))
    vals = logical_readout(vacuum(conv), f)
    for j, v in zip("xyz", vals):
        assert abs(v - math.exp(-abs(f.direction(j) / 2) ** 2 / 2)) < 1e-10
    sx, sz = stabilizer_readout(vacuum(conv), f)
    assert abs(sx - math.exp(-f.l_x.real**2 / 2)) < 1e-10


def test_codeword_readouts(params, frame, tomography_states):
    zero = tomography_states["0"].state
    one = tomography_states["1"].state
    z0 = logical_readout(zero, frame)[2]
    assert abs(z0 - analytic_char(params, frame.l_z / 2).real) < 1e-6
    assert abs(logical_readout(one, frame)[2] + z0) < 1e-8


def test_readout_linearity(tomography_states, frame):
    a = tomography_states["0"].state
    b = tomography_states["phi+"].state
    p = 0.3
    mix = p * np.outer(a, a.conj()) + (1 - p) * np.outer(b, b.conj())
    lhs = np.array(logical_readout(mix, frame))
    rhs = p * np.array(logical_readout(a, frame)) + (1 - p) * np.array(logical_readout(b, frame))
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_reconstruct_examples():
    assert np.allclose(reconstruct_state(0, 0, 1).rho, np.diag([1, 0]))
    assert np.allclose(reconstruct_state(0, 0, 0).rho, I2 / 2)
    st_ = reconstruct_state(0.3, -0.2, 0.5)
    assert np.allclose(st_.rho, st_.rho.conj().T) and abs(np.trace(st_.rho) - 1) < 1e-15
    with pytest.warns(UserWarning):
        bad = reconstruct_state(0.9, 0.0, 0.9)
    assert not bad.physical and bad.bloch_length > 1


def test_state_fidelity_examples():
    assert abs(state_fidelity(reconstruct_state(0, 0, 1), "0") - 1) < 1e-15
    for k in KETS:
        assert abs(state_fidelity(reconstruct_state(0, 0, 0), k) - 0.5) < 1e-15
    # Bloch-vector and ket forms agree
    st_ = reconstruct_state(0.1, -0.6, 0.3)
    assert abs(state_fidelity(st_, IDEAL_BLOCH["phi+"]) - state_fidelity(st_, "phi+")) < 1e-15
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert state_fidelity(reconstruct_state(0, 0, 1.02), "0") > 1


def test_kets_match_ideal_bloch():
    for k in SIX:
        rho = np.outer(KETS[k], KETS[k].conj())
        bloch = [np.trace(rho @ P).real for P in PAULIS[1:]]
        assert np.allclose(bloch, IDEAL_BLOCH[k])


def test_beta_identity_process():
    o = ideal_o()
    lam = (build_beta(o) @ np.diag([1, 0, 0, 0]).reshape(-1)).reshape(6, 4)
    assert np.allclose(lam, o, atol=1e-15)


def test_beta_x_process_flips_z():
    o = ideal_o()
    lam = (build_beta(o) @ chi_from_unitary(SX).reshape(-1)).reshape(6, 4)
    assert abs(lam[0, 3] + o[0, 3]) < 1e-15


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_beta_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    chi = A + A.conj().T
    o = np.column_stack([np.full(6, 0.5), rng.uniform(-0.5, 0.5, (6, 3))])
    fast = (build_beta(o) @ chi.reshape(-1)).reshape(6, 4)
    brute = np.zeros((6, 4), dtype=complex)
    for j in range(6):
        rho = sum(o[j, a] * PAULIS[a] for a in range(4))
        for k in range(4):
            for m in range(4):
                for n in range(4):
                    brute[j, k] += chi[m, n] * np.trace(PAULIS[k] @ PAULIS[m] @ rho @ PAULIS[n]) / 2
    assert np.abs(fast - brute).max() <= 1e-12


def test_process_fidelity_examples():
    U = rotation("z", math.pi / 4)
    assert abs(process_fidelity(chi_from_unitary(U), chi_from_unitary(U)) - 1) < 1e-12
    depol = np.eye(4) / 4
    assert abs(process_fidelity(depol, chi_from_unitary(I2)) - 0.25) < 1e-15


def test_t_parametrization(rng):
    chi = random_channel(rng, 3)
    t = t_from_chi(chi, eps=0)
    assert np.abs(chi_from_t(t) - chi).max() < 1e-10
    c = chi_from_t(rng.normal(size=16))
    assert np.allclose(c, c.conj().T) and np.linalg.eigvalsh(c).min() > -1e-12


def test_fit_identity_noiseless():
    o = ideal_o()
    fit = fit_chi(o, o[:, 1:])
    assert abs(fit.chi[0, 0] - 1) < 1e-6
    rest = fit.chi.copy()
    rest[0, 0] = 0
    assert np.abs(rest).max() <= 1e-6
    assert fit.converged and trace_preservation_residual(fit.chi) <= 1e-6


def test_fit_deterministic_and_valid():
    rng = np.random.default_rng(3)
    o = ideal_o()
    chi = random_channel(rng)
    lam = exact_lambda(chi, o) + rng.normal(0, 0.02, (6, 3))
    a = fit_chi(o, lam, seed=11)
    b = fit_chi(o, lam, seed=11)
    assert np.array_equal(a.chi, b.chi)
    assert np.abs(a.chi - a.chi.conj().T).max() <= 1e-10
    assert np.linalg.eigvalsh(a.chi).min() >= -1e-8
    assert trace_preservation_residual(a.chi) <= 1e-6


def test_fit_input_validation():
    o = ideal_o()
    with pytest.raises(ValueError):
        fit_chi(o, np.zeros((6, 4)))
    lam = o[:, 1:].copy()
    lam[0, 0] = np.nan
    with pytest.raises(ValueError):
        fit_chi(o, lam)


def test_random_cptp_round_trip():
    rng = np.random.default_rng(2024)
    o = ideal_o()
    for _ in range(50):
        chi = random_channel(rng, kraus_rank=int(rng.integers(1, 5)))
        fit = fit_chi(o, exact_lambda(chi, o), seed=0)
        dist = 0.5 * np.abs(np.linalg.eigvalsh(fit.chi - chi)).sum()
        assert dist <= 1e-3
        assert trace_preservation_residual(fit.chi) <= 1e-6


def test_round_trip_with_imperfect_inputs(rng):
    # shortened Bloch vectors, as produced by finite squeezing
    o = readout_matrix([0.85 * np.array(IDEAL_BLOCH[k]) for k in SIX])
    U = unitary_group.rvs(2, random_state=rng)
    chi = chi_from_unitary(U)
    fit = fit_chi(o, exact_lambda(chi, o))
    assert process_fidelity(fit.chi, chi) >= 0.999
    assert np.abs(predicted_readouts(fit.chi, o) - exact_lambda(chi, o)).max() < 1e-6


def test_linear_inversion_exact_data(rng):
    o = ideal_o()
    chi = random_channel(rng)
    assert np.abs(linear_inversion(o, exact_lambda(chi, o)) - chi).max() < 1e-6


def test_hadamard_chi():
    chi = chi_from_unitary(HADAMARD)
    assert abs(chi[1, 1] - 0.5) < 1e-15 and abs(chi[3, 3] - 0.5) < 1e-15
    rho = apply_chi(chi, np.diag([1, 0]).astype(complex))
    assert np.allclose(rho, np.full((2, 2), 0.5))
    assert abs(trace_preservation_residual(chi)) < 1e-15
    assert np.allclose(apply_chi(chi_from_unitary(SZ), np.eye(2)), np.eye(2))
