import math

import numpy as np
import pytest
from scipy.linalg import expm

from ionmagnet.core import PAULI, TruncationError, partial_trace_spin
from ionmagnet.phonon import (
    EXPERIMENT_DELTA,
    EXPERIMENT_J_TARGET,
    WalkingWaveParams,
    build_walking_wave_hamiltonian,
    decompose_phases,
    effective_coupling_analytic,
    extract_coupling_numeric,
    run_closed_loop,
)

# [DERIVED] scipy DOP853 integration (rtol 1e-12) of the driven two-ion
# stretch mode, F = 12, phases unwrapped along the trajectory.
ORACLE_J_NUMERIC = 138858.39527708234
ORACLE_G_UP = 373625.05891469313


@pytest.fixture(scope="module")
def params():
    return WalkingWaveParams.calibrated()


@pytest.fixture(scope="module")
def loop(params):
    return run_closed_loop(params)


def test_enhancement_from_experiment_frequencies(params):
    # [PAPER] 3.7 MHz / 250 kHz = 14.8
    assert params.enhancement == pytest.approx(14.8, abs=1e-12)
    assert effective_coupling_analytic(params).enhancement == pytest.approx(14.8)


def test_calibration_hits_target(params):
    assert params.g_up == pytest.approx(ORACLE_G_UP, rel=1e-12)
    assert params.g_down == pytest.approx(-1.5 * params.g_up)
    eff = effective_coupling_analytic(params)
    assert eff.J_eff == pytest.approx(EXPERIMENT_J_TARGET, rel=1e-12)


def test_analytic_coupling_closed_form():
    p = WalkingWaveParams(g_up=1e5)
    delta_g = 0.5 * (p.g_up - p.g_down)
    eff = effective_coupling_analytic(p)
    # b1 b2 = -1/2 for the stretch mode
    assert eff.J_eff == pytest.approx(-(delta_g**2) / p.delta, rel=1e-12)
    assert eff.single_spin == pytest.approx((0.0, 0.0), abs=1e-9)


def test_detuning_sign_sets_coupling_sign():
    neg = effective_coupling_analytic(WalkingWaveParams(g_up=1e5, delta=EXPERIMENT_DELTA))
    pos = effective_coupling_analytic(WalkingWaveParams(g_up=1e5, delta=-EXPERIMENT_DELTA))
    assert neg.J_eff > 0 and pos.J_eff == pytest.approx(-neg.J_eff)


def test_coupling_scales_with_force_squared():
    small = WalkingWaveParams(g_up=1e5)
    large = WalkingWaveParams(g_up=2e5)
    assert effective_coupling_analytic(large).J_eff == pytest.approx(
        4 * effective_coupling_analytic(small).J_eff, rel=1e-12
    )
    assert extract_coupling_numeric(large) == pytest.approx(
        4 * extract_coupling_numeric(small), rel=1e-4
    )


def test_numeric_coupling_matches_oracle(loop, params):
    numeric = decompose_phases(loop.phases, loop.duration).J_eff
    assert numeric == pytest.approx(ORACLE_J_NUMERIC, rel=1e-4)
    assert numeric == pytest.approx(effective_coupling_analytic(params).J_eff, rel=1e-3)


def test_loop_closes(loop, params):
    assert loop.duration == pytest.approx(2 * math.pi / abs(params.delta))
    assert loop.spin_purity[-1] > 1 - 1e-9
    assert loop.mean_phonon[-1] < 1e-9
    assert loop.top_population.max() < 1e-6


def test_mid_loop_displacement(params):
    # coherent displacement |α_s| = 2|G_s/δ| at half a loop
    half = run_closed_loop(params, stop_fraction=0.5)
    g = params.configuration_couplings()
    expected = np.mean(4 * g**2 / params.delta**2)
    assert half.mean_phonon[-1] == pytest.approx(expected, rel=1e-4)
    assert half.spin_purity[-1] < 0.99


def test_fock_truncation_convergence(params):
    from dataclasses import replace

    j10 = extract_coupling_numeric(replace(params, fock_levels=10))
    j14 = extract_coupling_numeric(replace(params, fock_levels=14))
    assert j10 == pytest.approx(j14, rel=1e-6)


def test_final_spin_state_is_ising_evolution(loop, params):
    eff = effective_coupling_analytic(params)
    zz = np.kron(PAULI["z"], PAULI["z"])
    z1, z2 = np.kron(PAULI["z"], np.eye(2)), np.kron(np.eye(2), PAULI["z"])
    h = eff.offset * np.eye(4) + eff.J_eff * zz + eff.single_spin[0] * z1 + eff.single_spin[1] * z2
    target = expm(-1j * h * loop.duration) @ np.full(4, 0.5)
    rho = partial_trace_spin(loop.final_state, "spins").entries
    assert np.vdot(target, rho @ target).real > 1 - 1e-6


def test_two_loops_double_the_phase(params, loop):
    two = run_closed_loop(params, 2)
    for label in ("↑↓", "↓↑"):
        assert two.phases[label] == pytest.approx(2 * loop.phases[label], rel=1e-6)


def test_truncation_error_raised():
    with pytest.raises(TruncationError, match="fock_levels"):
        run_closed_loop(WalkingWaveParams(g_up=2e6, fock_levels=8))


def test_hamiltonian_is_hermitian(params):
    h = build_walking_wave_hamiltonian(params, 1.234e-6)
    assert h.shape == (48, 48)
    assert np.allclose(h, h.conj().T)


def test_parameter_validation():
    with pytest.raises(ValueError):
        WalkingWaveParams(g_up=1e5, force_ratio=-1.4)
    with pytest.raises(ValueError):
        WalkingWaveParams(g_up=1e5, fock_levels=6)
    with pytest.raises(ValueError):
        WalkingWaveParams(g_up=1e5, delta=-2 * math.pi * 4e6)
    with pytest.raises(ValueError):
        run_closed_loop(WalkingWaveParams(g_up=1e5), n_loops=0)
    with pytest.raises(ValueError):
        decompose_phases({"↑↑": 0.0, "↑↓": 1.0, "↓↑": float("nan"), "↓↓": 0.0}, 1.0)


def test_force_is_spin_diagonal_with_fixed_ratio(params):
    rng = np.random.default_rng(0)
    h = build_walking_wave_hamiltonian(params, rng.uniform(0, 4e-6))
    for site in range(2):
        z = np.kron(np.kron(np.eye(2**site), PAULI["z"]), np.eye(2 ** (1 - site) * 12))
        assert np.linalg.norm(h @ z - z @ h) < 1e-12 * np.linalg.norm(h)
    assert params.g_down / params.g_up == pytest.approx(-1.5, rel=1e-15)
    g = params.configuration_couplings()
    # ↑↓ vs ↓↑ swap the ion forces, so their couplings are opposite
    assert g[1] == pytest.approx(-g[2]) and g[0] == g[3] == pytest.approx(0.0)


def test_zero_force_is_identity():
    p = WalkingWaveParams(g_up=0.0)
    res = run_closed_loop(p, samples=5)
    assert all(v == 0.0 for v in res.phases.values())
    assert np.allclose(res.spin_purity, 1.0)
    assert effective_coupling_analytic(p).J_eff == 0.0
    assert extract_coupling_numeric(p) == 0.0


def test_detuning_and_sign_dependence():
    from dataclasses import replace

    p = WalkingWaveParams(g_up=1e5)
    j = effective_coupling_analytic(p).J_eff
    assert effective_coupling_analytic(replace(p, delta=2 * p.delta)).J_eff == pytest.approx(j / 2)
    assert effective_coupling_analytic(replace(p, g_up=-p.g_up)).J_eff == pytest.approx(j)
