import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import random_hermitian, random_state
from ionmagnet.core import (
    PAULI,
    ConvergenceError,
    DensityMatrix,
    LinearHamiltonian,
    NonHermitianError,
    OperatorTerm,
    StateVector,
    build_many_body_operator,
    dephase_step,
    embed_single_spin,
    evolve,
    evolve_density,
    partial_trace_spin,
    spin_config_labels,
)


def test_basis_order_and_labels():
    assert spin_config_labels(2) == ["↑↑", "↑↓", "↓↑", "↓↓"]
    z0 = build_many_body_operator([OperatorTerm(1.0, ((0, "z"),))], 2)
    assert np.allclose(np.diag(z0).real, [1, 1, -1, -1])


def test_fock_factor_is_fastest_index():
    op = build_many_body_operator([OperatorTerm(1.0, ((1, "x"),))], 2, fock_levels=3)
    assert op.shape == (12, 12)
    # spin 1 flips index 0 (↑↑, n=0) into index 3 (↑↓, n=0)
    assert op[3, 0] == 1 and op[1, 0] == 0


def test_build_operator_matches_kron():
    terms = [OperatorTerm(0.7, ((0, "x"), (2, "y"))), OperatorTerm(-1.3, ((1, "z"),))]
    i2 = np.eye(2)
    expected = 0.7 * np.kron(np.kron(PAULI["x"], i2), PAULI["y"]) - 1.3 * np.kron(
        np.kron(i2, PAULI["z"]), i2
    )
    assert np.allclose(build_many_body_operator(terms, 3), expected)


def test_bad_terms_rejected():
    with pytest.raises(ValueError):
        OperatorTerm(1.0, ((0, "w"),))
    with pytest.raises(ValueError):
        OperatorTerm(1.0, ((0, "x"), (0, "z")))
    with pytest.raises(IndexError):
        build_many_body_operator([OperatorTerm(1.0, ((3, "x"),))], 2)
    with pytest.raises(IndexError):
        embed_single_spin(PAULI["x"], 2, 2)


def test_state_validation():
    with pytest.raises(ValueError, match="normalized"):
        StateVector(np.array([1.0, 1.0, 0, 0]), 2)
    with pytest.raises(ValueError):
        StateVector(np.ones(3) / math.sqrt(3), 2)
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(np.array([[0.5, 0.1], [0.3, 0.5]]), 1)


def test_static_propagation_matches_expm(rng):
    # oracle: scipy matrix exponential of a constant Hamiltonian
    h = random_hermitian(rng, 4, scale=1e6)
    psi0 = StateVector(random_state(rng, 4), 2)
    t = 3.3e-6
    out = evolve(psi0, lambda _t: h, 0.0, t, dt=1e-7)
    assert np.allclose(out.amplitudes, expm(-1j * h * t) @ psi0.amplitudes, atol=1e-12)


def test_rabi_oscillation():
    # H = B σx from |↑⟩: P(↓) = sin²(B t)
    b = 2 * math.pi * 1e3
    h = np.kron(PAULI["x"], np.eye(2)) * b
    for t in (50e-6, 125e-6, 200e-6):
        out = evolve(StateVector.basis(0, 2), lambda _t: h, 0.0, t)
        assert out.spin_populations()[2] == pytest.approx(math.sin(b * t) ** 2, abs=1e-10)


def test_time_dependent_midpoint_rule_is_second_order():
    # H(t) = t σz: exact phase ∓t²/2, midpoint rule exact for linear-in-t diagonal H
    h = LinearHamiltonian([np.diag([1.0, -1.0, 1.0, -1.0])], [lambda t: 1e10 * np.asarray(t)])
    psi0 = StateVector(np.full(4, 0.5), 2)
    out = evolve(psi0, h, 0.0, 1e-5, dt=1e-6)
    expected = 0.5 * np.exp(-1j * 1e10 * 0.5e-10 * np.array([1, -1, 1, -1]))
    assert np.allclose(out.amplitudes, expected, atol=1e-12)


def test_self_check_detects_coarse_step():
    h = LinearHamiltonian(
        [1e6 * np.kron(PAULI["x"], np.eye(2)), np.kron(PAULI["z"], PAULI["z"])],
        [np.ones_like, lambda t: 1e12 * np.asarray(t)],
    )
    psi0 = StateVector.basis(0, 2)
    with pytest.raises(ConvergenceError):
        evolve(psi0, h, 0.0, 1e-5, dt=1e-6, self_check=True)
    evolve(psi0, h, 0.0, 1e-6, dt=2e-10, self_check=True)


def test_non_hermitian_rejected():
    bad = np.zeros((4, 4), dtype=complex)
    bad[0, 1] = 1.0
    with pytest.raises(NonHermitianError):
        evolve(StateVector.basis(0, 2), lambda _t: bad, 0.0, 1e-6)


def test_zero_interval_and_bad_dt():
    psi = StateVector.basis(1, 2)
    assert evolve(psi, lambda _t: np.eye(4), 1.0, 1.0) is psi
    with pytest.raises(ValueError):
        evolve(psi, lambda _t: np.eye(4), 0.0, 1.0, dt=0.0)


@given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(1e-7, 1e-4))
def test_evolution_preserves_norm(seed, t):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 8, scale=1e5)
    psi = StateVector(random_state(rng, 8), 3)
    out = evolve(psi, lambda _t: h, 0.0, t, dt=1e-6)
    assert abs(out.norm() - 1.0) < 1e-10


def test_dephasing_single_coherence_matches_analytic():
    # oracle: ρ_{↑↑,↓↓} decays as exp(-2γ·2·t) with two spins differing
    bell = StateVector(np.array([1, 0, 0, 1]) / math.sqrt(2), 2).density()
    gamma, dt, steps = 500.0, 1e-6, 100
    rho = bell
    for _ in range(steps):
        rho = dephase_step(rho, gamma, dt)
    assert rho.entries[0, 3].real == pytest.approx(0.5 * math.exp(-4 * gamma * dt * steps), rel=1e-12)
    assert np.allclose(np.diag(rho.entries), np.diag(bell.entries))


def test_dephasing_with_hamiltonian_matches_lindblad_ode():
    # oracle: direct Lindblad integration with scipy for one field-driven spin pair
    from scipy.integrate import solve_ivp

    b, gamma = 2 * math.pi * 2e3, 800.0
    h = b * (np.kron(PAULI["x"], np.eye(2)) + np.kron(np.eye(2), PAULI["x"]))
    ls = [np.kron(PAULI["z"], np.eye(2)), np.kron(np.eye(2), PAULI["z"])]

    def rhs(_t, y):
        r = y.reshape(4, 4)
        d = -1j * (h @ r - r @ h)
        for L in ls:
            d += gamma * (L @ r @ L - r)
        return d.reshape(-1)

    rho0 = StateVector.basis(0, 2).density()
    t = 200e-6
    sol = solve_ivp(rhs, (0, t), rho0.entries.reshape(-1).astype(complex), rtol=1e-10, atol=1e-12)
    ref = sol.y[:, -1].reshape(4, 4)
    out = evolve_density(rho0, lambda _t: h, 0.0, t, dt=1e-8, gamma=gamma)
    assert np.max(np.abs(out.entries - ref)) < 1e-4


def test_dephasing_rejects_large_step_and_negative_rate():
    rho = StateVector.basis(0, 2).density()
    with pytest.raises(ValueError):
        dephase_step(rho, 1e6, 1e-6)
    with pytest.raises(ValueError):
        dephase_step(rho, -1.0, 1e-6)
    assert dephase_step(rho, 0.0, 1e-6) is rho


@given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(0.0, 5e3))
def test_dephasing_keeps_density_physical(seed, gamma):
    rng = np.random.default_rng(seed)
    v = random_state(rng, 4)
    w = random_state(rng, 4)
    rho = DensityMatrix(0.6 * np.outer(v, v.conj()) + 0.4 * np.outer(w, w.conj()), 2)
    out = dephase_step(rho, gamma, 1e-5)
    assert out.trace() == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(out.entries).min() > -1e-12
    assert out.purity() <= rho.purity() + 1e-12


def test_bell_state_reduced_purity():
    bell = StateVector(np.array([1, 0, 0, 1]) / math.sqrt(2), 2)
    assert partial_trace_spin(bell, [0]).purity() == pytest.approx(0.5)
    assert partial_trace_spin(bell.density(), [1]).purity() == pytest.approx(0.5)
    assert partial_trace_spin(bell, "spins").purity() == pytest.approx(1.0)


def test_partial_trace_of_product_state(rng):
    spin = random_state(rng, 4)
    fock = random_state(rng, 5)
    psi = StateVector(np.kron(spin, fock), 2, 5)
    assert np.allclose(partial_trace_spin(psi, "spins").entries, np.outer(spin, spin.conj()))
    assert np.allclose(partial_trace_spin(psi, "fock").entries, np.outer(fock, fock.conj()))
    assert np.allclose(
        partial_trace_spin(psi.density(), "spins").entries, np.outer(spin, spin.conj())
    )
    with pytest.raises(ValueError):
        partial_trace_spin(psi, [0, 0])
    with pytest.raises(ValueError):
        partial_trace_spin(psi, "phonons")


def test_zz_and_single_x_operators():
    zz = build_many_body_operator([OperatorTerm(1.0, ((0, "z"), (1, "z")))], 2)
    assert np.allclose(zz, np.diag([1, -1, -1, 1]))
    x = build_many_body_operator([OperatorTerm(1.0, ((0, "x"),))], 1)
    assert np.allclose(x, [[0, 1], [1, 0]])
    field = build_many_body_operator(
        [OperatorTerm(1.0, ((0, "x"),)), OperatorTerm(1.0, ((1, "x"),))], 2
    )
    assert np.allclose(np.linalg.eigvalsh(field), [-2, 0, 0, 2])


def test_quarter_period_flip():
    down = StateVector.basis(1, 1)
    out = evolve(down, lambda _t: PAULI["x"], 0.0, math.pi / 2, dt=1e-3)
    assert abs(out.amplitudes[0]) == pytest.approx(1.0, abs=1e-9)
    assert out.amplitudes[0] == pytest.approx(-1j, abs=1e-9)


def test_product_state_purities():
    plus = StateVector(np.full(4, 0.5), 2)
    assert partial_trace_spin(plus, [0]).purity() == pytest.approx(1.0, abs=1e-10)
    downs = StateVector.basis(3 * 4, 2, 4)
    assert partial_trace_spin(downs, "spins").purity() == pytest.approx(1.0)


def test_single_spin_dephasing_factor():
    rho = StateVector(np.array([1, 1]) / math.sqrt(2), 1).density()
    out = dephase_step(rho, 300.0, 1e-5)
    assert out.entries[0, 1].real == pytest.approx(0.5 * math.exp(-2 * 300.0 * 1e-5), abs=1e-8)


@given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(0.0, 9e3))
def test_dephasing_leaves_diagonal_states(seed, gamma):
    p = np.random.default_rng(seed).dirichlet(np.ones(4))
    rho = DensityMatrix(np.diag(p), 2)
    assert np.array_equal(dephase_step(rho, gamma, 1e-5).entries, rho.entries)
