"""
Transverse-field Ising model: ramp schedule, rotations, adiabatic runs and
exact diagonalization.

The simulated Hamiltonian (rotating frame, rad/s) is::

    H(t) = field_sign * B_x * Σ_i σ_i^x
           + J_max * r(t) * Σ_<ij> σ_i^z σ_j^z
           + B_z * Σ_i σ_i^z

With the default ``field_sign = -1`` the state ``|→…→⟩`` is the ground
state of the field term, and ``J_max < 0`` favours ferromagnetic order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import (
    DEFAULT_DT,
    DensityMatrix,
    LinearHamiltonian,
    OperatorTerm,
    StateVector,
    build_many_body_operator,
    evolve,
    evolve_density,
)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
EXPERIMENT_BX = TWO_PI * 4.24e3
EXPERIMENT_J_OVER_BX = 5.2
MAX_ED_SPINS = 10
MAX_DENSITY_SPINS = 3

Orientation = Literal["plus_x", "minus_x"]


@dataclass(frozen=True)
class IsingConfig:
    """Physical parameters of the Ising Hamiltonian, in rad/s."""

    n_spins: int = 2
    B_x: float = EXPERIMENT_BX
    J_max: float = -EXPERIMENT_J_OVER_BX * EXPERIMENT_BX
    B_z_bias: float = 0.0
    coupling_range: Literal["nearest_neighbour", "all_pairs"] = "nearest_neighbour"
    gamma_dephasing: float = 0.0
    field_sign: int = -1

    def __post_init__(self):
        if int(self.n_spins) != self.n_spins or self.n_spins < 2:
            raise ValueError(f"n_spins must be an integer >= 2, got {self.n_spins!r}")
        if self.B_x < 0:
            raise ValueError("B_x must be >= 0 (use field_sign for the direction)")
        if self.coupling_range not in ("nearest_neighbour", "all_pairs"):
            raise ValueError(f"unknown coupling_range {self.coupling_range!r}")
        if self.gamma_dephasing < 0:
            raise ValueError("gamma_dephasing must be >= 0")
        if self.field_sign not in (1, -1):
            raise ValueError("field_sign must be +1 or -1")
        for name in ("B_x", "J_max", "B_z_bias", "gamma_dephasing"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def pairs(self) -> list[tuple[int, int]]:
        if self.coupling_range == "nearest_neighbour":
            return [(i, i + 1) for i in range(self.n_spins - 1)]
        return list(combinations(range(self.n_spins), 2))

    def field_matrix(self) -> np.ndarray:
        terms = [OperatorTerm(self.field_sign * self.B_x, ((i, "x"),)) for i in range(self.n_spins)]
        return build_many_body_operator(terms, self.n_spins)

    def coupling_matrix(self) -> np.ndarray:
        """``Σ σ^z σ^z`` over the coupled pairs, per unit J."""
        terms = [OperatorTerm(1.0, ((i, "z"), (j, "z"))) for i, j in self.pairs()]
        return build_many_body_operator(terms, self.n_spins)

    def bias_matrix(self) -> np.ndarray:
        terms = [OperatorTerm(self.B_z_bias, ((i, "z"),)) for i in range(self.n_spins)]
        return build_many_body_operator(terms, self.n_spins)

    def static_hamiltonian(self, J: float) -> np.ndarray:
        return self.field_matrix() + J * self.coupling_matrix() + self.bias_matrix()


@dataclass(frozen=True)
class RampSchedule:
    """Fraction ``r(t)`` of ``J_max`` switched on at time ``t``.

    Linear from 0 to ``linear_end_fraction`` on ``[0, t_linear_end]``, then
    ``c * (exp(alpha * t_us) - beta)**2`` with ``t_us`` in microseconds and
    ``c`` fixed by ``r(T_total) = 1``.
    """

    T_total: float = 125e-6
    t_linear_end: float = 50e-6
    linear_end_fraction: float = 5e-4
    alpha: float = 0.026
    beta: float = 4.0
    n_steps: int = 50

    def __post_init__(self):
        if not 0 < self.t_linear_end < self.T_total:
            raise ValueError("need 0 < t_linear_end < T_total")
        if not 0 <= self.linear_end_fraction <= 1:
            raise ValueError("linear_end_fraction must lie in [0, 1]")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self._exp_part(self.T_total) == 0:
            raise ValueError("exponential segment vanishes at T_total")

    def _exp_part(self, t):
        return (np.exp(self.alpha * np.asarray(t) * 1e6) - self.beta) ** 2

    @property
    def normalization(self) -> float:
        return float(1.0 / self._exp_part(self.T_total))

    @property
    def step_duration(self) -> float:
        return self.T_total / self.n_steps

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        linear = self.linear_end_fraction * t / self.t_linear_end
        return np.where(t <= self.t_linear_end, linear, self.normalization * self._exp_part(t))

    def time_for_fraction(self, fraction: float) -> float:
        """Earliest time at which the ramp first reaches ``fraction``."""
        if not 0 <= fraction <= 1 + 1e-12:
            raise ValueError(f"ramp fraction {fraction!r} outside [0, 1]")
        fraction = min(fraction, 1.0)
        if fraction == 0:
            return 0.0
        if fraction <= self.linear_end_fraction:
            return fraction / self.linear_end_fraction * self.t_linear_end
        root = self.beta + math.sqrt(fraction / self.normalization)
        t = math.log(root) / self.alpha * 1e-6
        if t < self.t_linear_end or t > self.T_total * (1 + 1e-12):
            t = brentq(
                lambda s: float(self.value(s)) - fraction,
                self.t_linear_end,
                self.T_total,
                xtol=1e-15,
            )
        return min(t, self.T_total)


def ramp_value(schedule: RampSchedule, t):
    """Ramp fraction at ``t`` (seconds); raises outside ``[0, T_total]``."""
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > schedule.T_total * (1 + 1e-12)):
        raise ValueError(f"t outside [0, {schedule.T_total}]")
    out = schedule.value(arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RotationPulse:
    """``R(θ, φ) = cos(θ/2) I - i sin(θ/2) (cos φ σ^x + sin φ σ^y)``."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("rotation angles must be finite")

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        return np.array(
            [
                [c, -1j * s * (math.cos(self.phi) - 1j * math.sin(self.phi))],
                [-1j * s * (math.cos(self.phi) + 1j * math.sin(self.phi)), c],
            ],
            dtype=np.complex128,
        )

    @classmethod
    def from_duration(cls, duration: float, B_x: float, phi: float = 0.0) -> "RotationPulse":
        """Pulse produced by driving for ``duration`` at field ``B_x`` (θ/2 = B_x t)."""
        return cls(2.0 * B_x * duration, phi)


def rotation_operator(pulse: RotationPulse, n_spins: int, fock_levels: int = 1) -> np.ndarray:
    """Same pulse on every spin, identity on the Fock factor."""
    single = pulse.matrix()
    op = np.eye(1, dtype=np.complex128)
    for _ in range(n_spins):
        op = np.kron(op, single)
    return np.kron(op, np.eye(fock_levels))


def rotate(state, pulse: RotationPulse):
    """Apply ``pulse`` to every spin of a state vector or density matrix."""
    op = rotation_operator(pulse, state.n_spins, state.fock_levels)
    if isinstance(state, DensityMatrix):
        return DensityMatrix(op @ state.entries @ op.conj().T, state.n_spins, state.fock_levels)
    return StateVector(op @ state.amplitudes, state.n_spins, state.fock_levels)


_INIT_PHASE = {"plus_x": -math.pi / 2, "minus_x": math.pi / 2}


def prepare_initial(orientation: Orientation, n_spins: int, fock_levels: int = 1) -> StateVector:
    """``|↓…↓⟩|0⟩`` followed by a π/2 pulse at phase ∓π/2 on every spin."""
    if orientation not in _INIT_PHASE:
        raise ValueError(f"orientation must be 'plus_x' or 'minus_x', got {orientation!r}")
    all_down = StateVector.basis((2**n_spins - 1) * fock_levels, n_spins, fock_levels)
    return rotate(all_down, RotationPulse(math.pi / 2, _INIT_PHASE[orientation]))


def ising_hamiltonian(config: IsingConfig, schedule: RampSchedule) -> LinearHamiltonian:
    static = config.field_matrix() + config.bias_matrix()
    return LinearHamiltonian(
        [static, config.J_max * config.coupling_matrix()],
        [np.ones_like, schedule.value],
    )


@dataclass
class AdiabaticResult:
    """Checkpoint record of one adiabatic run.

    ``populations`` has one row per checkpoint and one column per spin
    configuration in basis order.  ``eigenstate_overlap`` is the overlap of
    the state with the instantaneous eigenstate followed from ``t = 0``.
    """

    times: np.ndarray
    populations: np.ndarray
    eigenstate_overlap: np.ndarray
    final_state: StateVector | DensityMatrix
    followed_level: int
    nonadiabatic: bool = False
    config: IsingConfig | None = field(default=None, repr=False)

    @property
    def P_uu(self) -> np.ndarray:
        return self.populations[:, 0]

    @property
    def P_dd(self) -> np.ndarray:
        return self.populations[:, -1]

    @property
    def P_mixed(self) -> np.ndarray:
        return 1.0 - self.P_uu - self.P_dd

    @property
    def magnetization(self) -> np.ndarray:
        return self.P_uu + self.P_dd

    def final_triple(self) -> tuple[float, float, float]:
        """``(P_dd, P_uu, P_mixed)`` at the last checkpoint."""
        return float(self.P_dd[-1]), float(self.P_uu[-1]), float(self.P_mixed[-1])


def _overlap(state, vec) -> float:
    if isinstance(state, DensityMatrix):
        return float(np.real(vec.conj() @ state.entries @ vec))
    return float(abs(np.vdot(vec, state.amplitudes)) ** 2)


def run_adiabatic(
    config: IsingConfig,
    schedule: RampSchedule,
    orientation: Orientation = "plus_x",
    *,
    t_stop: float | None = None,
    dt: float = DEFAULT_DT,
    self_check: bool = False,
    warn: bool = True,
) -> AdiabaticResult:
    """Ramp ``J`` from 0 along ``schedule`` at constant field and record populations.

    Parameters
    ----------
    config, schedule
        Model and ramp.  A non-zero ``config.gamma_dephasing`` switches to the
        density-matrix path, which is limited to three spins.
    orientation : {"plus_x", "minus_x"}
        Initial paramagnetic state.
    t_stop : float, optional
        Switch the interaction off at this time instead of ``T_total``.  The
        run is split into ``schedule.n_steps`` equal checkpoint intervals.
    dt, self_check
        Passed to the integrator.
    warn : bool
        Log a warning when the final eigenstate overlap drops below 0.9
        (at info level on the dephasing path).
        The flag :attr:`AdiabaticResult.nonadiabatic` is set either way.
    """
    if config.B_x <= 0:
        raise ValueError("adiabatic runs need B_x > 0")
    t_end = schedule.T_total if t_stop is None else float(t_stop)
    if not 0 <= t_end <= schedule.T_total * (1 + 1e-12):
        raise ValueError(f"t_stop {t_end!r} outside [0, T_total]")
    density = config.gamma_dephasing > 0
    if density and config.n_spins > MAX_DENSITY_SPINS:
        raise ValueError(
            f"dephasing runs support at most {MAX_DENSITY_SPINS} spins, got {config.n_spins}"
        )

    ham = ising_hamiltonian(config, schedule)
    psi0 = prepare_initial(orientation, config.n_spins)
    state = psi0.density() if density else psi0

    _, vecs0 = np.linalg.eigh(ham(0.0))
    followed = int(np.argmax(np.abs(vecs0.conj().T @ psi0.amplitudes) ** 2))

    times = np.linspace(0.0, t_end, schedule.n_steps + 1)[1:]
    pops = np.empty((schedule.n_steps, 2**config.n_spins))
    overlaps = np.empty(schedule.n_steps)
    _, checkpoint_vecs = np.linalg.eigh(ham.sample(times))
    t_prev = 0.0
    for k, t in enumerate(times):
        if density:
            state = evolve_density(
                state, ham, t_prev, t, dt, gamma=config.gamma_dephasing, self_check=self_check
            )
        else:
            state = evolve(state, ham, t_prev, t, dt, self_check=self_check)
        pops[k] = state.spin_populations()
        overlaps[k] = _overlap(state, checkpoint_vecs[k][:, followed])
        t_prev = t

    nonadiabatic = bool(overlaps[-1] < 0.9)
    if nonadiabatic and warn:
        # with dephasing the overlap also drops through decoherence, so only inform
        log.log(
            logging.INFO if density else logging.WARNING,
            "final instantaneous-eigenstate overlap %.4f < 0.9: evolution is not adiabatic%s",
            overlaps[-1],
            " (includes dephasing loss)" if density else "",
        )
    return AdiabaticResult(times, pops, overlaps, state, followed, nonadiabatic, config)


def sweep_final_ratios(
    config: IsingConfig,
    schedule: RampSchedule,
    ratios: Sequence[float],
    orientation: Orientation = "plus_x",
    *,
    dt: float = DEFAULT_DT,
    self_check: bool = False,
    executor=None,
) -> list[AdiabaticResult]:
    """Independent runs stopped where ``|J(T)| / B_x`` reaches each ratio.

    Results are returned in the order of ``ratios`` whatever the executor.
    """
    j_ratio = abs(config.J_max) / config.B_x
    stops = []
    for ratio in ratios:
        if ratio < 0 or ratio > j_ratio * (1 + 1e-12):
            raise ValueError(f"sweep ratio {ratio!r} outside [0, |J_max|/B_x = {j_ratio:g}]")
        stops.append(schedule.time_for_fraction(ratio / j_ratio) if j_ratio > 0 else 0.0)

    def one(t):
        return run_adiabatic(config, schedule, orientation, t_stop=t, dt=dt, self_check=self_check)

    if executor is None:
        return [one(t) for t in stops]
    return list(executor.map(one, stops))


def spectrum_and_gap(
    config: IsingConfig,
    J_over_Bx: float | None = None,
    branch: Literal["ground", "top"] = "ground",
) -> tuple[np.ndarray, float]:
    """Exact spectrum of the static Hamiltonian and the splitting of the followed doublet.

    ``J = J_over_Bx * B_x`` when a ratio is given, otherwise ``config.J_max``.
    ``branch="ground"`` returns ``E_1 - E_0``; ``"top"`` returns the splitting
    of the two highest levels (the branch followed from ``minus_x``).
    """
    if config.n_spins > MAX_ED_SPINS:
        raise ValueError(f"exact diagonalization limited to {MAX_ED_SPINS} spins")
    J = config.J_max if J_over_Bx is None else J_over_Bx * config.B_x
    energies = np.linalg.eigvalsh(config.static_hamiltonian(J))
    if branch == "ground":
        gap = energies[1] - energies[0]
    elif branch == "top":
        gap = energies[-1] - energies[-2]
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return energies, float(gap)
