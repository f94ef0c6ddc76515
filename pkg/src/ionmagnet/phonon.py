"""
Walking-wave spin-phonon coupling on the spin ⊗ stretch-mode space.

In the frame rotating at the mode frequency (after the rotating-wave
approximation on the drive) the interaction reads::

    H(t) = Σ_i ĝ_i (a e^{iδt} + a† e^{-iδt})

with ``ĝ_i = b_i * (g_up |↑⟩⟨↑| + g_down |↓⟩⟨↓|)_i``.  Every spin
configuration ``s`` sees a driven oscillator with amplitude
``G_s = Σ_i b_i g(s_i)``; after a full loop ``t = 2π/|δ|`` the motion is
back in its initial state and configuration ``s`` has picked up the phase
``φ_s = -G_s**2 t / δ`` (energy shift ``G_s**2 / δ``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_DT,
    LinearHamiltonian,
    StateVector,
    TruncationError,
    evolve,
    partial_trace_spin,
    spin_config_labels,
)

TWO_PI = 2.0 * math.pi
EXPERIMENT_OMEGA_STRETCH = TWO_PI * 3.7e6
EXPERIMENT_OMEGA_COM = TWO_PI * 2.1e6
EXPERIMENT_DELTA = -TWO_PI * 250e3
EXPERIMENT_J_TARGET = TWO_PI * 22.1e3
FORCE_RATIO = -1.5
TOP_LEVEL_LIMIT = 1e-6


@dataclass(frozen=True)
class WalkingWaveParams:
    """Drive and mode parameters for the two-ion stretch mode (rad/s).

    ``g_up`` is the spin-↑ coupling, already including the Lamb-Dicke
    factor; ``lamb_dicke`` is carried only to express it as a bare force
    rate (:attr:`force_amplitude`).
    """

    g_up: float
    omega_stretch: float = EXPERIMENT_OMEGA_STRETCH
    delta: float = EXPERIMENT_DELTA
    force_ratio: float = FORCE_RATIO
    mode_amplitudes: tuple[float, float] = (1 / math.sqrt(2), -1 / math.sqrt(2))
    fock_levels: int = 12
    lamb_dicke: float = 0.1
    omega_com: float = EXPERIMENT_OMEGA_COM
    n_spins: int = field(default=2, init=False)

    def __post_init__(self):
        if self.force_ratio != FORCE_RATIO:
            raise ValueError(f"force_ratio must be exactly {FORCE_RATIO}")
        if len(self.mode_amplitudes) != self.n_spins:
            raise ValueError("need one mode participation amplitude per ion")
        if int(self.fock_levels) != self.fock_levels or self.fock_levels < 8:
            raise ValueError("fock_levels must be an integer >= 8")
        if not abs(self.delta) < self.omega_stretch:
            raise ValueError("|delta| must be smaller than omega_stretch")
        if self.lamb_dicke <= 0:
            raise ValueError("lamb_dicke must be positive")
        if not math.isfinite(self.g_up):
            raise ValueError("g_up must be finite")

    @classmethod
    def calibrated(cls, target_J: float = EXPERIMENT_J_TARGET, **kwargs) -> "WalkingWaveParams":
        """Choose ``g_up`` so the analytic ``|J_eff|`` equals ``target_J``."""
        probe = cls(g_up=1.0, **kwargs)
        j_unit = abs(effective_coupling_analytic(probe).J_eff)
        return cls(g_up=math.sqrt(abs(target_J) / j_unit), **kwargs)

    @property
    def g_down(self) -> float:
        return self.force_ratio * self.g_up

    @property
    def force_amplitude(self) -> float:
        return self.g_up / self.lamb_dicke

    @property
    def enhancement(self) -> float:
        """Resonant enhancement ``|ω_stretch / δ|`` over the standing-wave case."""
        return abs(self.omega_stretch / self.delta)

    @property
    def loop_time(self) -> float:
        if self.delta == 0:
            raise ValueError("delta = 0 has no closed phase-space loop")
        return TWO_PI / abs(self.delta)

    def configuration_couplings(self) -> np.ndarray:
        """``G_s`` for every spin configuration in basis order."""
        out = np.zeros(2**self.n_spins)
        for idx in range(2**self.n_spins):
            for ion, b in enumerate(self.mode_amplitudes):
                down = (idx >> (self.n_spins - 1 - ion)) & 1
                out[idx] += b * (self.g_down if down else self.g_up)
        return out


def _ladder(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels)), 1).astype(np.complex128)


def walking_wave_hamiltonian(params: WalkingWaveParams) -> LinearHamiltonian:
    """``H(t) = cos(δt) (A + A†) + sin(δt) i(A - A†)`` with ``A = diag(G) ⊗ a``."""
    A = np.kron(np.diag(params.configuration_couplings()), _ladder(params.fock_levels))
    delta = params.delta
    return LinearHamiltonian(
        [A + A.conj().T, 1j * (A - A.conj().T)],
        [lambda t: np.cos(delta * t), lambda t: np.sin(delta * t)],
    )


def build_walking_wave_hamiltonian(params: WalkingWaveParams, t: float) -> np.ndarray:
    return walking_wave_hamiltonian(params)(t)


def number_operator(params: WalkingWaveParams) -> np.ndarray:
    n = np.diag(np.arange(params.fock_levels, dtype=np.float64))
    return np.kron(np.eye(2**params.n_spins), n)


@dataclass
class ClosedLoopResult:
    """Trajectory of one closed-loop run.

    ``phases`` maps each spin configuration label to its accumulated phase
    (unwrapped in time) read from the ``|s, n=0⟩`` amplitude; configurations
    absent from the initial state are ``nan``.
    """

    times: np.ndarray
    spin_purity: np.ndarray
    mean_phonon: np.ndarray
    top_population: np.ndarray
    phases: dict[str, float]
    phase_trajectories: np.ndarray
    final_state: StateVector
    duration: float


def run_closed_loop(
    params: WalkingWaveParams,
    n_loops: int = 1,
    initial_spin: StateVector | None = None,
    *,
    samples: int = 101,
    dt: float = DEFAULT_DT,
    stop_fraction: float = 1.0,
) -> ClosedLoopResult:
    """Evolve ``initial_spin ⊗ |0⟩`` through ``n_loops`` phase-space loops.

    Parameters
    ----------
    params : WalkingWaveParams
    n_loops : int
        Duration is ``n_loops * 2π/|δ|``.
    initial_spin : StateVector, optional
        Spin-only state; defaults to ``|→→⟩``.
    samples : int
        Minimum number of diagnostic samples, endpoints included.  Raised
        automatically so the phase advance between samples stays below 0.5
        rad.
    stop_fraction : float
        Stop after this fraction of the full duration (for mid-loop looks).

    Raises
    ------
    TruncationError
        If the two highest Fock levels ever hold more than 1e-6 population.
    """
    if int(n_loops) != n_loops or n_loops < 1:
        raise ValueError("n_loops must be a positive integer")
    if not 0 < stop_fraction <= 1:
        raise ValueError("stop_fraction must lie in (0, 1]")
    n, F = params.n_spins, params.fock_levels
    if initial_spin is None:
        initial_spin = StateVector(np.full(2**n, 2 ** (-n / 2), dtype=np.complex128), n)
    if initial_spin.n_spins != n or initial_spin.fock_levels != 1:
        raise ValueError("initial_spin must be a spin-only state of the two ions")

    duration = n_loops * params.loop_time
    t_end = duration * stop_fraction
    max_phase = float(np.max(params.configuration_couplings() ** 2)) * t_end / abs(params.delta)
    samples = max(int(samples), int(math.ceil(max_phase / 0.5)) + 1, 2)
    times = np.linspace(0.0, t_end, samples)

    amps = np.zeros(2**n * F, dtype=np.complex128)
    amps[::F] = initial_spin.amplitudes
    state = StateVector(amps, n, F)
    c0 = initial_spin.amplitudes
    present = np.abs(c0) > 1e-12

    ham = walking_wave_hamiltonian(params)
    num = np.diag(number_operator(params)).real
    top = np.zeros(2**n * F, dtype=bool)
    top.reshape(2**n, F)[:, -2:] = True

    purity = np.empty(samples)
    phonons = np.empty(samples)
    top_pop = np.empty(samples)
    raw_phase = np.full((samples, 2**n), np.nan)
    for k, t in enumerate(times):
        if k:
            state = evolve(state, ham, times[k - 1], t, dt)
        probs = np.abs(state.amplitudes) ** 2
        top_pop[k] = probs[top].sum()
        if top_pop[k] > TOP_LEVEL_LIMIT:
            raise TruncationError(
                f"population {top_pop[k]:.3e} in the top two Fock levels at "
                f"t = {t * 1e6:.4f} us exceeds {TOP_LEVEL_LIMIT:g}; raise fock_levels "
                f"(currently {F})"
            )
        phonons[k] = float(probs @ num)
        purity[k] = partial_trace_spin(state, "spins").purity()
        ground = state.amplitudes[::F]
        raw_phase[k, present] = np.angle(ground[present] / c0[present])

    unwrapped = raw_phase.copy()
    unwrapped[:, present] = np.unwrap(raw_phase[:, present], axis=0)
    phases = dict(zip(spin_config_labels(n), unwrapped[-1].tolist()))
    return ClosedLoopResult(
        times, purity, phonons, top_pop, phases, unwrapped, state, t_end
    )


@dataclass(frozen=True)
class EffectiveCoupling:
    """Second-order effective spin Hamiltonian of one closed loop.

    ``H_eff = offset + Σ_i single_spin[i] σ_i^z + J_eff σ_1^z σ_2^z``.
    """

    J_eff: float
    single_spin: tuple[float, ...]
    offset: float
    enhancement: float


def effective_coupling_analytic(params: WalkingWaveParams) -> EffectiveCoupling:
    """Effective couplings from the mean/difference split of the per-ion forces.

    Writing ``g(s_i) = ḡ + Δ σ_i^z`` gives ``G_s = ḡ Σb + Σ_i b_i Δ σ_i^z``
    and the loop-averaged energy ``G_s**2 / δ``, hence
    ``J_ij = 2 b_i b_j Δ² / δ`` and ``h_i = 2 ḡ Δ b_i Σb / δ``.
    """
    if params.delta == 0:
        raise ValueError("delta = 0: effective coupling diverges")
    b = np.asarray(params.mode_amplitudes, dtype=np.float64)
    g_mean = 0.5 * (params.g_up + params.g_down)
    g_diff = 0.5 * (params.g_up - params.g_down)
    d = params.delta
    J = 2.0 * b[0] * b[1] * g_diff**2 / d
    single = tuple(float(2.0 * g_mean * g_diff * bi * b.sum() / d) for bi in b)
    offset = float((g_mean**2 * b.sum() ** 2 + g_diff**2 * (b**2).sum()) / d)
    return EffectiveCoupling(float(J), single, offset, params.enhancement)


def decompose_phases(phases: dict[str, float], duration: float) -> EffectiveCoupling:
    """Fit ``-φ_s / t = offset + h_1 z_1 + h_2 z_2 + J z_1 z_2`` exactly for two spins."""
    p = {k: phases[k] for k in ("↑↑", "↑↓", "↓↑", "↓↓")}
    if any(not math.isfinite(v) for v in p.values()):
        raise ValueError("all four configuration phases are needed")
    e = {k: -v / duration for k, v in p.items()}
    J = (e["↑↑"] + e["↓↓"] - e["↑↓"] - e["↓↑"]) / 4
    h1 = (e["↑↑"] + e["↑↓"] - e["↓↑"] - e["↓↓"]) / 4
    h2 = (e["↑↑"] - e["↑↓"] + e["↓↑"] - e["↓↓"]) / 4
    offset = sum(e.values()) / 4
    return EffectiveCoupling(J, (h1, h2), offset, float("nan"))


def extract_coupling_numeric(params: WalkingWaveParams, dt: float = DEFAULT_DT) -> float:
    """``J_eff`` read off the configuration phases after one numerically integrated loop.

    Phases are accumulated as ``e^{iφ}``, so the energy-convention coupling is
    ``-[φ(↑↑) + φ(↓↓) - φ(↑↓) - φ(↓↑)] / (4 t)``.
    """
    result = run_closed_loop(params, 1, dt=dt)
    return decompose_phases(result.phases, result.duration).J_eff
