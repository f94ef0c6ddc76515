"""Trapped-ion quantum-magnet simulator."""

from ._kernels import USING_NUMBA
from .analysis import (
    ContrastFit,
    ParityScan,
    analyze_final_state,
    calibrate_dephasing,
    fidelity_bound,
    fit_contrast,
    magnetization,
    parity_scan,
)
from .core import (
    ConvergenceError,
    DensityMatrix,
    IonMagnetError,
    NonHermitianError,
    OperatorTerm,
    StateVector,
    TruncationError,
    build_many_body_operator,
    dephase_step,
    evolve,
    evolve_density,
    partial_trace_spin,
)
from .ising import (
    IsingConfig,
    RampSchedule,
    RotationPulse,
    prepare_initial,
    ramp_value,
    rotate,
    run_adiabatic,
    spectrum_and_gap,
    sweep_final_ratios,
)
from .measurement import (
    DetectionModel,
    PhotonHistogram,
    PopulationEstimate,
    fit_populations,
    reference_distribution,
    simulate_shots,
)
from .phonon import (
    WalkingWaveParams,
    build_walking_wave_hamiltonian,
    effective_coupling_analytic,
    extract_coupling_numeric,
    run_closed_loop,
)
from .seeding import make_generator, seed_policy

__version__ = "0.1.0"
