"""
Magnetization, parity scans, contrast fits and the entanglement-fidelity bound.

Phase reference
---------------
The analysis pulse of a parity scan at phase ``φ`` is
``R(π/2, φ + reference_phase)``.  The default reference is the phase of the
initialisation pulse (-π/2).  With this choice the parity of
``(|↑↑⟩ + |↓↓⟩)/√2`` is ``+cos 2φ``; in general the cosine coefficient equals
``2 Re ρ_{↑↑,↓↓}``, which is what makes ``population/2 + C/2`` the overlap
with that Bell state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import DEFAULT_DT, DensityMatrix, StateVector, partial_trace_spin
from .ising import (
    IsingConfig,
    Orientation,
    RampSchedule,
    RotationPulse,
    rotate,
    rotation_operator,
    run_adiabatic,
)
from .measurement import validate_probabilities

DEFAULT_REFERENCE_PHASE = -math.pi / 2
DEFAULT_SCAN_POINTS = 24
MAPPING_PULSE = RotationPulse(math.pi / 2, 0.0)


@dataclass(frozen=True)
class ParityScan:
    phi_values: np.ndarray
    parity_values: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi_values, dtype=np.float64).reshape(-1)
        par = np.asarray(self.parity_values, dtype=np.float64).reshape(-1)
        if phi.shape != par.shape:
            raise ValueError("phi_values and parity_values differ in length")
        if np.any(np.abs(par) > 1 + 1e-9):
            raise ValueError("parity outside [-1, 1]")
        object.__setattr__(self, "phi_values", phi)
        object.__setattr__(self, "parity_values", par)

    def to_csv(self) -> str:
        lines = ["phi_rad,parity"]
        lines += [f"{phi!r},{p!r}" for phi, p in zip(self.phi_values.tolist(), self.parity_values.tolist())]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ContrastFit:
    """Least-squares fit ``P(φ) = A cos 2φ + B sin 2φ + offset``."""

    C: float
    stderr_C: float
    offset: float
    stderr_offset: float
    cos_component: float
    sin_component: float

    def report(self) -> str:
        return f"C={self.C!r}\nstderr_C={self.stderr_C!r}\noffset={self.offset!r}\n"


def magnetization(probs) -> float:
    """``P_dd + P_uu`` of a ``(P_dd, P_uu, P_mixed)`` triple."""
    p_dd, p_uu, _ = validate_probabilities(probs)
    return p_dd + p_uu


def _two_spin_density(state) -> DensityMatrix:
    if state.n_spins != 2:
        raise ValueError(f"parity analysis needs exactly 2 spins, got {state.n_spins}")
    if state.fock_levels > 1:
        return partial_trace_spin(state, "spins")
    if isinstance(state, StateVector):
        return state.density()
    return state


def parity(state) -> float:
    """``P_dd + P_uu - P_mixed`` of a two-spin state."""
    pops = _two_spin_density(state).spin_populations()
    return float(pops[0] + pops[3] - pops[1] - pops[2])


def parity_scan(
    state,
    phi_values: Sequence[float] | None = None,
    reference_phase: float = DEFAULT_REFERENCE_PHASE,
) -> ParityScan:
    """Parity after ``R(π/2, φ + reference_phase)`` on both spins, for each ``φ``."""
    rho = _two_spin_density(state).entries
    if phi_values is None:
        phi_values = np.linspace(0.0, 2 * math.pi, DEFAULT_SCAN_POINTS, endpoint=False)
    phi_values = np.asarray(phi_values, dtype=np.float64)
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    values = np.empty(phi_values.shape)
    for k, phi in enumerate(phi_values):
        u = rotation_operator(RotationPulse(math.pi / 2, phi + reference_phase), 2)
        diag = np.real(np.einsum("ij,jk,ik->i", u, rho, u.conj()))
        values[k] = float(np.clip(signs @ diag, -1.0, 1.0))
    return ParityScan(phi_values, values)


def fit_contrast(scan: ParityScan) -> ContrastFit:
    """Fit the 2φ oscillation of a parity scan.

    ``C = sqrt(A² + B²)``, carrying the sign of the cosine coefficient ``A``
    when the sine coefficient is not significant (``|B|`` below its standard
    error, or below 1e-9 for noiseless data).
    """
    phi = scan.phi_values
    if phi.size < 8:
        raise ValueError(f"need at least 8 phase points, got {phi.size}")
    design = np.column_stack([np.cos(2 * phi), np.sin(2 * phi), np.ones_like(phi)])
    if np.linalg.matrix_rank(design) < 3:
        raise ValueError("degenerate phase grid")
    span = float(phi.max() - phi.min())
    if span * phi.size / (phi.size - 1) < math.pi - 1e-9:
        raise ValueError("phase grid does not span one period of 2φ")
    coef, *_ = np.linalg.lstsq(design, scan.parity_values, rcond=None)
    a, b, offset = (float(x) for x in coef)
    resid = scan.parity_values - design @ coef
    dof = phi.size - 3
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(design.T @ design)
    amp = math.hypot(a, b)
    if amp > 0:
        var_c = (a * a * cov[0, 0] + b * b * cov[1, 1] + 2 * a * b * cov[0, 1]) / (amp * amp)
    else:
        var_c = 0.5 * (cov[0, 0] + cov[1, 1])
    stderr_c = math.sqrt(max(var_c, 0.0))
    stderr_b = math.sqrt(max(cov[1, 1], 0.0))
    C = math.copysign(amp, a) if abs(b) <= max(stderr_b, 1e-9) else amp
    return ContrastFit(C, stderr_c, offset, math.sqrt(max(cov[2, 2], 0.0)), a, b)


def fidelity_bound(
    population: float, C: float, branch: Literal["ferro", "antiferro"] = "ferro"
) -> float:
    """Lower bound ``population/2 + C/2`` on the Bell-state fidelity.

    ``population`` is ``P_dd + P_uu`` for the ferromagnetic target and
    ``P_ud + P_du`` for the anti-ferromagnetic one (whose parity is measured
    after the ``R(π/2, 0)`` mapping pulse).  ``C`` is the signed cosine
    component of the parity oscillation.
    """
    if branch not in ("ferro", "antiferro"):
        raise ValueError(f"unknown branch {branch!r}")
    if not 0 <= population <= 1 + 1e-12:
        raise ValueError(f"population {population!r} outside [0, 1]")
    if not -1 - 1e-12 <= C <= 1 + 1e-12:
        raise ValueError(f"contrast {C!r} outside [-1, 1]")
    return population / 2 + C / 2


@dataclass(frozen=True)
class EntanglementReport:
    branch: str
    population: float
    fit: ContrastFit
    fidelity: float
    scan: ParityScan


def analyze_final_state(
    state,
    branch: Literal["ferro", "antiferro"] = "ferro",
    phi_values: Sequence[float] | None = None,
    reference_phase: float = DEFAULT_REFERENCE_PHASE,
) -> EntanglementReport:
    """Populations, parity scan, contrast and fidelity bound of a final state.

    For the anti-ferromagnetic branch the ``R(π/2, 0)`` mapping pulse is
    applied before the scan.
    """
    rho = _two_spin_density(state)
    pops = rho.spin_populations()
    if branch == "ferro":
        population = float(pops[0] + pops[3])
        scanned = rho
    elif branch == "antiferro":
        population = float(pops[1] + pops[2])
        scanned = rotate(rho, MAPPING_PULSE)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    scan = parity_scan(scanned, phi_values, reference_phase)
    fit = fit_contrast(scan)
    population = min(max(population, 0.0), 1.0)
    fidelity = fidelity_bound(population, float(np.clip(fit.cos_component, -1, 1)), branch)
    return EntanglementReport(branch, population, fit, fidelity, scan)


def branch_for(orientation: Orientation) -> str:
    return "ferro" if orientation == "plus_x" else "antiferro"


def calibrate_dephasing(
    config: IsingConfig,
    schedule: RampSchedule,
    target_contrast: float = 0.78,
    orientation: Orientation = "plus_x",
    *,
    dt: float = DEFAULT_DT,
    gamma_max: float = 1e5,
    tol: float = 1e-4,
) -> tuple[float, EntanglementReport]:
    """Dephasing rate whose final-state contrast equals ``target_contrast``.

    The contrast falls monotonically with the rate, so a bracketing root
    search on ``[0, gamma_max]`` suffices.  ``tol`` bounds the contrast
    error, not the rate.
    """
    branch = branch_for(orientation)

    def report(gamma):
        cfg = _with_gamma(config, gamma)
        final = run_adiabatic(cfg, schedule, orientation, dt=dt, warn=False).final_state
        return analyze_final_state(final, branch)

    c0 = report(0.0).fit.cos_component
    if not 0 < target_contrast < c0:
        raise ValueError(
            f"target contrast {target_contrast} not reachable (ideal contrast {c0:.4f})"
        )
    gamma = brentq(
        lambda g: report(g).fit.cos_component - target_contrast,
        0.0,
        gamma_max,
        xtol=1e-6,
        rtol=tol * 1e-2,
    )
    final = report(gamma)
    if abs(final.fit.cos_component - target_contrast) > tol:
        raise ValueError("dephasing calibration missed its tolerance")
    return float(gamma), final


def _with_gamma(config: IsingConfig, gamma: float) -> IsingConfig:
    return replace(config, gamma_dephasing=float(gamma))
