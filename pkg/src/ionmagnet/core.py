"""
Dense linear algebra on the spin ⊗ Fock product space.

Basis convention
----------------
A basis index is ``spin_index * fock_levels + n``.  Within ``spin_index``
spin 0 is the most significant bit and bit value 0 means ``|↑⟩``, so for two
spins the order is ↑↑, ↑↓, ↓↑, ↓↓.  ``σ^z|↑⟩ = +|↑⟩``.  The Fock index ``n``
is the least significant factor.

Units: angular frequencies in rad/s (ħ = 1), times in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from . import _kernels

__all__ = [
    "IonMagnetError",
    "NonHermitianError",
    "ConvergenceError",
    "TruncationError",
    "PAULI",
    "StateVector",
    "DensityMatrix",
    "OperatorTerm",
    "LinearHamiltonian",
    "build_many_body_operator",
    "embed_single_spin",
    "spin_config_labels",
    "evolve",
    "evolve_density",
    "partial_trace_spin",
    "dephase_step",
    "dephasing_decay",
]

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-8
DEFAULT_DT = 1e-8
SELF_CHECK_TOL = 1e-7
_CHUNK = 2048


class IonMagnetError(Exception):
    """Base class for simulator errors."""


class NonHermitianError(IonMagnetError, ValueError):
    pass


class ConvergenceError(IonMagnetError, RuntimeError):
    """A numerical procedure did not reach its stated accuracy."""


class TruncationError(IonMagnetError, RuntimeError):
    """Population leaked into the top levels of a truncated Fock space."""


PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def _check_shape(n_spins: int, fock_levels: int) -> int:
    if int(n_spins) != n_spins or n_spins < 0:
        raise ValueError(f"n_spins must be a non-negative integer, got {n_spins!r}")
    if int(fock_levels) != fock_levels or fock_levels < 1:
        raise ValueError(f"fock_levels must be an integer >= 1, got {fock_levels!r}")
    return (2 ** int(n_spins)) * int(fock_levels)


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on ``2**n_spins * fock_levels`` amplitudes."""

    amplitudes: np.ndarray
    n_spins: int
    fock_levels: int = 1

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        dim = _check_shape(self.n_spins, self.fock_levels)
        if amps.shape[0] != dim:
            raise ValueError(
                f"{amps.shape[0]} amplitudes do not match basis shape "
                f"({self.n_spins}, {self.fock_levels}) of dimension {dim}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: |psi|^2 = {norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, amplitudes, n_spins, fock_levels=1):
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        return cls(amps / np.linalg.norm(amps), n_spins, fock_levels)

    @classmethod
    def basis(cls, index: int, n_spins: int, fock_levels: int = 1) -> "StateVector":
        amps = np.zeros(_check_shape(n_spins, fock_levels), dtype=np.complex128)
        amps[index] = 1.0
        return cls(amps, n_spins, fock_levels)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def basis_shape(self) -> tuple[int, int]:
        return (self.n_spins, self.fock_levels)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def spin_populations(self) -> np.ndarray:
        """Probabilities of each spin configuration, marginal over Fock."""
        probs = np.abs(self.amplitudes) ** 2
        return probs.reshape(2**self.n_spins, self.fock_levels).sum(axis=1)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(
            np.outer(self.amplitudes, self.amplitudes.conj()),
            self.n_spins,
            self.fock_levels,
        )


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    entries: np.ndarray
    n_spins: int
    fock_levels: int = 1
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=np.complex128)
        dim = _check_shape(self.n_spins, self.fock_levels)
        if rho.shape != (dim, dim):
            raise ValueError(
                f"matrix of shape {rho.shape} does not match basis shape "
                f"({self.n_spins}, {self.fock_levels})"
            )
        if self.validate:
            if np.max(np.abs(rho - rho.conj().T), initial=0.0) > 1e-10:
                raise ValueError("density matrix is not Hermitian")
            tr = np.trace(rho).real
            if abs(tr - 1.0) > NORM_TOL:
                raise ValueError(f"density matrix trace is {tr!r}, expected 1")
            if np.linalg.eigvalsh(rho).min() < -1e-9:
                raise ValueError("density matrix has negative eigenvalues")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def basis_shape(self) -> tuple[int, int]:
        return (self.n_spins, self.fock_levels)

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def purity(self) -> float:
        return float(np.real(np.einsum("ij,ji->", self.entries, self.entries)))

    def spin_populations(self) -> np.ndarray:
        diag = np.real(np.diag(self.entries))
        return diag.reshape(2**self.n_spins, self.fock_levels).sum(axis=1)


State = Union[StateVector, DensityMatrix]


@dataclass(frozen=True)
class OperatorTerm:
    """``coefficient * Π σ_site^axis`` over the listed factors."""

    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __post_init__(self):
        factors = tuple((int(s), str(a)) for s, a in self.factors)
        sites = [s for s, _ in factors]
        if len(set(sites)) != len(sites):
            raise ValueError(f"repeated site index in {factors}")
        for s, a in factors:
            if a not in PAULI:
                raise ValueError(f"invalid axis {a!r}; expected one of x, y, z")
            if s < 0:
                raise ValueError(f"negative site index {s}")
        if not np.isfinite(self.coefficient) or np.iscomplexobj(self.coefficient):
            raise ValueError("coefficient must be a finite real number")
        object.__setattr__(self, "factors", factors)


def embed_single_spin(op: np.ndarray, site: int, n_spins: int, fock_levels: int = 1):
    """Kronecker-embed a 2x2 operator at ``site``; identity elsewhere."""
    if not 0 <= site < n_spins:
        raise IndexError(f"site {site} out of range for {n_spins} spins")
    left = np.eye(2**site)
    right = np.eye(2 ** (n_spins - site - 1) * fock_levels)
    return np.kron(np.kron(left, op), right)


def build_many_body_operator(
    terms: Iterable[OperatorTerm], n_spins: int, fock_levels: int = 1
) -> np.ndarray:
    """Sum of Pauli-product terms, identity on the Fock factor.

    Parameters
    ----------
    terms : iterable of OperatorTerm
    n_spins : int
    fock_levels : int

    Returns
    -------
    ndarray
        Hermitian ``D x D`` complex matrix.
    """
    dim = _check_shape(n_spins, fock_levels)
    total = np.zeros((dim, dim), dtype=np.complex128)
    for term in terms:
        if not isinstance(term, OperatorTerm):
            term = OperatorTerm(*term)
        ops = [np.eye(2, dtype=np.complex128)] * n_spins
        for site, axis in term.factors:
            if site >= n_spins:
                raise IndexError(f"site {site} out of range for {n_spins} spins")
            ops[site] = PAULI[axis]
        mat = np.eye(1, dtype=np.complex128)
        for op in ops:
            mat = np.kron(mat, op)
        total += term.coefficient * np.kron(mat, np.eye(fock_levels))
    return total


def spin_config_labels(n_spins: int) -> list[str]:
    """Labels like ``'↑↓'`` in basis order."""
    labels = []
    for idx in range(2**n_spins):
        bits = format(idx, f"0{n_spins}b") if n_spins else ""
        labels.append("".join("↑" if b == "0" else "↓" for b in bits))
    return labels


class LinearHamiltonian:
    """``H(t) = Σ_k f_k(t) H_k`` with real scalar coefficient functions.

    Callable on a scalar time; :meth:`sample` evaluates a whole time grid in
    one vectorized pass, which :func:`evolve` uses when available.
    """

    def __init__(self, matrices: Sequence[np.ndarray], coefficients: Sequence[Callable]):
        if len(matrices) != len(coefficients):
            raise ValueError("need one coefficient function per matrix")
        self.matrices = np.array([np.asarray(m, dtype=np.complex128) for m in matrices])
        self.coefficients = list(coefficients)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def coefficient_values(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=np.float64))
        cols = []
        for f in self.coefficients:
            vals = np.broadcast_to(np.asarray(f(times), dtype=np.float64), times.shape)
            cols.append(vals)
        return np.stack(cols, axis=-1)

    def sample(self, times) -> np.ndarray:
        coeffs = self.coefficient_values(times)
        return np.einsum("nk,kij->nij", coeffs, self.matrices)

    def __call__(self, t: float) -> np.ndarray:
        return self.sample([t])[0]


def _step_grid(t0: float, t1: float, dt: float) -> tuple[int, float]:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if t1 < t0:
        raise ValueError(f"t1 = {t1!r} precedes t0 = {t0!r}")
    span = t1 - t0
    n = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
    return n, (span / n if n else 0.0)


def _sample_hamiltonians(hamiltonian_fn, times, dim) -> np.ndarray:
    if hasattr(hamiltonian_fn, "sample"):
        hams = np.asarray(hamiltonian_fn.sample(times), dtype=np.complex128)
    else:
        hams = np.array([hamiltonian_fn(t) for t in times], dtype=np.complex128)
    if hams.shape[1:] != (dim, dim):
        raise ValueError(
            f"Hamiltonian samples have shape {hams.shape[1:]}, expected ({dim}, {dim})"
        )
    asym = np.max(np.abs(hams - hams.conj().transpose(0, 2, 1)), initial=0.0)
    if asym > HERMITIAN_TOL:
        raise NonHermitianError(f"Hamiltonian sample asymmetry {asym:.3e} exceeds 1e-8")
    return hams


def _run_steps(array, hamiltonian_fn, t0, n, step, kernel, *extra):
    dim = array.shape[0]
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        mids = t0 + (np.arange(start, stop) + 0.5) * step
        hams = _sample_hamiltonians(hamiltonian_fn, mids, dim)
        array = kernel(array, hams, step, *extra)
    return array


def evolve(
    state: StateVector,
    hamiltonian_fn: Callable[[float], np.ndarray],
    t0: float,
    t1: float,
    dt: float = DEFAULT_DT,
    self_check: bool = False,
) -> StateVector:
    """Propagate ``state`` from ``t0`` to ``t1`` under ``H(t)``.

    The interval is cut into equal steps no longer than ``dt``; on each step
    the Hamiltonian is frozen at the step midpoint and applied exactly via
    its eigendecomposition.  With ``self_check`` the run is repeated at half
    the step and :class:`ConvergenceError` is raised if any amplitude moves
    by more than 1e-7.
    """
    n, step = _step_grid(t0, t1, dt)
    if n == 0:
        return state
    psi = _run_steps(state.amplitudes, hamiltonian_fn, t0, n, step, _kernels.propagate_state)
    if self_check:
        fine = _run_steps(
            state.amplitudes, hamiltonian_fn, t0, 2 * n, step / 2, _kernels.propagate_state
        )
        diff = float(np.max(np.abs(fine - psi)))
        if diff >= SELF_CHECK_TOL:
            raise ConvergenceError(
                f"halving dt changed the state by {diff:.3e} (limit {SELF_CHECK_TOL:g}); "
                "reduce dt"
            )
    return StateVector(psi, state.n_spins, state.fock_levels)


def dephasing_decay(n_spins: int, fock_levels: int, gamma: float, dt: float) -> np.ndarray:
    """Elementwise factor ``exp(-2 γ dt · h(a, b))`` with ``h`` the spin Hamming distance."""
    spin_idx = np.repeat(np.arange(2**n_spins), fock_levels)
    diff = spin_idx[:, None] ^ spin_idx[None, :]
    hamming = np.zeros(diff.shape, dtype=np.float64)
    for bit in range(n_spins):
        hamming += (diff >> bit) & 1
    return np.exp(-2.0 * gamma * dt * hamming)


def _check_dephasing(gamma: float, dt: float) -> None:
    if gamma < 0:
        raise ValueError(f"dephasing rate must be >= 0, got {gamma!r}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if gamma * dt >= 0.1:
        raise ValueError(f"dephasing step too large: gamma*dt = {gamma * dt:.3g} >= 0.1")


def dephase_step(rho: DensityMatrix, gamma: float, dt: float) -> DensityMatrix:
    """Exact action of per-spin σ^z Lindblad dephasing over ``dt``.

    Each collapse operator is ``sqrt(gamma) σ_i^z``, so a coherence between
    configurations differing on ``h`` spins decays as ``exp(-2 gamma h dt)``.
    Populations are untouched.
    """
    _check_dephasing(gamma, dt)
    if gamma == 0:
        return rho
    decay = dephasing_decay(rho.n_spins, rho.fock_levels, gamma, dt)
    return DensityMatrix(rho.entries * decay, rho.n_spins, rho.fock_levels)


def evolve_density(
    rho: DensityMatrix,
    hamiltonian_fn: Callable[[float], np.ndarray],
    t0: float,
    t1: float,
    dt: float = DEFAULT_DT,
    gamma: float = 0.0,
    self_check: bool = False,
) -> DensityMatrix:
    """Density-matrix counterpart of :func:`evolve` with optional dephasing.

    Each step applies the midpoint unitary followed by :func:`dephase_step`
    over the same step (first-order splitting).
    """
    n, step = _step_grid(t0, t1, dt)
    if n == 0:
        return rho

    def run(n_steps, h):
        if gamma:
            _check_dephasing(gamma, h)
        decay = dephasing_decay(rho.n_spins, rho.fock_levels, gamma, h)
        return _run_steps(
            rho.entries, hamiltonian_fn, t0, n_steps, h, _kernels.propagate_density, decay
        )

    out = run(n, step)
    if self_check:
        fine = run(2 * n, step / 2)
        diff = float(np.max(np.abs(fine - out)))
        if diff >= SELF_CHECK_TOL:
            raise ConvergenceError(
                f"halving dt changed the density matrix by {diff:.3e}; reduce dt"
            )
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out, rho.n_spins, rho.fock_levels)


def partial_trace_spin(rho_or_psi: State, keep) -> DensityMatrix:
    """Reduced density matrix of a subsystem.

    Parameters
    ----------
    rho_or_psi : StateVector or DensityMatrix
    keep : {"spins", "fock"} or sequence of int
        ``"spins"`` traces out the Fock factor, ``"fock"`` traces out every
        spin, a sequence of spin indices keeps those spins (in ascending
        order) and traces out the other spins and the Fock factor.
    """
    n, f = rho_or_psi.n_spins, rho_or_psi.fock_levels
    if isinstance(keep, str):
        if keep == "spins":
            kept_spins, keep_fock = list(range(n)), False
        elif keep == "fock":
            kept_spins, keep_fock = [], True
        else:
            raise ValueError(f"unknown subsystem selector {keep!r}")
    else:
        kept_spins = sorted(int(k) for k in keep)
        if len(set(kept_spins)) != len(kept_spins) or any(
            not 0 <= k < n for k in kept_spins
        ):
            raise ValueError(f"spin selector {keep!r} inconsistent with {n} spins")
        keep_fock = False

    dims = [2] * n + [f]
    kept_axes = kept_spins + ([n] if keep_fock else [])
    traced = [ax for ax in range(n + 1) if ax not in kept_axes]
    kept_dim = int(np.prod([dims[a] for a in kept_axes])) if kept_axes else 1

    if isinstance(rho_or_psi, StateVector):
        psi = rho_or_psi.amplitudes.reshape(dims)
        psi = np.transpose(psi, kept_axes + traced).reshape(kept_dim, -1)
        red = psi @ psi.conj().T
    else:
        rho = rho_or_psi.entries.reshape(dims + dims)
        order = kept_axes + traced
        rho = np.transpose(rho, order + [len(dims) + a for a in order])
        rest = rho.size // (kept_dim * kept_dim)
        rest = int(round(math.sqrt(rest)))
        rho = rho.reshape(kept_dim, rest, kept_dim, rest)
        red = np.einsum("ajbj->ab", rho)
    return DensityMatrix(red, len(kept_spins), f if keep_fock else 1)
