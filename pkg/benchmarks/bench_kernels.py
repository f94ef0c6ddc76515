"""
Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel is called once to compile (numba) before timing; the table
reports the best of ``--repeat`` runs and the numba speed-up.  Results are
also checked for agreement so a fast but wrong kernel cannot slip through.
"""

import argparse
import time

import numpy as np
from scipy import stats

from ionmagnet import _kernels
from ionmagnet.ising import IsingConfig, RampSchedule, ising_hamiltonian
from ionmagnet.phonon import WalkingWaveParams, walking_wave_hamiltonian


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases():
    dt = 1e-8
    ising = ising_hamiltonian(IsingConfig(), RampSchedule())
    hams_2 = ising.sample((np.arange(2048) + 0.5) * dt)
    psi_2 = np.full(4, 0.5, dtype=np.complex128)

    wave = walking_wave_hamiltonian(WalkingWaveParams.calibrated())
    hams_48 = wave.sample((np.arange(400) + 0.5) * dt)
    psi_48 = np.zeros(48, dtype=np.complex128)
    psi_48[::12] = 0.5

    rho = np.outer(psi_2, psi_2.conj())
    decay = np.exp(-1e-5 * (1 - np.eye(4)))

    n = np.arange(171)
    pmf = np.array([stats.poisson.pmf(n, m) for m in (80.0, 12.0, 46.0)])
    counts = np.rint(1e4 * (np.array([0.49, 0.49, 0.02]) @ pmf))
    start = np.full(3, 1 / 3)

    yield (
        "state, D=4, 2048 steps",
        lambda: _kernels.propagate_state_numpy(psi_2, hams_2, dt),
        lambda: _kernels.propagate_state_numba(psi_2, hams_2, dt),
    )
    yield (
        "state, D=48, 400 steps",
        lambda: _kernels.propagate_state_numpy(psi_48, hams_48, dt),
        lambda: _kernels.propagate_state_numba(psi_48, hams_48, dt),
    )
    yield (
        "density, D=4, 2048 steps",
        lambda: _kernels.propagate_density_numpy(rho, hams_2, dt, decay),
        lambda: _kernels.propagate_density_numba(rho, hams_2, dt, decay),
    )
    yield (
        "mixture EM, 171 bins",
        lambda: _kernels.mixture_em_numpy(counts, pmf, start, 1e-10, 100_000)[0],
        lambda: _kernels.mixture_em_numba(counts, pmf, start, 1e-10, 100_000)[0],
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _kernels.USING_NUMBA:
        print("numba path disabled (IONMAGNET_DISABLE_NUMBA); nothing to compare")
        return 0
    print(f"{'kernel':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, slow, fast in cases():
        ref, got = slow(), fast()
        if not np.allclose(ref, got, atol=1e-9):
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_np = best_of(slow, args.repeat)
        t_nb = best_of(fast, args.repeat)
        print(f"{name:<28}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
