import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from conftest import random_hermitian, random_state
from ionmagnet import _kernels

pytestmark = pytest.mark.skipif(not _kernels.USING_NUMBA, reason="numba path disabled")


def test_state_kernels_agree(rng):
    hams = np.array([random_hermitian(rng, 8, 1e6) for _ in range(20)])
    psi = random_state(rng, 8)
    a = _kernels.propagate_state_numpy(psi, hams, 1e-7)
    b = _kernels.propagate_state_numba(psi, hams, 1e-7)
    ref = psi
    for h in hams:
        ref = expm(-1j * h * 1e-7) @ ref
    assert np.allclose(a, ref, atol=1e-12)
    assert np.allclose(b, ref, atol=1e-12)


def test_density_kernels_agree(rng):
    hams = np.array([random_hermitian(rng, 4, 1e6) for _ in range(20)])
    v = random_state(rng, 4)
    rho = np.outer(v, v.conj())
    decay = np.exp(-0.01 * (1 - np.eye(4)))
    a = _kernels.propagate_density_numpy(rho, hams, 1e-7, decay)
    b = _kernels.propagate_density_numba(rho, hams, 1e-7, decay)
    assert np.allclose(a, b, atol=1e-12)


def test_em_kernels_agree():
    n = np.arange(171)
    pmf = np.array([stats.poisson.pmf(n, m) for m in (80.0, 12.0, 46.0)])
    counts = np.rint(1e4 * (np.array([0.45, 0.5, 0.05]) @ pmf))
    start = np.full(3, 1 / 3)
    wa, la, ia, oka = _kernels.mixture_em_numpy(counts, pmf, start, 1e-10, 100_000)
    wb, lb, ib, okb = _kernels.mixture_em_numba(counts, pmf, start, 1e-10, 100_000)
    assert oka and okb
    assert np.allclose(wa, wb, atol=1e-9)
    assert la == pytest.approx(lb, rel=1e-12)
    assert np.allclose(wa, [0.45, 0.5, 0.05], atol=1e-3)


def test_env_flag_selects_numpy_path():
    env = dict(os.environ, IONMAGNET_DISABLE_NUMBA="1")
    code = "import ionmagnet, sys; sys.exit(0 if not ionmagnet.USING_NUMBA else 1)"
    assert subprocess.run([sys.executable, "-c", code], env=env).returncode == 0
