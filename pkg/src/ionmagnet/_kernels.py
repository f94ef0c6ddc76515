"""
Hot inner loops
===============

Piecewise-constant propagation of state vectors and density matrices, and
the fixed-component Poisson-mixture EM iteration.  Every kernel exists twice:
a ``numba.njit`` version and a pure-numpy version with identical semantics.

The numba path is used by default.  Set ``IONMAGNET_DISABLE_NUMBA=1`` in the
environment before import to force the numpy path (or if numba is missing).
"""

import os

import numpy as np

_DISABLE = os.environ.get("IONMAGNET_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USING_NUMBA = numba is not None and not _DISABLE


# --------------------------------------------------------------------------
# numpy reference implementations
# --------------------------------------------------------------------------


def propagate_state_numpy(psi, hams, dt):
    """Apply ``exp(-i H_k dt)`` for each ``H_k`` in ``hams``, in order."""
    energies, vecs = np.linalg.eigh(hams)
    phases = np.exp(-1j * energies * dt)
    out = np.array(psi, dtype=np.complex128, copy=True)
    for k in range(hams.shape[0]):
        v = vecs[k]
        out = v @ (phases[k] * (v.conj().T @ out))
    return out


def propagate_density_numpy(rho, hams, dt, decay):
    """Unitary step followed by an elementwise dephasing mask, per sample."""
    energies, vecs = np.linalg.eigh(hams)
    phases = np.exp(-1j * energies * dt)
    unitaries = (vecs * phases[:, None, :]) @ vecs.conj().transpose(0, 2, 1)
    out = np.array(rho, dtype=np.complex128, copy=True)
    for k in range(hams.shape[0]):
        u = unitaries[k]
        out = (u @ out @ u.conj().T) * decay
    return out


def mixture_em_numpy(counts, pmf, weights, tol, max_iter):
    """EM for the weights of a mixture with fixed component pmfs.

    Parameters
    ----------
    counts : ndarray, shape (M,)
        Histogram occupation per bin.
    pmf : ndarray, shape (K, M)
        Component probabilities per bin.
    weights : ndarray, shape (K,)
        Starting weights on the simplex.
    tol : float
        Stop once the log-likelihood changes by less than ``tol``.
    max_iter : int
        Iteration cap.

    Returns
    -------
    weights, loglik, n_iter, converged
    """
    w = np.array(weights, dtype=np.float64, copy=True)
    total = counts.sum()
    mask = counts > 0
    c = counts[mask]
    p = pmf[:, mask]
    mix = w @ p
    loglik = float(np.sum(c * np.log(mix)))
    for it in range(1, max_iter + 1):
        w = w * (p @ (c / mix)) / total
        mix = w @ p
        new = float(np.sum(c * np.log(mix)))
        if abs(new - loglik) < tol:
            return w, new, it, True
        loglik = new
    return w, loglik, max_iter, False


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def propagate_state_numba(psi, hams, dt):
        out = psi.copy()
        dim = psi.shape[0]
        coef = np.empty(dim, dtype=np.complex128)
        for k in range(hams.shape[0]):
            w, v = np.linalg.eigh(hams[k])
            vh = np.conj(v).T
            for a in range(dim):
                acc = 0.0j
                for b in range(dim):
                    acc += vh[a, b] * out[b]
                coef[a] = acc * np.exp(-1j * w[a] * dt)
            for a in range(dim):
                acc = 0.0j
                for b in range(dim):
                    acc += v[a, b] * coef[b]
                out[a] = acc
        return out

    @numba.njit(cache=True, nogil=True)
    def propagate_density_numba(rho, hams, dt, decay):
        out = rho.copy()
        dim = rho.shape[0]
        for k in range(hams.shape[0]):
            w, v = np.linalg.eigh(hams[k])
            u = np.empty((dim, dim), dtype=np.complex128)
            for a in range(dim):
                for b in range(dim):
                    acc = 0.0j
                    for m in range(dim):
                        acc += v[a, m] * np.exp(-1j * w[m] * dt) * np.conj(v[b, m])
                    u[a, b] = acc
            out = (u @ out @ np.conj(u).T) * decay
        return out

    @numba.njit(cache=True, nogil=True)
    def _mixture_em_numba(counts, pmf, weights, tol, max_iter):
        n_comp, n_bins = pmf.shape
        w = weights.copy()
        total = counts.sum()
        mix = np.zeros(n_bins)
        for m in range(n_bins):
            for k in range(n_comp):
                mix[m] += w[k] * pmf[k, m]
        loglik = 0.0
        for m in range(n_bins):
            if counts[m] > 0:
                loglik += counts[m] * np.log(mix[m])
        for it in range(1, max_iter + 1):
            for k in range(n_comp):
                acc = 0.0
                for m in range(n_bins):
                    if counts[m] > 0:
                        acc += pmf[k, m] * counts[m] / mix[m]
                w[k] = w[k] * acc / total
            new = 0.0
            for m in range(n_bins):
                s = 0.0
                for k in range(n_comp):
                    s += w[k] * pmf[k, m]
                mix[m] = s
                if counts[m] > 0:
                    new += counts[m] * np.log(s)
            if abs(new - loglik) < tol:
                return w, new, it, True
            loglik = new
        return w, loglik, max_iter, False

    def mixture_em_numba(counts, pmf, weights, tol, max_iter):
        w, loglik, n_iter, ok = _mixture_em_numba(
            np.ascontiguousarray(counts, dtype=np.float64),
            np.ascontiguousarray(pmf, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
            float(tol),
            int(max_iter),
        )
        return w, float(loglik), int(n_iter), bool(ok)

else:  # pragma: no cover
    propagate_state_numba = None
    propagate_density_numba = None
    mixture_em_numba = None


def propagate_state(psi, hams, dt):
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    hams = np.ascontiguousarray(hams, dtype=np.complex128)
    if USING_NUMBA:
        return propagate_state_numba(psi, hams, float(dt))
    return propagate_state_numpy(psi, hams, dt)


def propagate_density(rho, hams, dt, decay):
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    hams = np.ascontiguousarray(hams, dtype=np.complex128)
    decay = np.ascontiguousarray(decay, dtype=np.float64)
    if USING_NUMBA:
        return propagate_density_numba(rho, hams, float(dt), decay)
    return propagate_density_numpy(rho, hams, dt, decay)


def mixture_em(counts, pmf, weights, tol, max_iter):
    if USING_NUMBA:
        return mixture_em_numba(counts, pmf, weights, tol, max_iter)
    return mixture_em_numpy(
        np.asarray(counts, dtype=np.float64),
        np.asarray(pmf, dtype=np.float64),
        weights,
        tol,
        max_iter,
    )
