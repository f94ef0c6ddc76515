"""
Fluorescence detection emulation and population fitting.

Each shot ends in one of three classes distinguished by the number of bright
(``|↓⟩``) ions: 2 for ``↓↓``, 0 for ``↑↑`` and 1 for either mixed
configuration.  Photon counts are Poissonian with mean
``k * mean_bright + (n_ions - k) * mean_dark``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats

from . import _kernels
from .core import ConvergenceError
from .seeding import make_generator

# Class order everywhere in this module: (P_dd, P_uu, P_mixed).
BRIGHT_IONS = (2, 0, 1)
SHOT_BATCH = 4096
EM_TOL = 1e-10
EM_MAX_ITER = 100_000
PMF_CUTOFF = 1e-12


@dataclass(frozen=True)
class DetectionModel:
    mean_bright: float = 40.0
    mean_dark: float = 6.0
    window: float = 160e-6
    n_ions: int = 2

    def __post_init__(self):
        if not self.mean_bright > self.mean_dark > 0:
            raise ValueError("need mean_bright > mean_dark > 0")
        if self.n_ions != 2:
            raise ValueError("the three-class detection model is defined for two ions")

    def class_mean(self, k_bright: int) -> float:
        return k_bright * self.mean_bright + (self.n_ions - k_bright) * self.mean_dark

    @property
    def support_max(self) -> int:
        """Largest photon number kept as its own bin; larger counts are pooled into it."""
        top = self.class_mean(self.n_ions)
        return int(math.ceil(top + 10.0 * math.sqrt(top)))


@dataclass(frozen=True)
class PhotonHistogram:
    """Occurrence counts indexed by photon number."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if np.any(counts < 0):
            raise ValueError("negative occurrence count")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_shots(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {int(n): int(c) for n, c in enumerate(self.counts) if c}

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "PhotonHistogram":
        if not mapping:
            return cls(np.zeros(0, dtype=np.int64))
        size = max(int(k) for k in mapping) + 1
        counts = np.zeros(size, dtype=np.int64)
        for k, v in mapping.items():
            if int(k) < 0:
                raise ValueError(f"negative photon number {k}")
            counts[int(k)] += int(v)
        return cls(counts)

    def __add__(self, other: "PhotonHistogram") -> "PhotonHistogram":
        size = max(self.counts.size, other.counts.size)
        out = np.zeros(size, dtype=np.int64)
        out[: self.counts.size] += self.counts
        out[: other.counts.size] += other.counts
        return PhotonHistogram(out)

    def mean(self) -> float:
        return float(np.arange(self.counts.size) @ self.counts / self.n_shots)

    def to_csv(self, path=None) -> str:
        """``photons,count`` rows for every photon number up to the largest observed."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["photons", "count"])
        for n, c in enumerate(self.counts):
            writer.writerow([n, int(c)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def read_csv(cls, path) -> "PhotonHistogram":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["photons", "count"]:
                raise ValueError(f"{path}: expected header 'photons,count', got {header}")
            mapping: dict[int, int] = {}
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    n, c = int(row[0]), int(row[1])
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad row {row}") from exc
                if c < 0:
                    raise ValueError(f"{path}:{lineno}: negative count")
                mapping[n] = mapping.get(n, 0) + c
        return cls.from_mapping(mapping)


@dataclass(frozen=True)
class PopulationEstimate:
    P_dd: float
    P_uu: float
    P_mixed: float
    stderr_dd: float
    stderr_uu: float
    stderr_mixed: float
    loglik: float = float("nan")
    n_shots: int = 0
    n_iter: int = 0

    def __post_init__(self):
        vals = (self.P_dd, self.P_uu, self.P_mixed)
        if min(vals) < 0 or abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"invalid population triple {vals}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.P_dd, self.P_uu, self.P_mixed)

    def report(self) -> str:
        keys = [
            ("P_dd", self.P_dd),
            ("P_uu", self.P_uu),
            ("P_mixed", self.P_mixed),
            ("stderr_dd", self.stderr_dd),
            ("stderr_uu", self.stderr_uu),
            ("stderr_mixed", self.stderr_mixed),
            ("loglik", self.loglik),
            ("n_shots", self.n_shots),
        ]
        return "".join(f"{k}={format_number(v)}\n" for k, v in keys)


def format_number(value) -> str:
    """Locale-independent text with at least 12 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def validate_probabilities(probs) -> tuple[float, float, float]:
    p = tuple(float(x) for x in probs)
    if len(p) != 3:
        raise ValueError("expected a (P_dd, P_uu, P_mixed) triple")
    if min(p) < 0 or abs(sum(p) - 1.0) > 1e-9 or not all(map(math.isfinite, p)):
        raise ValueError(f"invalid probability triple {p}")
    return p


def reference_distribution(k_bright: int, model: DetectionModel = DetectionModel()) -> np.ndarray:
    """Poisson pmf over ``0..n_max`` for ``k_bright`` fluorescing ions.

    The upper tail is cut where the pmf drops below 1e-12.
    """
    if k_bright not in (0, 1, 2):
        raise ValueError(f"k_bright must be 0, 1 or 2, got {k_bright!r}")
    mean = model.class_mean(k_bright)
    n_max = int(stats.poisson.isf(PMF_CUTOFF, mean)) + 1
    pmf = stats.poisson.pmf(np.arange(n_max + 1), mean)
    above = np.nonzero((np.arange(n_max + 1) > mean) & (pmf < PMF_CUTOFF))[0]
    if above.size:
        pmf = pmf[: above[0]]
    return pmf


def simulate_shots(
    probs,
    model: DetectionModel = DetectionModel(),
    n_shots: int = 10_000,
    seed: int = 0,
    executor=None,
) -> PhotonHistogram:
    """Draw ``n_shots`` photon counts for the outcome probabilities ``probs``.

    Shots are generated in fixed batches of 4096; batch ``b`` uses the
    stream ``seed_policy(seed, b)``, so the histogram does not depend on how
    (or whether) batches are spread over an executor.
    """
    p = validate_probabilities(probs)
    if int(n_shots) != n_shots or n_shots < 0:
        raise ValueError("n_shots must be a non-negative integer")
    means = np.array([model.class_mean(k) for k in BRIGHT_IONS])
    sizes = [min(SHOT_BATCH, n_shots - start) for start in range(0, n_shots, SHOT_BATCH)]

    def batch(index):
        rng = make_generator(seed, index)
        classes = rng.choice(3, size=sizes[index], p=p)
        photons = rng.poisson(means[classes])
        return PhotonHistogram(np.bincount(photons))

    indices = range(len(sizes))
    parts = list(executor.map(batch, indices)) if executor else [batch(i) for i in indices]
    total = PhotonHistogram(np.zeros(0, dtype=np.int64))
    for part in parts:
        total = total + part
    return total


def _binned_pmfs(model: DetectionModel) -> np.ndarray:
    cap = model.support_max
    n = np.arange(cap + 1)
    rows = []
    for k in BRIGHT_IONS:
        mean = model.class_mean(k)
        pmf = stats.poisson.pmf(n, mean)
        pmf[-1] = stats.poisson.sf(cap - 1, mean)
        rows.append(pmf)
    return np.array(rows)


def _pooled_counts(hist: PhotonHistogram, cap: int) -> np.ndarray:
    counts = np.zeros(cap + 1, dtype=np.float64)
    head = hist.counts[: cap + 1]
    counts[: head.size] = head
    counts[cap] += hist.counts[cap + 1 :].sum()
    return counts


def fit_populations(hist: PhotonHistogram, model: DetectionModel = DetectionModel()) -> PopulationEstimate:
    """Maximum-likelihood class weights for ``hist``.

    Weights are found by EM with the three Poisson references held fixed,
    which keeps them on the simplex.  Standard errors come from the inverse
    observed information in ``(P_dd, P_uu)``; when that matrix is singular
    (e.g. all shots in one bin) every standard error is set to 0.5, the
    largest spread a probability can have.

    Raises
    ------
    ConvergenceError
        When EM has not converged after 1e5 iterations.
    """
    n_shots = hist.n_shots
    if n_shots < 100:
        raise ValueError(f"need at least 100 shots to fit, got {n_shots}")
    pmf = _binned_pmfs(model)
    counts = _pooled_counts(hist, model.support_max)
    w, loglik, n_iter, ok = _kernels.mixture_em(counts, pmf, np.full(3, 1 / 3), EM_TOL, EM_MAX_ITER)
    if not ok:
        raise ConvergenceError(
            f"population fit did not converge in {n_iter} iterations "
            f"(weights {w.tolist()}, loglik {loglik:.6f})"
        )
    w = np.clip(w, 0.0, None)
    w = w / w.sum()

    mix = w @ pmf
    used = counts > 0
    grad = (pmf[:2, used] - pmf[2, used]) / mix[used]
    info = (grad * counts[used]) @ grad.T
    if np.linalg.cond(info) < 1e12:
        cov = np.linalg.inv(info)
        var_m = cov[0, 0] + cov[1, 1] + 2 * cov[0, 1]
        errs = [math.sqrt(max(cov[0, 0], 0.0)), math.sqrt(max(cov[1, 1], 0.0)), math.sqrt(max(var_m, 0.0))]
    else:
        errs = [0.5, 0.5, 0.5]
    mixed = max(0.0, 1.0 - w[0] - w[1])
    return PopulationEstimate(
        float(w[0]),
        float(w[1]),
        float(mixed),
        *errs,
        loglik=float(loglik),
        n_shots=n_shots,
        n_iter=n_iter,
    )
