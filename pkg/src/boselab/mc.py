"""Monte Carlo plumbing: estimates, counter-based seeding, stable reductions.

All samplers in this package draw their randomness through ``rng_for(seed,
index)``, a counter-based construction on top of the Philox generator.  A
sample (or chunk of samples) is a pure function of ``(seed, index)``, so the
result of an estimator depends only on the configuration and the seed, never
on how work was split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: number of samples drawn per independently seeded chunk
CHUNK = 1024


def rng_for(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for chunk `index` of the stream keyed by `seed`."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, index]))


def pairwise_sum(values: np.ndarray) -> complex | float:
    """Deterministic pairwise reduction (numpy's sum is pairwise for 1-d)."""
    return np.asarray(values).sum()


@dataclass
class MCEstimate:
    """A Monte Carlo estimate tagged with its statistical provenance."""

    value: complex
    std_error: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")

    @property
    def real(self) -> float:
        return float(np.real(self.value))

    def consistent_with(self, other, n_sigma: float = 3.0, extra_tol: float = 0.0) -> bool:
        """Whether the two values agree within a combined n-sigma band."""
        if isinstance(other, MCEstimate):
            gap = abs(self.value - other.value)
            err = math.hypot(self.std_error, other.std_error)
        else:
            gap = abs(self.value - other)
            err = self.std_error
        return gap <= n_sigma * err + extra_tol


def mean_estimate(samples: np.ndarray, seed: int) -> MCEstimate:
    """Sample mean with its standard error."""
    samples = np.asarray(samples)
    n = samples.shape[0]
    mean = pairwise_sum(samples) / n
    if n > 1:
        var = pairwise_sum(np.abs(samples - mean) ** 2) / (n - 1)
        se = math.sqrt(var.real / n)
    else:
        se = 0.0
    return MCEstimate(value=complex(mean), std_error=se, n_samples=n, seed=seed)


def ratio_estimate(num: np.ndarray, den: np.ndarray, seed: int, n_batches: int = 50) -> MCEstimate:
    """Jackknife ratio estimator mean(num)/mean(den) over a shared stream.

    Numerator and denominator are evaluated on the same samples so that
    fluctuations cancel; errors come from delete-one-batch jackknife.
    """
    num = np.asarray(num)
    den = np.asarray(den)
    n = num.shape[0]
    if den.shape[0] != n:
        raise ValueError("numerator and denominator streams must share samples")
    num_tot = pairwise_sum(num)
    den_tot = pairwise_sum(den)
    den_mean = den_tot / n
    # degenerate denominator: consistent with zero at 3 sigma
    den_se = np.abs(den - den_mean).std() / math.sqrt(n) if n > 1 else 0.0
    if abs(den_mean) <= 3.0 * den_se:
        raise ZeroDivisionError("ratio estimator denominator is consistent with zero")
    full = num_tot / den_tot
    n_batches = min(n_batches, n)
    edges = np.linspace(0, n, n_batches + 1, dtype=int)
    loo = []
    for i in range(n_batches):
        lo, hi = edges[i], edges[i + 1]
        if hi == lo:
            continue
        bn = num_tot - pairwise_sum(num[lo:hi])
        bd = den_tot - pairwise_sum(den[lo:hi])
        loo.append(bn / bd)
    loo = np.asarray(loo)
    m = len(loo)
    if m > 1:
        se = math.sqrt((m - 1) / m * float(np.sum(np.abs(loo - loo.mean()) ** 2)))
    else:
        se = 0.0
    return MCEstimate(value=complex(full), std_error=se, n_samples=n, seed=seed)


def chunk_indices(n_samples: int) -> list[tuple[int, int, int]]:
    """Split `n_samples` into fixed-size chunks: (chunk_index, start, count)."""
    out = []
    start = 0
    index = 0
    while start < n_samples:
        count = min(CHUNK, n_samples - start)
        out.append((index, start, count))
        start += count
        index += 1
    return out
