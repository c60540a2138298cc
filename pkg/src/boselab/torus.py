"""Torus geometry, spectral basis of h = kappa - Laplacian/2, heat kernel.

The spatial domain is the d-dimensional torus of side L with the fundamental
domain [-L/2, L/2)^d.  The one-particle Hamiltonian h = kappa - Delta/2 is
diagonal in the plane-wave basis u_k(x) = e^{2 pi i k.x / L} / L^{d/2} with
eigenvalues lambda_k = kappa + 2 pi^2 |k|^2 / L^2.  The per-axis cutoff kmax
is the single resolution knob; consumers report the tr h^{-2} tail bound of
the truncation alongside their results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# relative accuracy target for the dual-sum heat kernel
_HEAT_TOL = 1e-15


@dataclass(frozen=True)
class TorusSpec:
    """Torus Lambda_{L,d} together with the spectral truncation."""

    d: int
    L: float
    kappa: float
    kmax: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.L <= 0:
            raise ValueError("side length must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.kmax < 1:
            raise ValueError("kmax must be at least 1")

    @cached_property
    def mode_vectors(self) -> np.ndarray:
        """Integer lattice vectors k with |k_i| <= kmax, shape (n_modes, d)."""
        axis = np.arange(-self.kmax, self.kmax + 1)
        grids = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        """lambda_k = kappa + 2 pi^2 |k|^2 / L^2 for each retained mode."""
        k2 = np.sum(self.mode_vectors.astype(float) ** 2, axis=1)
        return self.kappa + 2.0 * math.pi**2 * k2 / self.L**2

    @property
    def n_modes(self) -> int:
        return (2 * self.kmax + 1) ** self.d

    def modes(self) -> list["Mode"]:
        return [Mode(k=tuple(int(c) for c in k), lam=float(lam))
                for k, lam in zip(self.mode_vectors, self.eigenvalues)]

    def reduce(self, x: np.ndarray) -> np.ndarray:
        """Reduce positions to the fundamental domain [-L/2, L/2) per axis."""
        x = np.asarray(x, dtype=float)
        return (x + self.L / 2.0) % self.L - self.L / 2.0

    def plane_waves(self, x: np.ndarray) -> np.ndarray:
        """Matrix u_k(x) of shape (..., n_modes) at the given points.

        x has shape (..., d); normalization is 1/L^{d/2} so the u_k are
        orthonormal in L^2(Lambda).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phase = 2.0 * math.pi / self.L * (x @ self.mode_vectors.T)
        return np.exp(1j * phase) / self.L ** (self.d / 2.0)


@dataclass(frozen=True)
class Mode:
    """A retained plane-wave mode and its h-eigenvalue."""

    k: tuple[int, ...]
    lam: float


def _heat_kernel_1d(L: float, t: float, x: np.ndarray) -> np.ndarray:
    """Periodic heat kernel on the circle of circumference L.

    Uses the image sum for small t and the dual spectral sum for large t;
    the switchover at t = L^2/(2 pi) balances the number of terms, and both
    sums are truncated so that the dropped tail is below 1e-14 relative.
    """
    x = np.asarray(x, dtype=float)
    if not math.isfinite(L):
        return np.exp(-(x**2) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    if t <= L * L / (2.0 * math.pi):
        # image sum: terms decay like e^{-(Ln)^2/2t}
        nmax = int(math.ceil(math.sqrt(2.0 * t * math.log(1.0 / _HEAT_TOL)) / L)) + 2
        n = np.arange(-nmax, nmax + 1)
        z = x[..., None] - L * n
        return np.exp(-(z**2) / (2.0 * t)).sum(axis=-1) / math.sqrt(2.0 * math.pi * t)
    # spectral sum: terms decay like e^{-2 pi^2 k^2 t / L^2}
    kmax = int(math.ceil(math.sqrt(L * L * math.log(1.0 / _HEAT_TOL) /
                                   (2.0 * math.pi**2 * t)))) + 2
    k = np.arange(1, kmax + 1)
    damp = np.exp(-2.0 * math.pi**2 * k**2 * t / L**2)
    series = 1.0 + 2.0 * (damp * np.cos(2.0 * math.pi * np.multiply.outer(x, k) / L)).sum(axis=-1)
    return series / L


def heat_kernel(spec: TorusSpec | None, t: float, x, *, d: int | None = None,
                L: float | None = None) -> float | np.ndarray:
    """Periodic heat kernel psi^t(x) on the torus.

    Accepts either a TorusSpec or explicit (d, L); L = inf gives the single
    Gaussian image on Euclidean space.  The kernel factorizes over axes.
    """
    if spec is not None:
        d, L = spec.d, spec.L
    if t <= 0:
        raise ValueError("time must be positive")
    x = np.asarray(x, dtype=float)
    if d == 1 and x.ndim == 0:
        return float(_heat_kernel_1d(L, t, x[None])[0])
    x = np.atleast_1d(x)
    if x.shape[-1] != d:
        raise ValueError("position has wrong dimension")
    out = np.ones(x.shape[:-1])
    for axis in range(d):
        out = out * _heat_kernel_1d(L, t, x[..., axis])
    return float(out) if out.ndim == 0 else out


def trace_h_power(spec: TorusSpec, s: float) -> tuple[float, float]:
    """(sum over retained modes of lambda_k^{-s}, analytic tail bound).

    The tail bound dominates the dropped part of the lattice sum by an
    integral comparison; it is infinite when 2s <= d.
    """
    value = float(np.sum(spec.eigenvalues ** (-s))) if s != 0 else float(spec.n_modes)
    if s == 0 or 2.0 * s <= spec.d:
        return value, math.inf
    # modes outside the cube have |k| > kmax; bound lambda_k >= 2 pi^2 |k|^2 / L^2
    # and compare with the integral over |k| > kmax.
    c = 2.0 * math.pi**2 / spec.L**2
    d = spec.d
    surface = {1: 2.0, 2: 2.0 * math.pi, 3: 4.0 * math.pi}[d]
    # integral_{kmax}^inf r^{d-1} (c r^2)^{-s} dr, inflated to cover lattice vs
    # integral discrepancy for shells near the cutoff
    tail = 2.0 * surface * c ** (-s) * spec.kmax ** (d - 2 * s) / (2 * s - d)
    return value, tail


def free_quantum_density(spec: TorusSpec, nu: float, tol: float = 1e-12) -> float:
    """Free-gas particle density nu * sum_{n>=1} e^{-kappa nu n} psi^{nu n}(0)."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    zero = np.zeros(spec.d)
    total = 0.0
    n = 1
    while True:
        term = nu * math.exp(-spec.kappa * nu * n) * float(heat_kernel(spec, nu * n, zero))
        total += term
        # psi^{t}(0) <= 1/L^d + (2 pi t)^{-d/2}; bound the remaining geometric tail
        bound = (1.0 / spec.L**spec.d + (2.0 * math.pi * nu * n) ** (-spec.d / 2.0))
        tail = nu * bound * math.exp(-spec.kappa * nu * (n + 1)) / (1.0 - math.exp(-spec.kappa * nu))
        if tail < tol:
            break
        n += 1
    return total


def expected_particle_number(spec: TorusSpec, nu: float) -> float:
    """Grand-canonical free expectation of N: sum_k 1/(e^{nu lambda_k} - 1)."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    return float(np.sum(1.0 / np.expm1(nu * spec.eigenvalues)))
