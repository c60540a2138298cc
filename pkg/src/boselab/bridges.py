"""Periodic Brownian bridges and the unnormalized bridge measures.

A bridge from (tau_from, x_from) to (tau_to, x_to) on the torus is sampled by
the winding-number decomposition: first draw the periodic image shift n in Z^d
with probability proportional to e^{-|x - x~ - Ln|^2 / 2(tau - tau~)}, then
fill in a Euclidean bridge to the shifted endpoint by recursive midpoint
displacement, and finally reduce mod L.  This realizes the exact periodic
bridge law without rejection.  The unnormalized measure carries total mass
psi^{tau - tau~}(x - x~).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from boselab.torus import TorusSpec, heat_kernel
from boselab.mc import MCEstimate, rng_for, chunk_indices, mean_estimate

# windings with mass below this relative weight are dropped
_WINDING_TOL = 1e-14


@dataclass(frozen=True)
class BridgeMeasureSpec:
    """Endpoint data for the measures P^{tau,tau~}_{x,x~} and W^{tau,tau~}_{x,x~}."""

    spec: TorusSpec
    tau_from: float
    tau_to: float
    x_from: np.ndarray
    x_to: np.ndarray
    m: int = 16

    def __post_init__(self):
        if self.tau_to <= self.tau_from:
            raise ValueError("bridge requires tau_to > tau_from")
        if self.m < 1:
            raise ValueError("need at least one subdivision")
        object.__setattr__(self, "x_from", np.atleast_1d(np.asarray(self.x_from, float)))
        object.__setattr__(self, "x_to", np.atleast_1d(np.asarray(self.x_to, float)))

    @property
    def duration(self) -> float:
        return self.tau_to - self.tau_from

    @cached_property
    def t_grid(self) -> np.ndarray:
        return np.linspace(self.tau_from, self.tau_to, self.m + 1)

    @cached_property
    def weight(self) -> float:
        """Total mass of W: the periodic heat kernel between the endpoints."""
        return float(heat_kernel(self.spec, self.duration,
                                 self.spec.reduce(self.x_to - self.x_from)))


@dataclass
class BridgePath:
    """A time-discretized bridge sample; points live in the fundamental domain."""

    t_grid: np.ndarray
    points: np.ndarray
    x_from: np.ndarray = field(default=None)
    x_to: np.ndarray = field(default=None)


def _sample_windings(spec: TorusSpec, dx: np.ndarray, T: float,
                     rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw image shifts per axis with probability ~ e^{-(dx - L w)^2 / 2T}."""
    if not math.isfinite(spec.L):
        return np.zeros((n, spec.d), dtype=int)
    wmax = int(math.ceil(math.sqrt(2.0 * T * math.log(1.0 / _WINDING_TOL)) / spec.L)) + 1
    w = np.arange(-wmax, wmax + 1)
    out = np.empty((n, spec.d), dtype=int)
    for axis in range(spec.d):
        logp = -((dx[axis] - spec.L * w) ** 2) / (2.0 * T)
        p = np.exp(logp - logp.max())
        p /= p.sum()
        out[:, axis] = rng.choice(w, size=n, p=p)
    return out


def _midpoint_fill(start: np.ndarray, end: np.ndarray, t: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Euclidean Brownian bridge on the grid t by recursive midpoint displacement.

    start, end have shape (n, d); returns (n, len(t), d).  Works for any grid
    size by splitting index ranges at their middle point and sampling the
    conditional Gaussian of the bridge at that time.
    """
    n, d = start.shape
    m = len(t) - 1
    path = np.empty((n, m + 1, d))
    path[:, 0] = start
    path[:, m] = end
    stack = [(0, m)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        mid = (i + j) // 2
        ti, tm, tj = t[i], t[mid], t[j]
        frac = (tm - ti) / (tj - ti)
        var = (tm - ti) * (tj - tm) / (tj - ti)
        mean = path[:, i] + frac * (path[:, j] - path[:, i])
        path[:, mid] = mean + math.sqrt(var) * rng.standard_normal((n, d))
        stack.append((i, mid))
        stack.append((mid, j))
    return path


def sample_bridges(bspec: BridgeMeasureSpec, seed: int, n_samples: int,
                   reduce: bool = True) -> np.ndarray:
    """Draw n_samples periodic bridges; returns points (n_samples, m+1, d).

    Chunked counter-based seeding keeps the output independent of how the
    work is scheduled.
    """
    spec = bspec.spec
    T = bspec.duration
    dx = bspec.x_to - bspec.x_from
    out = np.empty((n_samples, bspec.m + 1, spec.d))
    for index, start, count in chunk_indices(n_samples):
        rng = rng_for(seed, index)
        windings = _sample_windings(spec, dx, T, rng, count)
        end = bspec.x_to[None, :] + spec.L * windings if math.isfinite(spec.L) \
            else np.broadcast_to(bspec.x_to, (count, spec.d)).copy()
        begin = np.broadcast_to(bspec.x_from, (count, spec.d)).copy()
        out[start:start + count] = _midpoint_fill(begin, end, bspec.t_grid, rng)
    if reduce and math.isfinite(spec.L):
        red = spec.reduce(out)
        # keep the stored endpoints exactly equal to the spec endpoints
        red[:, 0] = spec.reduce(bspec.x_from)
        red[:, -1] = spec.reduce(bspec.x_to)
        return red
    return out


def sample_bridge(bspec: BridgeMeasureSpec, seed: int) -> BridgePath:
    points = sample_bridges(bspec, seed, 1)[0]
    return BridgePath(t_grid=bspec.t_grid, points=points,
                      x_from=bspec.x_from, x_to=bspec.x_to)


def path_line_integral(path: BridgePath, f) -> complex:
    """Trapezoidal quadrature of integral f(s, omega(s)) ds along the path."""
    values = np.asarray([f(t, x) for t, x in zip(path.t_grid, path.points)])
    return np.trapezoid(values, path.t_grid)


def path_line_integrals(t_grid: np.ndarray, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Vectorized trapezoidal quadrature given f already evaluated on paths."""
    return np.trapezoid(values, t_grid, axis=-1)


def periodic_dist2(spec: TorusSpec, dx: np.ndarray) -> np.ndarray:
    """Squared periodic distance |dx|_L^2, per point."""
    if math.isfinite(spec.L):
        dx = spec.reduce(dx)
    return np.sum(dx**2, axis=-1)


def bridge_increment_moment(bspec: BridgeMeasureSpec, s: float, t: float,
                            n_samples: int, seed: int) -> MCEstimate:
    """MC estimate of E |omega(t) - omega(s)|_L^2 under the bridge law.

    s and t are snapped to the nearest grid times.
    """
    if not (bspec.tau_from <= s <= t <= bspec.tau_to):
        raise ValueError("need tau_from <= s <= t <= tau_to")
    i = int(np.argmin(np.abs(bspec.t_grid - s)))
    j = int(np.argmin(np.abs(bspec.t_grid - t)))
    if i == j:
        return MCEstimate(value=0.0, std_error=0.0, n_samples=n_samples, seed=seed)
    pts = sample_bridges(bspec, seed, n_samples, reduce=False)
    d2 = periodic_dist2(bspec.spec, pts[:, j] - pts[:, i])
    return mean_estimate(d2, seed)


def marginal_density(bspec: BridgeMeasureSpec, s: float, y: np.ndarray) -> float:
    """Exact single-time marginal psi^{s-tau~}(y-x~) psi^{tau-s}(x-y) / psi^{tau-tau~}(x-x~)."""
    spec = bspec.spec
    a = heat_kernel(spec, s - bspec.tau_from, spec.reduce(np.asarray(y) - bspec.x_from))
    b = heat_kernel(spec, bspec.tau_to - s, spec.reduce(bspec.x_to - np.asarray(y)))
    return float(a * b / bspec.weight)
