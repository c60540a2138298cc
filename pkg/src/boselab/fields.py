"""Gaussian fields, regularization, and Wick/pairing combinatorics.

Three Gaussian fields appear throughout: the classical free field phi with
covariance h^{-1}, the space-time auxiliary field sigma on [0, nu] x Lambda
with covariance (lambda/nu) delta_{eta,nu}(tau - tau~) v_eta(x - x~), and the
spatial auxiliary field xi with covariance v_eta.  All are sampled spectrally.

Regularization: momenta are damped by a spatial cutoff profile whose inverse
transform is nonnegative (a product of triangles in Fourier space, i.e. a
squared sinc in real space) and by a temporal profile obtained by convolving
a smooth bump with itself (hence also of positive type).  Both profiles equal
one at zero frequency, so smoothing preserves total mass.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from boselab.torus import TorusSpec
from boselab.mc import rng_for, chunk_indices


# ---------------------------------------------------------------------------
# cutoff profiles


def triangle_profile(p: np.ndarray) -> np.ndarray:
    """Per-axis triangle in Fourier space; inverse transform is sinc^2 >= 0."""
    return np.clip(1.0 - np.abs(p), 0.0, None)


@lru_cache(maxsize=1)
def _bump_selfconv_table() -> tuple[np.ndarray, np.ndarray]:
    """Self-convolution of the standard smooth bump, normalized to 1 at 0."""
    grid = np.linspace(-1.0, 1.0, 4001)
    with np.errstate(divide="ignore", over="ignore"):
        b = np.where(np.abs(grid) < 1.0, np.exp(-1.0 / np.maximum(1.0 - grid**2, 1e-300)), 0.0)
    conv = np.convolve(b, b) * (grid[1] - grid[0])
    x = np.linspace(-2.0, 2.0, len(conv))
    return x, conv / conv[len(conv) // 2]


def bump_selfconv_profile(p: np.ndarray) -> np.ndarray:
    """Smooth, compactly supported, positive-type temporal cutoff profile."""
    x, table = _bump_selfconv_table()
    return np.interp(np.abs(np.asarray(p, float)), x[len(x) // 2:], table[len(x) // 2:],
                     right=0.0)


@dataclass(frozen=True)
class RegularizationSpec:
    """Smoothing scale eta together with the two cutoff profiles."""

    eta: float
    spatial_cutoff: object = triangle_profile
    temporal_cutoff: object = bump_selfconv_profile

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")


# ---------------------------------------------------------------------------
# interaction potentials


class InteractionPotential:
    """Even, real, positive-type periodic potential given by Fourier data.

    Convention: v(x) = L^{-d} sum_k vhat_k e^{2 pi i k.x / L} with vhat_k >= 0
    and vhat_{-k} = vhat_k, so v is real, even and of positive type.
    """

    def __init__(self, d: int, L: float, coeffs: dict[tuple[int, ...], float]):
        self.d = d
        self.L = L
        clean: dict[tuple[int, ...], float] = {}
        for k, c in coeffs.items():
            k = tuple(int(i) for i in np.atleast_1d(k))
            if len(k) != d:
                raise ValueError("Fourier label has wrong dimension")
            if c < 0:
                raise ValueError("potential is not of positive type")
            if c != 0:
                clean[k] = float(c)
        for k, c in clean.items():
            mk = tuple(-i for i in k)
            if abs(clean.get(mk, 0.0) - c) > 1e-12 * max(1.0, abs(c)):
                raise ValueError("potential is not even")
        self.coeffs = clean

    @classmethod
    def constant(cls, d: int, L: float, c: float) -> "InteractionPotential":
        return cls(d, L, {(0,) * d: c * L**d})

    @classmethod
    def cosine(cls, d: int, L: float, mean: float, amplitudes: dict[int, float]) -> "InteractionPotential":
        """v(x) = mean + sum_j a_j cos(2 pi j x_1 / L) along the first axis."""
        coeffs = {(0,) * d: mean * L**d}
        for j, a in amplitudes.items():
            for s in (+1, -1):
                k = (s * j,) + (0,) * (d - 1)
                coeffs[k] = coeffs.get(k, 0.0) + a * L**d / 2.0
        return cls(d, L, coeffs)

    def vhat(self, k) -> float:
        return self.coeffs.get(tuple(int(i) for i in np.atleast_1d(k)), 0.0)

    def __call__(self, x) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        scalar = (x.ndim <= 1)
        pts = np.atleast_2d(x)
        out = np.zeros(pts.shape[0])
        for k, c in self.coeffs.items():
            out = out + c * np.cos(2.0 * math.pi / self.L * pts @ np.asarray(k, float))
        out = out / self.L**self.d
        return float(out[0]) if scalar else out

    @property
    def sup_norm(self) -> float:
        # positive type: the maximum of v is attained at 0
        return sum(self.coeffs.values()) / self.L**self.d

    def scaled(self, factor: float) -> "InteractionPotential":
        return InteractionPotential(self.d, self.L,
                                    {k: factor * c for k, c in self.coeffs.items()})


def regularized_potential(v: InteractionPotential, reg: RegularizationSpec) -> InteractionPotential:
    """v_eta = v * delta_eta: damp each Fourier coefficient by the spatial profile."""
    coeffs = {}
    for k, c in v.coeffs.items():
        damp = float(np.prod(reg.spatial_cutoff(2.0 * math.pi * reg.eta / v.L * np.asarray(k, float))))
        if damp < 0:
            raise ValueError("spatial cutoff profile must be nonnegative")
        coeffs[k] = c * damp
    return InteractionPotential(v.d, v.L, coeffs)


def regularized_delta(reg: RegularizationSpec, nu: float, tau) -> float | np.ndarray:
    """nu-periodic approximate delta function delta_{eta,nu}(tau).

    Fourier series (1/nu) sum_p phi~(eta 2 pi p / nu) e^{2 pi i p tau / nu};
    the profile is of positive type so the result is nonnegative, and the
    zero mode gives unit integral over one period.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    tau = np.asarray(tau, dtype=float)
    pmax = int(math.ceil(nu / (math.pi * reg.eta))) + 1
    p = np.arange(1, pmax + 1)
    c = reg.temporal_cutoff(reg.eta * 2.0 * math.pi * p / nu)
    series = 1.0 + 2.0 * np.sum(c * np.cos(2.0 * math.pi * np.multiply.outer(tau, p) / nu), axis=-1)
    out = series / nu
    return float(out) if np.ndim(out) == 0 else out


def temporal_coefficients(reg: RegularizationSpec, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """(p, phi~(eta 2 pi p / nu)) over the temporal frequencies with support."""
    pmax = int(math.ceil(nu / (math.pi * reg.eta))) + 1
    p = np.arange(-pmax, pmax + 1)
    c = reg.temporal_cutoff(reg.eta * 2.0 * math.pi * np.abs(p) / nu)
    keep = c > 0
    return p[keep], c[keep]


# ---------------------------------------------------------------------------
# classical free field


@dataclass
class ClassicalField:
    """Truncated classical free field phi = sum_k X_k / sqrt(lambda_k) u_k.

    coeffs has shape (n_samples, n_modes) over the modes of `spec` with
    per-axis label at most K.
    """

    spec: TorusSpec
    K: int
    coeffs: np.ndarray

    @property
    def mode_vectors(self) -> np.ndarray:
        return _truncated_modes(self.spec, self.K)[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Field values, shape (n_samples, n_points)."""
        kvecs, _ = _truncated_modes(self.spec, self.K)
        pts = np.atleast_2d(np.asarray(x, float))
        waves = np.exp(2j * math.pi / self.spec.L * pts @ kvecs.T) / self.spec.L ** (self.spec.d / 2)
        return self.coeffs @ waves.T


def _truncated_modes(spec: TorusSpec, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Mode vectors and eigenvalues with per-axis label at most K."""
    if K > spec.kmax:
        raise ValueError("K exceeds the retained mode range")
    mask = np.max(np.abs(spec.mode_vectors), axis=1) <= K
    return spec.mode_vectors[mask], spec.eigenvalues[mask]


def sample_phi(spec: TorusSpec, K: int, seed: int, n_samples: int = 1) -> ClassicalField:
    """Draw independent free fields; X_k = (g1 + i g2)/sqrt(2) standard complex."""
    _, lams = _truncated_modes(spec, K)
    n_modes = len(lams)
    coeffs = np.empty((n_samples, n_modes), dtype=complex)
    for index, start, count in chunk_indices(n_samples):
        rng = rng_for(seed, index)
        g = rng.standard_normal((count, n_modes, 2))
        coeffs[start:start + count] = (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2.0)
    coeffs = coeffs / np.sqrt(lams)
    return ClassicalField(spec=spec, K=K, coeffs=coeffs)


# ---------------------------------------------------------------------------
# auxiliary fields


def _sigma_weights(spec: TorusSpec, v_eta: InteractionPotential,
                   reg: RegularizationSpec, nu: float, lam: float):
    """Spectral weights w_{k,p} of the sigma covariance and their labels."""
    kvecs = np.array(sorted(v_eta.coeffs.keys()))
    if len(kvecs) == 0:
        kvecs = np.zeros((0, spec.d), dtype=int)
    vh = np.array([v_eta.coeffs[tuple(k)] for k in kvecs]) if len(kvecs) else np.zeros(0)
    p, c = temporal_coefficients(reg, nu)
    w = (lam / nu) * np.multiply.outer(vh / spec.L**spec.d, c / nu)
    return kvecs, p, w


@dataclass
class AuxFieldSigma:
    """Real space-time Gaussian field on [0, nu] x Lambda, sampled spectrally.

    values are recovered from the stored mode amplitudes g, h via
    sigma(tau, x) = sum_{k,p} sqrt(w_{k,p}/2) (g cos theta + h sin theta),
    theta = 2 pi k.x / L + 2 pi p tau / nu.
    """

    spec: TorusSpec
    reg: RegularizationSpec
    nu: float
    lam: float
    kvecs: np.ndarray
    pvals: np.ndarray
    w: np.ndarray
    g: np.ndarray
    h: np.ndarray

    def values(self, taus: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Field on the grid taus x points, shape (..., n_tau, n_points)."""
        taus = np.atleast_1d(np.asarray(taus, float))
        pts = np.atleast_2d(np.asarray(x, float))
        sphase = 2.0 * math.pi / self.spec.L * (pts @ self.kvecs.T)      # (P, K)
        tphase = 2.0 * math.pi / self.nu * np.multiply.outer(taus, self.pvals)  # (T, p)
        theta = sphase[None, :, :, None] + tphase[:, None, None, :]      # (T, P, K, p)
        amp = np.sqrt(self.w / 2.0)
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        out = np.einsum("...kp,tnkp->...tn", amp * self.g, cos_t) \
            + np.einsum("...kp,tnkp->...tn", amp * self.h, sin_t)
        return out

    def spatial_integral(self, taus: np.ndarray) -> np.ndarray:
        """integral over Lambda of sigma(tau, .) as a function of tau."""
        mask = np.all(self.kvecs == 0, axis=1) if len(self.kvecs) else np.zeros(0, bool)
        taus = np.atleast_1d(np.asarray(taus, float))
        tphase = 2.0 * math.pi / self.nu * np.multiply.outer(taus, self.pvals)
        amp = np.sqrt(self.w / 2.0)
        contrib = np.einsum("...kp,tp->...t", (amp * self.g)[..., mask, :], np.cos(tphase)) \
            + np.einsum("...kp,tp->...t", (amp * self.h)[..., mask, :], np.sin(tphase))
        return contrib * self.spec.L**self.spec.d

    def time_average(self) -> "AuxFieldXi":
        """Exact time average over one period: only the p = 0 modes survive.

        With the mean-field coupling lam = nu^2 the resulting spatial field
        has covariance exactly v_eta, i.e. the same law as sample_xi output.
        """
        j = int(np.flatnonzero(self.pvals == 0)[0])
        return AuxFieldXi(spec=self.spec, kvecs=self.kvecs, w=self.w[:, j],
                          g=self.g[..., j], h=self.h[..., j])


@dataclass
class AuxFieldXi:
    """Real spatial Gaussian field with covariance v_eta, sampled spectrally."""

    spec: TorusSpec
    kvecs: np.ndarray
    w: np.ndarray
    g: np.ndarray
    h: np.ndarray

    def values(self, x: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, float))
        theta = 2.0 * math.pi / self.spec.L * (pts @ self.kvecs.T)
        amp = np.sqrt(self.w / 2.0)
        return np.einsum("...k,nk->...n", amp * self.g, np.cos(theta)) \
            + np.einsum("...k,nk->...n", amp * self.h, np.sin(theta))

    def fourier(self) -> tuple[np.ndarray, np.ndarray]:
        """(labels q, xi_hat(q)) with xi(x) = L^{-d} sum_q xi_hat(q) e^{iq.x}."""
        amp = np.sqrt(self.w / 2.0)
        A = amp * (self.g - 1j * self.h)          # (..., K)
        # xi = Re sum_k A_k e^{i theta_k}; coefficient of e^{iq.x} is
        # (A_q + conj(A_{-q}))/2; the label set is symmetric under k -> -k.
        order = {tuple(k): i for i, k in enumerate(self.kvecs)}
        neg = np.array([order[tuple(-k)] for k in self.kvecs])
        xh = (A + np.conj(A[..., neg])) / 2.0 * self.spec.L**self.spec.d
        return self.kvecs, xh

    def multiplication_matrix(self, mode_vectors: np.ndarray) -> np.ndarray:
        """Matrix <u_k, xi u_l> = xi_hat(k - l)/L^d on the given mode basis."""
        labels, xh = self.fourier()
        table = {tuple(q): xh[..., i] for i, q in enumerate(labels)}
        n = len(mode_vectors)
        lead = xh.shape[:-1]
        M = np.zeros(lead + (n, n), dtype=complex)
        for a in range(n):
            for b in range(n):
                q = tuple(mode_vectors[a] - mode_vectors[b])
                if q in table:
                    M[..., a, b] = table[q]
        return M / self.spec.L**self.spec.d


def sample_sigma(spec: TorusSpec, reg: RegularizationSpec, nu: float,
                 v: InteractionPotential, seed: int, n_samples: int = 1,
                 lam: float | None = None) -> AuxFieldSigma:
    """Draw sigma fields; default coupling is the mean-field choice lam = nu^2."""
    if lam is None:
        lam = nu * nu
    v_eta = regularized_potential(v, reg)
    kvecs, pvals, w = _sigma_weights(spec, v_eta, reg, nu, lam)
    shape = (n_samples,) + w.shape
    g = np.empty(shape)
    h = np.empty(shape)
    for index, start, count in chunk_indices(n_samples):
        rng = rng_for(seed, index)
        g[start:start + count] = rng.standard_normal((count,) + w.shape)
        h[start:start + count] = rng.standard_normal((count,) + w.shape)
    return AuxFieldSigma(spec=spec, reg=reg, nu=nu, lam=lam,
                         kvecs=kvecs, pvals=pvals, w=w, g=g, h=h)


def sample_xi(spec: TorusSpec, reg: RegularizationSpec, v: InteractionPotential,
              seed: int, n_samples: int = 1) -> AuxFieldXi:
    """Draw spatial fields with covariance v_eta."""
    v_eta = regularized_potential(v, reg)
    kvecs = np.array(sorted(v_eta.coeffs.keys()))
    if len(kvecs) == 0:
        kvecs = np.zeros((0, spec.d), dtype=int)
    w = np.array([v_eta.coeffs[tuple(k)] for k in kvecs]) / spec.L**spec.d \
        if len(kvecs) else np.zeros(0)
    shape = (n_samples, len(kvecs))
    g = np.empty(shape)
    h = np.empty(shape)
    for index, start, count in chunk_indices(n_samples):
        rng = rng_for(seed, index)
        g[start:start + count] = rng.standard_normal((count, len(kvecs)))
        h[start:start + count] = rng.standard_normal((count, len(kvecs)))
    return AuxFieldXi(spec=spec, kvecs=kvecs, w=w, g=g, h=h)


# ---------------------------------------------------------------------------
# Wick / pairing combinatorics


def partial_pairings(n: int) -> list[list[tuple[int, int]]]:
    """All sets of disjoint unordered pairs of {0, ..., n-1}, incl. the empty one."""
    def go(items: tuple[int, ...]) -> list[list[tuple[int, int]]]:
        if not items:
            return [[]]
        first, rest = items[0], items[1:]
        out = [p for p in go(rest)]  # first unpaired
        for j, other in enumerate(rest):
            remaining = rest[:j] + rest[j + 1:]
            for p in go(remaining):
                out.append([(first, other)] + p)
        return out
    return go(tuple(range(n)))


def complete_pairings(n: int) -> list[list[tuple[int, int]]]:
    return [p for p in partial_pairings(n) if 2 * len(p) == n]


def wick_order_moment(cov: np.ndarray, n: int):
    """Evaluator u -> :u_1 ... u_n: for the Gaussian covariance `cov`.

    The returned closure accepts arrays of shape (..., n) and applies the
    partial-pairing expansion, each pair contributing a factor -C_ij.
    """
    cov = np.asarray(cov)
    pairings = partial_pairings(n)

    def evaluate(u: np.ndarray):
        u = np.asarray(u)
        total = 0.0
        for pairing in pairings:
            paired = {i for pair in pairing for i in pair}
            term = np.ones(u.shape[:-1], dtype=u.dtype)
            for i in range(n):
                if i not in paired:
                    term = term * u[..., i]
            for i, j in pairing:
                term = term * (-cov[i, j])
            total = total + term
        return total

    return evaluate


def gaussian_characteristic_moment(cov: np.ndarray, f_list, f) -> complex:
    """Closed form of E[ prod_j <f_j, u> e^{i <f, u>} ] for u ~ N(0, cov).

    Equals e^{-<f, C f>/2} * sum over partial pairings Pi of the f_j of
    prod_{pairs} <f_i, C f_j> prod_{unpaired} i <f_i, C f>.
    """
    cov = np.asarray(cov, dtype=float)
    f = np.asarray(f, dtype=float)
    fs = [np.asarray(g, dtype=float) for g in f_list]
    k = len(fs)
    total = 0.0 + 0.0j
    for pairing in partial_pairings(k):
        paired = {i for pair in pairing for i in pair}
        term = 1.0 + 0.0j
        for i, j in pairing:
            term *= fs[i] @ cov @ fs[j]
        for i in range(k):
            if i not in paired:
                term *= 1j * (fs[i] @ cov @ f)
        total += term
    return complex(math.exp(-0.5 * float(f @ cov @ f)) * total)


def complex_wick_moment(cov: np.ndarray, f_list, g_list) -> complex:
    """E[ prod <f_i, u> <u, g_i> ] for a complex Gaussian u with covariance cov."""
    cov = np.asarray(cov)
    fs = [np.asarray(x) for x in f_list]
    gs = [np.asarray(x) for x in g_list]
    p = len(fs)
    if len(gs) != p:
        raise ValueError("need equally many f and g")
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(p)):
        term = 1.0 + 0.0j
        for i in range(p):
            term *= np.conj(fs[i]) @ cov @ gs[perm[i]]
        total += term
    return complex(total)


def t_p_polynomial(p: int, x: float) -> float:
    """T_p(x) = sum_{k,l=0}^p C(p,k) C(p,l) (-1)^{k+l} x^{(k-l)^2}.

    Satisfies E|1 - e^{i<f,u>}|^{2p} = T_p(e^{-<f,Cf>/2}) for Gaussian u, and
    has 1 as a root of multiplicity at least p.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    total = 0.0
    for k in range(p + 1):
        for l in range(p + 1):
            total += math.comb(p, k) * math.comb(p, l) * (-1) ** (k + l) * x ** ((k - l) ** 2)
    return total
