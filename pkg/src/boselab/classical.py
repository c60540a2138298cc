"""Classical Gibbs-measure side of the gas.

The classical field phi is the free Gaussian field with covariance h^{-1},
truncated to per-axis modes at most K.  The interacting Gibbs state reweights
it by e^{-W} with the Wick-ordered pair interaction W >= 0.  Correlation
kernels gamma_p and their Wick-ordered versions gamma_hat_p are estimated by
ratio estimators over a shared sample stream.  The dual route integrates out
phi: a real auxiliary field xi with covariance v_eta turns the partition
function into a Gaussian average of e^{f2(xi)}, with f2 a renormalized
log-determinant computed on the same truncated spectral basis — at matched
truncation the two routes are exactly equal in expectation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from boselab.torus import TorusSpec
from boselab.mc import MCEstimate, mean_estimate, ratio_estimate
from boselab.fields import (
    AuxFieldXi,
    ClassicalField,
    InteractionPotential,
    RegularizationSpec,
    _truncated_modes,
    regularized_potential,
    sample_phi,
    sample_xi,
)


@dataclass
class CorrelationKernel:
    """A p-point correlation kernel evaluated at a list of point tuples.

    eval_points is a list of pairs (x, x_tilde), each an array of shape
    (p, d); values holds one MCEstimate per pair (exact kernels carry zero
    std_error).
    """

    p: int
    eval_points: list
    values: list
    wick_ordered: bool = False

    def lookup(self, xs, xts) -> MCEstimate:
        xs = np.atleast_2d(np.asarray(xs, float))
        xts = np.atleast_2d(np.asarray(xts, float))
        for (a, b), val in zip(self.eval_points, self.values):
            if a.shape == xs.shape and np.allclose(a, xs, atol=1e-12) \
                    and np.allclose(b, xts, atol=1e-12):
                return val
        raise KeyError("point pair not present in kernel")


def _as_point_tuples(eval_points, d: int):
    out = []
    for xs, xts in eval_points:
        xs = np.atleast_2d(np.asarray(xs, float).reshape(-1, d))
        xts = np.atleast_2d(np.asarray(xts, float).reshape(-1, d))
        if xs.shape != xts.shape:
            raise ValueError("point tuples must have matching shapes")
        out.append((xs, xts))
    return out


def permanent(M: np.ndarray) -> complex:
    """Permanent of a small square matrix by direct permutation sum."""
    M = np.asarray(M)
    n = M.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    total = 0.0 + 0.0j
    for perm in itertools.permutations(range(n)):
        term = 1.0 + 0.0j
        for i in range(n):
            term *= M[i, perm[i]]
        total += term
    return total


def free_gamma1(spec: TorusSpec, K: int, x, xt) -> complex:
    """Free classical two-point kernel: the h^{-1} kernel on the K-modes."""
    kvecs, lams = _truncated_modes(spec, K)
    ux = spec_waves(spec, kvecs, x)
    uy = spec_waves(spec, kvecs, xt)
    return complex(np.sum(ux * np.conj(uy) / lams))


def spec_waves(spec: TorusSpec, kvecs: np.ndarray, x) -> np.ndarray:
    """Plane-wave values u_k(x) on an explicit mode list, shape (..., n_modes)."""
    x = np.asarray(x, dtype=float)
    phase = 2.0 * math.pi / spec.L * (x @ kvecs.T if x.ndim > 1
                                      else kvecs @ x)
    return np.exp(1j * phase) / spec.L ** (spec.d / 2.0)


def free_gamma_p(spec: TorusSpec, K: int, xs, xts) -> complex:
    """Free 2p-point kernel: permanent of the one-body kernels (Wick)."""
    xs = np.atleast_2d(xs)
    xts = np.atleast_2d(xts)
    p = xs.shape[0]
    M = np.array([[free_gamma1(spec, K, xs[i], xts[j]) for j in range(p)]
                  for i in range(p)])
    return permanent(M)


def classical_density_K(spec: TorusSpec, K: int) -> float:
    """Truncated classical density: sum over modes of |u_k|^2 / lambda_k.

    Constant on the torus since |u_k(x)|^2 = 1/L^d.
    """
    _, lams = _truncated_modes(spec, K)
    return float(np.sum(1.0 / lams)) / spec.L**spec.d


def wick_interaction(phi: ClassicalField, v: InteractionPotential,
                     K: int | None = None) -> np.ndarray:
    """Wick-ordered pair interaction W(phi) per sample, always >= 0.

    Spectrally, W = (2 L^d)^{-1} sum_q vhat_q |A_q|^2 where A_q is the
    autocorrelation of the mode coefficients minus its Gaussian mean at q=0;
    positivity is manifest term by term for a positive-type v.
    """
    spec = phi.spec
    if K is None:
        K = phi.K
    kvecs, lams = _truncated_modes(spec, K)
    index = {tuple(k): i for i, k in enumerate(kvecs)}
    c = phi.coeffs
    trace = float(np.sum(1.0 / lams))
    W = np.zeros(c.shape[0])
    for q, vq in v.coeffs.items():
        A = np.zeros(c.shape[0], dtype=complex)
        for i, k in enumerate(kvecs):
            j = index.get(tuple(np.asarray(k) - np.asarray(q)))
            if j is not None:
                A += c[:, i] * np.conj(c[:, j])
        if all(qi == 0 for qi in q):
            A -= trace
        W += vq * np.abs(A) ** 2
    W /= 2.0 * spec.L**spec.d
    if np.min(W) < -1e-10:
        raise ArithmeticError("interaction functional went negative")
    return np.maximum(W, 0.0)


class GibbsEnsemble:
    """Shared sample stream for the interacting classical measure.

    Holds phi samples and the reweighting factors e^{-W}; all ratio
    estimators built from one ensemble share the same stream so that
    numerator/denominator fluctuations cancel.
    """

    def __init__(self, spec: TorusSpec, v: InteractionPotential, K: int,
                 n_samples: int, seed: int):
        self.spec = spec
        self.v = v
        self.K = K
        self.seed = seed
        self.field = sample_phi(spec, K, seed, n_samples)
        self.W = wick_interaction(self.field, v)
        self.weights = np.exp(-self.W)

    def zeta(self) -> MCEstimate:
        return mean_estimate(self.weights, self.seed)

    def _phi_at(self, points: np.ndarray) -> np.ndarray:
        return self.field.evaluate(points)

    def gamma_value(self, xs: np.ndarray, xts: np.ndarray) -> MCEstimate:
        """Ratio estimator of the plain 2p-point kernel at one point pair."""
        fx = self._phi_at(xs)
        fy = self._phi_at(xts)
        num = self.weights * np.prod(fx, axis=1) * np.prod(np.conj(fy), axis=1)
        return ratio_estimate(num, self.weights, self.seed)

    def gamma_hat_value(self, xs: np.ndarray, xts: np.ndarray) -> MCEstimate:
        """Wick-ordered kernel as a single ratio estimator.

        The subset expansion is linear in the plain kernels, so it can be
        pushed inside the expectation: one numerator per sample, one ratio.
        """
        p = xs.shape[0]
        fx = self._phi_at(xs)
        fy = self._phi_at(xts)
        num = np.zeros(len(self.weights), dtype=complex)
        for I, It in _matched_subsets(p):
            Ic = [i for i in range(p) if i not in I]
            Itc = [j for j in range(p) if j not in It]
            free = permanent(np.array(
                [[free_gamma1(self.spec, self.K, xs[i], xts[j]) for j in Itc]
                 for i in Ic])) if Ic else 1.0
            term = np.ones(len(self.weights), dtype=complex)
            for i in I:
                term = term * fx[:, i]
            for j in It:
                term = term * np.conj(fy[:, j])
            num += (-1.0) ** len(Ic) * free * term
        return ratio_estimate(self.weights * num, self.weights, self.seed)

    def density_moment(self, points: np.ndarray) -> MCEstimate:
        """Ratio estimator of the product of Wick-ordered densities."""
        rho = classical_density_K(self.spec, self.K)
        f = self._phi_at(points)
        prod = np.prod(np.abs(f) ** 2 - rho, axis=1)
        return ratio_estimate(self.weights * prod, self.weights, self.seed)


def _matched_subsets(p: int):
    items = list(range(p))
    for r in range(p + 1):
        for I in itertools.combinations(items, r):
            for It in itertools.combinations(items, r):
                yield I, It


def estimate_zeta(spec: TorusSpec, v: InteractionPotential, K: int,
                  n_samples: int, seed: int) -> MCEstimate:
    """Relative partition function as the mean of e^{-W} over free samples."""
    return GibbsEnsemble(spec, v, K, n_samples, seed).zeta()


def estimate_gamma_p(spec: TorusSpec, v: InteractionPotential, K: int, p: int,
                     eval_points, n_samples: int, seed: int,
                     wick_ordered: bool = False,
                     ensemble: GibbsEnsemble | None = None) -> CorrelationKernel:
    """Correlation kernel (plain or Wick-ordered) at the given point pairs.

    The estimator is automatically symmetric under simultaneous permutations
    of the point tuples because the per-sample numerator is a product over
    the tuple entries.
    """
    if p < 1:
        raise ValueError("order must be at least 1")
    pts = _as_point_tuples(eval_points, spec.d)
    ens = ensemble if ensemble is not None \
        else GibbsEnsemble(spec, v, K, n_samples, seed)
    values = []
    for xs, xts in pts:
        if xs.shape[0] != p:
            raise ValueError("point tuple has wrong order")
        values.append(ens.gamma_hat_value(xs, xts) if wick_ordered
                      else ens.gamma_value(xs, xts))
    return CorrelationKernel(p=p, eval_points=pts, values=values,
                             wick_ordered=wick_ordered)


def wick_kernel_transform(p: int, kernel_eval, free_eval, xs, xts,
                          to_wick_ordered: bool) -> complex:
    """Subset expansion relating plain and Wick-ordered kernels.

    kernel_eval(xs_sub, xts_sub) returns the input kernel on a sub-tuple
    (order 0 -> 1); free_eval(x, xt) is the free one-body kernel.  With
    to_wick_ordered=True each complementary free block carries (-1)^{|I^c|};
    the inverse map is the same sum without the sign.
    """
    total = 0.0 + 0.0j
    for I, It in _matched_subsets(p):
        Ic = [i for i in range(p) if i not in I]
        Itc = [j for j in range(p) if j not in It]
        free = permanent(np.array([[free_eval(xs[i], xts[j]) for j in Itc]
                                   for i in Ic])) if Ic else 1.0
        core = kernel_eval(xs[list(I)], xts[list(It)]) if I else 1.0
        sign = (-1.0) ** len(Ic) if to_wick_ordered else 1.0
        total += sign * core * free
    return complex(total)


def hat_from_plain(gammas: list, free_eval, inverse: bool = False) -> CorrelationKernel:
    """Convert a family of plain kernels of orders 1..p into the order-p
    Wick-ordered kernel at the order-p kernel's eval points (or back).

    gammas[q-1] must be the order-q kernel and must contain every sub-tuple
    of the target points among its eval points; free_eval(x, xt) is the free
    one-body kernel.
    """
    p = len(gammas)
    target = gammas[p - 1]

    def kernel_eval(xs_sub, xts_sub):
        q = xs_sub.shape[0]
        return gammas[q - 1].lookup(xs_sub, xts_sub).value

    values = []
    for xs, xts in target.eval_points:
        val = wick_kernel_transform(p, kernel_eval, free_eval, xs, xts,
                                    to_wick_ordered=not inverse)
        err = sum(v.std_error for g in gammas for v in g.values)
        values.append(MCEstimate(value=val, std_error=err,
                                 n_samples=target.values[0].n_samples,
                                 seed=target.values[0].seed))
    return CorrelationKernel(p=p, eval_points=target.eval_points,
                             values=values, wick_ordered=not inverse)


# ---------------------------------------------------------------------------
# the dual xi-field route


def f2_xi(spec: TorusSpec, xi: AuxFieldXi, K: int | None = None):
    """Renormalized log-determinant functional of the auxiliary field.

    f2 = -tr[log(h - i xi) - log h] - i tr(xi h^{-1}) on the truncated
    basis, via the eigenvalues of the complex matrix h - i Xi.  The spectrum
    of h - i Xi has real part >= kappa > 0, so the principal branch is safe.
    Vectorized over leading sample axes of xi.  Re f2 <= 0 is asserted.
    """
    if K is None:
        K = spec.kmax
    kvecs, lams = _truncated_modes(spec, K)
    Xi = xi.multiplication_matrix(kvecs)
    M = np.zeros(Xi.shape, dtype=complex)
    M[...] = np.diag(lams)
    M -= 1j * Xi
    mu = np.linalg.eigvals(M)
    logdet = np.sum(np.log(mu), axis=-1) - np.sum(np.log(lams))
    labels, xh = xi.fourier()
    zero = np.zeros(xh.shape[:-1], dtype=complex)
    for i, q in enumerate(labels):
        if all(c == 0 for c in q):
            zero = xh[..., i]
    rho_K = classical_density_K(spec, K)
    f2 = -logdet - 1j * zero * rho_K
    if np.max(np.real(f2)) > 1e-8:
        raise ArithmeticError("Re f2 must be nonpositive")
    return f2 if np.ndim(f2) else complex(f2)


def estimate_zeta_xi(spec: TorusSpec, v: InteractionPotential,
                     reg: RegularizationSpec, n_samples: int, seed: int,
                     K: int | None = None) -> MCEstimate:
    """Partition function via the auxiliary field: mean of e^{f2(xi)}."""
    xi = sample_xi(spec, reg, v, seed, n_samples)
    return mean_estimate(np.exp(f2_xi(spec, xi, K)), seed)


def estimate_gamma_hat_xi(spec: TorusSpec, v: InteractionPotential,
                          reg: RegularizationSpec, p: int, eval_points,
                          n_samples: int, seed: int,
                          K: int | None = None) -> CorrelationKernel:
    """Wick-ordered kernel via the auxiliary field.

    Per sample, the resolvent difference (h - i xi)^{-1} - h^{-1} is formed
    by a complex linear solve on the spectral basis; the order-p kernel is
    the permutation sum over its position-space matrix elements, weighted by
    e^{f2} inside a shared-stream ratio estimator.
    """
    if K is None:
        K = spec.kmax
    pts = _as_point_tuples(eval_points, spec.d)
    kvecs, lams = _truncated_modes(spec, K)
    xi = sample_xi(spec, reg, v, seed, n_samples)
    Xi = xi.multiplication_matrix(kvecs)
    M = np.zeros(Xi.shape, dtype=complex)
    M[...] = np.diag(lams)
    M -= 1j * Xi
    G = np.linalg.solve(M, np.broadcast_to(np.eye(len(lams)), M.shape))
    dG = G - np.diag(1.0 / lams)
    weights = np.exp(f2_xi(spec, xi, K))
    values = []
    for xs, xts in pts:
        ux = spec_waves(spec, kvecs, xs)          # (p, n_modes)
        uy = spec_waves(spec, kvecs, xts)
        # position-space elements D[s, i, j] = <x_i| dG_s |xt_j>
        D = np.einsum("im,smn,jn->sij", ux, dG, np.conj(uy))
        num = np.zeros(n_samples, dtype=complex)
        for perm in itertools.permutations(range(p)):
            term = np.ones(n_samples, dtype=complex)
            for i in range(p):
                term = term * D[:, i, perm[i]]
            num += term
        values.append(ratio_estimate(weights * num, weights, seed))
    return CorrelationKernel(p=p, eval_points=pts, values=values,
                             wick_ordered=True)


def fixed_point_free_bijections(src: list, dst: list):
    """All bijections src -> dst (as dicts) with no fixed points."""
    if len(src) != len(dst):
        return
    for perm in itertools.permutations(dst):
        if all(i != j for i, j in zip(src, perm)):
            yield dict(zip(src, perm))


def density_from_kernels(p: int, hat_eval, free_eval, points: np.ndarray) -> complex:
    """Density-correlation assembly from Wick-ordered kernels.

    Sums over subset pairs (J, J~) the Wick-ordered kernel on (x_J, x_{J~})
    times, over all fixed-point-free bijections of the complements, products
    of off-diagonal free one-body kernels.
    """
    idx = list(range(p))
    total = 0.0 + 0.0j
    for J, Jt in _matched_subsets(p):
        Jc = [i for i in idx if i not in J]
        Jtc = [i for i in idx if i not in Jt]
        hat = hat_eval(points[list(J)], points[list(Jt)]) if J else 1.0
        if hat == 0.0:
            continue
        free_sum = 0.0 + 0.0j
        for delta in fixed_point_free_bijections(Jc, Jtc):
            term = 1.0 + 0.0j
            for i in Jc:
                term *= free_eval(points[i], points[delta[i]])
            free_sum += term
        if not Jc:
            free_sum = 1.0
        total += hat * free_sum
    return complex(total)


def density_correlation_classical(spec: TorusSpec, v: InteractionPotential,
                                  K: int, p: int, points, n_samples: int,
                                  seed: int) -> tuple[MCEstimate, MCEstimate]:
    """Product of Wick-ordered densities by two independent routes.

    Route one: direct ratio estimator of the per-sample product.  Route two:
    the combinatorial expansion in Wick-ordered kernels and off-diagonal
    free kernels, with each kernel estimated on the shared stream.
    """
    points = np.atleast_2d(np.asarray(points, float).reshape(-1, spec.d))
    ens = GibbsEnsemble(spec, v, K, n_samples, seed)
    direct = ens.density_moment(points)

    cache = {}

    def hat_eval(xs, xts):
        key = (xs.tobytes(), xts.tobytes())
        if key not in cache:
            cache[key] = ens.gamma_hat_value(xs, xts)
        return cache[key].value

    def free_eval(x, xt):
        return free_gamma1(spec, K, x, xt)

    value = density_from_kernels(p, hat_eval, free_eval, points)
    err = math.fsum(v.std_error for v in cache.values())
    combinatorial = MCEstimate(value=value, std_error=err,
                               n_samples=n_samples, seed=seed)
    return direct, combinatorial
