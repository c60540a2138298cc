"""Quantum side of the gas via the functional-integral representation.

The one-body propagator driven by a periodized time-dependent potential is
realized by second-order operator splitting on the truncated spectral basis.
From it we build the time-periodic Green function, the renormalized
log-determinant functional F2 of the auxiliary field sigma, and Monte Carlo
estimators for the relative partition function and the (Wick-ordered)
reduced density matrix kernels.  Free-gas closed forms and the combinatorial
density-correlation identity provide cross-checks.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from boselab.torus import TorusSpec, heat_kernel, free_quantum_density
from boselab.mc import MCEstimate, mean_estimate, ratio_estimate
from boselab.bridges import BridgeMeasureSpec, sample_bridges, path_line_integrals
from boselab.fields import (
    AuxFieldSigma,
    InteractionPotential,
    RegularizationSpec,
    regularized_potential,
    sample_sigma,
)
from boselab.classical import (
    CorrelationKernel,
    _as_point_tuples,
    density_from_kernels,
    permanent,
    spec_waves,
    wick_kernel_transform,
)


@dataclass
class PropagatorMatrix:
    """One-body propagator over [tau_from, tau_to] on an explicit mode list."""

    tau_from: float
    tau_to: float
    matrix: np.ndarray
    kvecs: np.ndarray
    lams: np.ndarray


@dataclass
class GreenKernel:
    """Time-periodic Green function (the zero-slice of the inverse operator).

    matrix equals W (1 - W)^{-1} with W the one-period propagator; tail_bound
    reports the dropped part of the equivalent loop sum truncated at R.
    """

    matrix: np.ndarray
    kvecs: np.ndarray
    R: float
    tail_bound: float


@dataclass(frozen=True)
class DensityShift:
    """Mean-density parameter for the chemical-potential phase factor."""

    rho_shift: float

    def __post_init__(self):
        if not math.isfinite(self.rho_shift):
            raise ValueError("density shift must be finite")


def mode_data(spec: TorusSpec, kvecs=None):
    """Mode list and h-eigenvalues, defaulting to the full retained basis."""
    if kvecs is None:
        kvecs = spec.mode_vectors
    kvecs = np.atleast_2d(np.asarray(kvecs, int))
    k2 = np.sum(kvecs.astype(float) ** 2, axis=1)
    lams = spec.kappa + 2.0 * math.pi**2 * k2 / spec.L**2
    return kvecs, lams


def _collocation_grid(spec: TorusSpec, n_grid: int) -> np.ndarray:
    axis = -spec.L / 2.0 + spec.L * np.arange(n_grid) / n_grid
    grids = np.meshgrid(*([axis] * spec.d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def propagate(spec: TorusSpec, u, tau_from: float, tau_to: float,
              n_steps: int, kvecs=None, n_grid: int | None = None) -> PropagatorMatrix:
    """Propagator for d/dtau = (Laplacian/2 + u(tau, .)) by Strang splitting.

    u is a callable (tau, points (n, d)) -> complex values, already extended
    periodically by the caller; u=None means the constant potential -kappa.
    Each step applies a half kinetic flow (exact, diagonal), a full potential
    flow (pointwise on a collocation grid fine enough to avoid aliasing of
    the retained mode differences), and another half kinetic flow.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    if tau_to < tau_from:
        raise ValueError("need tau_to >= tau_from")
    kvecs, lams = mode_data(spec, kvecs)
    n_modes = len(kvecs)
    T = tau_to - tau_from
    if T == 0.0:
        return PropagatorMatrix(tau_from, tau_to, np.eye(n_modes, dtype=complex),
                                kvecs, lams)
    if u is None:
        return PropagatorMatrix(tau_from, tau_to,
                                np.diag(np.exp(-T * lams)).astype(complex),
                                kvecs, lams)
    if n_grid is None:
        n_grid = 4 * int(np.max(np.abs(kvecs))) + 3
    pts = _collocation_grid(spec, n_grid)
    E = np.exp(2j * math.pi / spec.L * (pts @ kvecs.T))   # (n_pts, n_modes)
    Eh = np.conj(E.T) / n_grid**spec.d
    dt = T / n_steps
    kin_half = np.exp(-0.5 * dt * (lams - spec.kappa))    # pure kinetic part
    M = np.eye(n_modes, dtype=complex)
    for j in range(n_steps):
        tau_mid = tau_from + (j + 0.5) * dt
        vals = np.exp(dt * np.asarray(u(tau_mid, pts), dtype=complex))
        M = kin_half[:, None] * (Eh @ (vals[:, None] * (E @ (kin_half[:, None] * M))))
    return PropagatorMatrix(tau_from, tau_to, M, kvecs, lams)


def constant_u(spec: TorusSpec, value: complex):
    """Potential callable for a space-time constant value."""
    def u(tau, pts):
        return np.full(len(pts), value, dtype=complex)
    return u


def sigma_potential(spec: TorusSpec, sigma: AuxFieldSigma, sample: int | None = 0):
    """The driving potential -kappa + i sigma([tau]_nu, x) as a callable."""
    nu = sigma.nu

    def u(tau, pts):
        vals = sigma.values(np.asarray([tau % nu]), pts)
        if sample is not None:
            vals = vals[sample]
        return -spec.kappa + 1j * vals[0]
    return u


def kernel_at_points(prop_matrix: np.ndarray, spec: TorusSpec, kvecs: np.ndarray,
                     x, xt) -> complex:
    """Position-space kernel <x| M |xt> from a spectral matrix."""
    ux = spec_waves(spec, kvecs, np.asarray(x, float))
    uy = spec_waves(spec, kvecs, np.asarray(xt, float))
    return complex(ux @ prop_matrix @ np.conj(uy))


def feynman_kac_kernel(spec: TorusSpec, u, tau_from: float, tau_to: float,
                       x, x_tilde, n_samples: int, m: int, seed: int) -> MCEstimate:
    """Propagator kernel by averaging e^{integral of u along the path} over
    bridges, weighted by the bridge mass (the heat kernel)."""
    bspec = BridgeMeasureSpec(spec=spec, tau_from=tau_from, tau_to=tau_to,
                              x_from=np.atleast_1d(np.asarray(x_tilde, float)),
                              x_to=np.atleast_1d(np.asarray(x, float)), m=m)
    paths = sample_bridges(bspec, seed, n_samples)
    if u is None:
        u = constant_u(spec, -spec.kappa)
    vals = np.empty((n_samples, m + 1), dtype=complex)
    for j, t in enumerate(bspec.t_grid):
        vals[:, j] = u(t, paths[:, j])
    integrals = path_line_integrals(bspec.t_grid, paths, vals)
    return mean_estimate(bspec.weight * np.exp(integrals), seed)


def green_kernel(spec: TorusSpec, u, nu: float, n_steps: int,
                 R_cutoff: float | None = None, kvecs=None,
                 prop: PropagatorMatrix | None = None) -> GreenKernel:
    """Green function of the time-periodic problem via one linear solve.

    Equivalent to the loop sum over whole periods of the propagator; the
    geometric tail beyond R is reported.  The solve route is preferred; the
    loop sum is exposed separately for verification.
    """
    if prop is None:
        prop = propagate(spec, u, 0.0, nu, n_steps, kvecs=kvecs)
    W = prop.matrix
    radius = np.max(np.abs(np.linalg.eigvals(W)))
    if radius >= 1.0:
        raise ArithmeticError("one-period propagator has spectral radius >= 1")
    if R_cutoff is None:
        R_cutoff = max(nu, 10.0 * math.log(10.0) / spec.kappa)  # e^{-kappa R} < 1e-10
    G = np.linalg.solve(np.eye(len(W)) - W, W)
    opnorm = float(np.linalg.norm(W, 2))
    tail = math.exp(-spec.kappa * R_cutoff) / (1.0 - math.exp(-spec.kappa * nu)) * opnorm
    return GreenKernel(matrix=G, kvecs=prop.kvecs, R=R_cutoff, tail_bound=tail)


def green_kernel_loop_sum(prop: PropagatorMatrix, nu: float, R_cutoff: float) -> np.ndarray:
    """Verification route: explicit sum of propagator powers over r in nu N*."""
    W = prop.matrix
    total = np.zeros_like(W)
    power = np.eye(len(W), dtype=complex)
    r = nu
    while r <= R_cutoff:
        power = power @ W
        total = total + power
        r += nu
    return total


def F0_F1(spec: TorusSpec, u, nu: float, n_steps: int, kvecs=None,
          prop: PropagatorMatrix | None = None) -> tuple[complex, complex]:
    """Log-determinant functional of the one-period propagator and its
    value relative to the free one.

    F0 = -sum of principal logs of (1 - mu_i) over the eigenvalues mu_i of
    the one-period propagator; all |mu_i| < 1 is enforced.  F1 subtracts the
    free value and has nonpositive real part.
    """
    if prop is None:
        prop = propagate(spec, u, 0.0, nu, n_steps, kvecs=kvecs)
    mu = np.linalg.eigvals(prop.matrix)
    if np.max(np.abs(mu)) >= 1.0:
        raise ArithmeticError("one-period propagator has spectral radius >= 1")
    F0 = -complex(np.sum(np.log(1.0 - mu)))
    F0_free = -complex(np.sum(np.log(1.0 - np.exp(-nu * prop.lams))))
    F1 = F0 - F0_free
    if F1.real > 1e-8:
        raise ArithmeticError("Re F1 must be nonpositive")
    return F0, F1


def sigma_space_time_integral(sigma: AuxFieldSigma, sample) -> float:
    """[sigma] = integral over [0, nu] x Lambda of the field (exact)."""
    xi = sigma.time_average()
    labels, xh = xi.fourier()
    out = 0.0
    for i, q in enumerate(labels):
        if all(c == 0 for c in q):
            out = float(np.real(xh[..., i][sample] if xh.ndim > 1 else xh[i]))
    return sigma.nu * out


def sigma_rho_pairing(spec: TorusSpec, sigma: AuxFieldSigma, nu: float,
                      sample=0, rho: float | None = None) -> float:
    """<sigma, rho> = (1/nu) * [sigma] * rho for the constant free density."""
    if rho is None:
        rho = free_quantum_density(spec, nu)
    return rho * sigma_space_time_integral(sigma, sample) / nu


def F2(spec: TorusSpec, sigma: AuxFieldSigma, nu: float, n_steps: int,
       sample: int = 0, kvecs=None, rho: float | None = None) -> complex:
    """Renormalized functional F2 = F1(sigma) - i <sigma, rho>; Re F2 <= 0."""
    u = sigma_potential(spec, sigma, sample)
    _, F1 = F0_F1(spec, u, nu, n_steps, kvecs=kvecs)
    val = F1 - 1j * sigma_rho_pairing(spec, sigma, nu, sample, rho=rho)
    if val.real > 1e-8:
        raise ArithmeticError("Re F2 must be nonpositive")
    return val


def free_density_on_modes(spec: TorusSpec, nu: float, kvecs) -> float:
    """Free density restricted to an explicit mode list (diagonal kernel)."""
    _, lams = mode_data(spec, kvecs)
    return float(np.sum(1.0 / np.expm1(nu * lams))) / spec.L**spec.d


def estimate_Z_quantum(spec: TorusSpec, reg: RegularizationSpec, nu: float,
                       v: InteractionPotential, n_samples: int, n_steps: int,
                       seed: int, shift: DensityShift | None = None,
                       lam: float | None = None, kvecs=None,
                       return_samples: bool = False):
    """Relative partition function as the Gaussian average of e^{F2(sigma)}.

    When the propagator acts on a mode subset, the Wick-ordering density in
    the phase is the free density of that subset, which matches the Fock
    oracle built on the same modes.
    """
    sigma = sample_sigma(spec, reg, nu, v, seed, n_samples, lam=lam)
    kvecs_arr, _ = mode_data(spec, kvecs)
    rho = free_density_on_modes(spec, nu, kvecs_arr)
    vals = np.empty(n_samples, dtype=complex)
    for s in range(n_samples):
        val = F2(spec, sigma, nu, n_steps, sample=s, kvecs=kvecs_arr, rho=rho)
        if shift is not None:
            val = val - 1j * shift.rho_shift * sigma_space_time_integral(sigma, s)
        vals[s] = np.exp(val)
    est = mean_estimate(vals, seed)
    return (est, vals, sigma) if return_samples else est


def free_Gamma1_kernel(spec: TorusSpec, nu: float, kvecs, x, xt) -> complex:
    """Free one-body correlation kernel: matrix element of b/(1-b)."""
    kvecs, lams = mode_data(spec, kvecs)
    ux = spec_waves(spec, kvecs, np.asarray(x, float))
    uy = spec_waves(spec, kvecs, np.asarray(xt, float))
    return complex(np.sum(ux * np.conj(uy) / np.expm1(nu * lams)))


def free_Gamma_p0(spec: TorusSpec, nu: float, p: int, eval_points,
                  kvecs=None) -> CorrelationKernel:
    """Free p-body kernel: permanent of the one-body kernels (Wick theorem)."""
    kvecs, _ = mode_data(spec, kvecs)
    pts = _as_point_tuples(eval_points, spec.d)
    values = []
    for xs, xts in pts:
        M = np.array([[free_Gamma1_kernel(spec, nu, kvecs, xs[i], xts[j])
                       for j in range(p)] for i in range(p)])
        values.append(MCEstimate(value=permanent(M), std_error=0.0,
                                 n_samples=1, seed=0))
    return CorrelationKernel(p=p, eval_points=pts, values=values)


def estimate_Gamma_hat_p(spec: TorusSpec, reg: RegularizationSpec, nu: float,
                         v: InteractionPotential, p: int, eval_points,
                         n_samples: int, n_steps: int, seed: int,
                         lam: float | None = None, kvecs=None,
                         wick_ordered: bool = True) -> CorrelationKernel:
    """Reduced density matrix kernel by the auxiliary-field representation.

    Per sigma sample the Green matrix is formed once; the Wick-ordered
    kernel subtracts the free Green matrix inside the tensor power, the
    plain kernel omits the subtraction.  Shared-stream ratio estimator
    against the e^{F2} normalization.
    """
    pts = _as_point_tuples(eval_points, spec.d)
    kvecs_arr, lams = mode_data(spec, kvecs)
    sigma = sample_sigma(spec, reg, nu, v, seed, n_samples, lam=lam)
    rho = free_density_on_modes(spec, nu, kvecs_arr)
    G0 = np.diag(1.0 / np.expm1(nu * lams)).astype(complex)
    weights = np.empty(n_samples, dtype=complex)
    Gs = np.empty((n_samples, len(lams), len(lams)), dtype=complex)
    for s in range(n_samples):
        u = sigma_potential(spec, sigma, s)
        prop = propagate(spec, u, 0.0, nu, n_steps, kvecs=kvecs_arr)
        _, F1 = F0_F1(spec, u, nu, n_steps, prop=prop)
        val = F1 - 1j * sigma_rho_pairing(spec, sigma, nu, s, rho=rho)
        weights[s] = np.exp(val)
        gk = green_kernel(spec, u, nu, n_steps, prop=prop)
        Gs[s] = gk.matrix - G0 if wick_ordered else gk.matrix
    values = []
    for xs, xts in pts:
        ux = spec_waves(spec, kvecs_arr, xs)
        uy = spec_waves(spec, kvecs_arr, xts)
        D = np.einsum("im,smn,jn->sij", ux, Gs, np.conj(uy))
        num = np.zeros(n_samples, dtype=complex)
        for perm in itertools.permutations(range(p)):
            term = np.ones(n_samples, dtype=complex)
            for i in range(p):
                term = term * D[:, i, perm[i]]
            num += term
        values.append(ratio_estimate(weights * num, weights, seed))
    return CorrelationKernel(p=p, eval_points=pts, values=values,
                             wick_ordered=wick_ordered)


def hat_conversion_quantum(Gammas: list, spec: TorusSpec, nu: float,
                           kvecs=None, inverse: bool = False) -> CorrelationKernel:
    """Subset-expansion conversion between plain and Wick-ordered kernels.

    Shares the combinatorial engine with the classical module; the free
    one-body kernel here is the b/(1-b) matrix element.
    """
    kvecs_arr, _ = mode_data(spec, kvecs)
    p = len(Gammas)
    target = Gammas[p - 1]

    def kernel_eval(xs_sub, xts_sub):
        q = xs_sub.shape[0]
        return Gammas[q - 1].lookup(xs_sub, xts_sub).value

    def free_eval(x, xt):
        return free_Gamma1_kernel(spec, nu, kvecs_arr, x, xt)

    values = []
    for xs, xts in target.eval_points:
        val = wick_kernel_transform(p, kernel_eval, free_eval, xs, xts,
                                    to_wick_ordered=not inverse)
        err = sum(v.std_error for g in Gammas for v in g.values)
        values.append(MCEstimate(value=val, std_error=err,
                                 n_samples=target.values[0].n_samples,
                                 seed=target.values[0].seed))
    return CorrelationKernel(p=p, eval_points=target.eval_points,
                             values=values, wick_ordered=not inverse)


def density_correlation_quantum(spec: TorusSpec, nu: float, p: int, points,
                                hat_eval, kvecs=None) -> complex:
    """Assemble the Wick-ordered density correlation from kernels.

    hat_eval(xs, xts) supplies nu^{|J|} -scaled Wick-ordered kernels is the
    caller's responsibility; here we apply the subset/bijection sum with
    off-diagonal free kernels scaled by nu.
    """
    kvecs_arr, _ = mode_data(spec, kvecs)
    points = np.atleast_2d(np.asarray(points, float).reshape(-1, spec.d))

    def scaled_hat(xs, xts):
        return nu ** xs.shape[0] * hat_eval(xs, xts)

    def free_eval(x, xt):
        return nu * free_Gamma1_kernel(spec, nu, kvecs_arr, x, xt)

    return density_from_kernels(p, scaled_hat, free_eval, points)


# ---------------------------------------------------------------------------
# interaction functionals (diagnostics)


def point_point_interaction(v: InteractionPotential, reg: RegularizationSpec,
                            x, xt) -> float:
    v_eta = regularized_potential(v, reg)
    return float(v_eta(np.asarray(x, float) - np.asarray(xt, float)))


def point_path_interaction(v: InteractionPotential, reg: RegularizationSpec,
                           x, t_grid: np.ndarray, points: np.ndarray) -> float:
    """Time integral of v_eta(x - omega(s)) along a discretized path."""
    v_eta = regularized_potential(v, reg)
    vals = v_eta(np.asarray(x, float)[None, :] - points)
    return float(np.trapezoid(vals, t_grid))


def path_path_interaction(v: InteractionPotential, reg: RegularizationSpec,
                          t_grid: np.ndarray, points: np.ndarray,
                          t_grid2: np.ndarray, points2: np.ndarray,
                          nu: float | None = None) -> float:
    """Double time integral of the pair potential along two paths.

    With nu=None this is the instantaneous-in-time functional; with nu > 0
    the times are additionally coupled by the nu-periodic smoothed delta
    (and the value carries the factor nu), which converges to the former as
    nu decreases.
    """
    from boselab.fields import regularized_delta

    v_eta = regularized_potential(v, reg)
    diff = points[:, None, :] - points2[None, :, :]
    vals = v_eta(diff.reshape(-1, diff.shape[-1])).reshape(diff.shape[:2])
    if nu is not None:
        dt = (t_grid[:, None] - t_grid2[None, :])
        vals = vals * nu * regularized_delta(reg, nu, dt)
    inner = np.trapezoid(vals, t_grid2, axis=1)
    return float(np.trapezoid(inner, t_grid))
