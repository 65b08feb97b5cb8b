"""Dense exact reference computations at desk scale.

Everything here builds explicit n x n matrices and pays O(n^2) memory and
O(n^3) factorizations, so it is capped at v <= 32. Nothing in this module
touches the closed-form eigenvalue tables, the fast transforms, or the
sweep kernels; it exists to verify them. The EM variant run_em_dense runs
the standard update schedule with an exact E-step and dense traces, which
is the naive-complexity version of the same estimator.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .em import EMConfig, EMIterationRecord, EMTrace, NumericalError, _m_step, _max_param_delta
from .free_energy import GradientReport, PosteriorStats, sigma2_from_stats
from .lattice import Hyperparams, ImageBuffer, LatticeSpec, ObservationSet, edge_sq_sum

__all__ = [
    "MAX_DENSE_V",
    "DenseGaussian",
    "laplacian_dense",
    "build_prior",
    "build_posterior",
    "posterior_free_energy_dense",
    "exact_q_gradients",
    "finite_difference",
    "run_em_dense",
]

MAX_DENSE_V = 32

_LOG_2PI = math.log(2.0 * math.pi)


def _check_dense_scale(spec: LatticeSpec) -> None:
    if spec.v > MAX_DENSE_V:
        raise ValueError(
            f"dense oracle is capped at v <= {MAX_DENSE_V}, got v = {spec.v}"
        )


def laplacian_dense(spec: LatticeSpec) -> np.ndarray:
    """Explicit free-boundary grid Laplacian, D - A."""
    _check_dense_scale(spec)
    n = spec.n
    lap = np.zeros((n, n))
    for i, j in spec.edges():
        lap[i, i] += 1.0
        lap[j, j] += 1.0
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
    return lap


@dataclass(eq=False)
class DenseGaussian:
    """Gaussian factor exp(shift . x - x . precision x / 2), factorized
    eagerly. mean and logdet come from the Cholesky factor; covariance is
    formed on first request and cached."""

    precision: np.ndarray
    shift: np.ndarray
    _factor: tuple = field(init=False, repr=False)
    mean: np.ndarray = field(init=False)
    logdet: float = field(init=False)
    _cov: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.precision = np.asarray(self.precision, dtype=np.float64)
        self.shift = np.asarray(self.shift, dtype=np.float64).ravel()
        n = self.shift.shape[0]
        if self.precision.shape != (n, n):
            raise ValueError("precision/shift shape mismatch")
        self._factor = sla.cho_factor(self.precision, lower=True)
        self.mean = sla.cho_solve(self._factor, self.shift)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self._factor[0]))))

    @property
    def n(self) -> int:
        return self.shift.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._factor, rhs)

    def covariance(self) -> np.ndarray:
        if self._cov is None:
            self._cov = sla.cho_solve(self._factor, np.eye(self.n))
        return self._cov

    def free_energy(self) -> float:
        """Minus the log of the factor's normalizing integral."""
        return (
            -0.5 * float(np.dot(self.shift, self.mean))
            + 0.5 * self.logdet
            - 0.5 * self.n * _LOG_2PI
        )


def build_prior(spec: LatticeSpec, theta: Hyperparams) -> DenseGaussian:
    """Dense prior: precision lam I + alpha L, shift b 1."""
    _check_dense_scale(spec)
    n = spec.n
    precision = theta.lam * np.eye(n) + theta.alpha * laplacian_dense(spec)
    return DenseGaussian(precision, np.full(n, theta.b))


def build_posterior(spec: LatticeSpec, obs: ObservationSet, theta: Hyperparams) -> DenseGaussian:
    """Dense posterior: precision (lam + K/sigma2) I + alpha L, shift
    b 1 + (K/sigma2) yhat."""
    _check_dense_scale(spec)
    if obs.spec != spec:
        raise ValueError("observations do not match the lattice")
    n = spec.n
    kappa = obs.k_count / theta.sigma2
    precision = (theta.lam + kappa) * np.eye(n) + theta.alpha * laplacian_dense(spec)
    shift = theta.b + kappa * obs.avg.data
    return DenseGaussian(precision, shift)


def posterior_free_energy_dense(
    spec: LatticeSpec, obs: ObservationSet, theta: Hyperparams
) -> float:
    """Posterior free energy including the data term, all dense."""
    post = build_posterior(spec, obs, theta)
    return post.free_energy() + 0.5 * obs.sq_norm_sum / theta.sigma2


def _edge_second_moments(spec: LatticeSpec, mean: np.ndarray, cov: np.ndarray) -> float:
    """sum over edges of E[(x_i - x_j)^2] under a dense Gaussian."""
    ei, ej = spec.edge_arrays()
    mean_diff = mean[ei] - mean[ej]
    var_diff = cov[ei, ei] + cov[ej, ej] - 2.0 * cov[ei, ej]
    return float(np.sum(mean_diff * mean_diff + var_diff))


def exact_q_gradients(
    spec: LatticeSpec,
    obs: ObservationSet,
    theta_new: Hyperparams,
    theta_old: Hyperparams,
) -> GradientReport:
    """EM lower-bound gradients from dense moments only.

    Posterior expectations are taken at theta_old with the exact dense
    mean and covariance; prior terms at theta_new likewise. No spectral
    identity or mean-field estimate is involved.
    """
    _check_dense_scale(spec)
    post = build_posterior(spec, obs, theta_old)
    pri = build_prior(spec, theta_new)
    m = post.mean
    cov = post.covariance()
    cov_pri = pri.covariance()
    tr_cov = float(np.trace(cov))
    n = spec.n
    k = obs.k_count

    d_b = float(m.sum() - pri.mean.sum())
    second_post = float(np.dot(m, m)) + tr_cov
    second_pri = float(np.dot(pri.mean, pri.mean)) + float(np.trace(cov_pri))
    d_lambda = -0.5 * second_post + 0.5 * second_pri
    resid = sum(
        float(np.dot(m - im.data, m - im.data)) for im in obs.images
    ) + k * tr_cov
    sigma4 = theta_new.sigma2 * theta_new.sigma2
    d_sigma2 = 0.5 * resid / sigma4 - 0.5 * n * k / theta_new.sigma2
    d_alpha = (
        -0.5 * _edge_second_moments(spec, m, cov)
        + 0.5 * _edge_second_moments(spec, pri.mean, cov_pri)
    )
    return GradientReport(d_b=d_b, d_lambda=d_lambda, d_sigma2=d_sigma2, d_alpha=d_alpha)


def finite_difference(fn: Callable[[float], float], x0: float, h: float | None = None) -> float:
    """Central finite difference of a scalar function at x0."""
    if h is None:
        h = 1e-6 * max(1.0, abs(x0))
    return (fn(x0 + h) - fn(x0 - h)) / (2.0 * h)


def run_em_dense(
    spec: LatticeSpec,
    obs: ObservationSet,
    config: EMConfig = EMConfig(),
) -> EMTrace:
    """The standard EM schedule with exact dense E-step and dense traces.

    Per iteration this factorizes the posterior at Theta_old and reads
    the needed statistics straight off the mean, the covariance, and the
    dense prior resolvents, so it scales as O(n^3) per iteration; use it
    only at oracle scale. m_final is the exact posterior mean at the
    final parameters.
    """
    _check_dense_scale(spec)
    if obs.spec != spec:
        raise ValueError("observations do not match the lattice")
    if spec.v < 2:
        raise ValueError("EM needs at least a 2 x 2 grid")
    n = spec.n
    lap = laplacian_dense(spec)
    eye = np.eye(n)

    def dense_resolvent(shift: float, alpha: float) -> tuple[float, float]:
        inv = sla.cho_solve(sla.cho_factor(shift * eye + alpha * lap, lower=True), eye)
        return float(np.trace(inv)), float(np.einsum("ij,ji->", lap, inv))

    theta = config.theta_init
    records: list[EMIterationRecord] = []
    phases = {"meanfield": 0.0, "gradients": 0.0, "transform": 0.0}
    converged = False
    for _ in range(config.max_em_iters):
        tic = time.perf_counter()
        post = build_posterior(spec, obs, theta)
        m = post.mean
        cov = post.covariance()
        phases["meanfield"] += time.perf_counter() - tic

        tic = time.perf_counter()
        stats = PosteriorStats(
            n=n,
            k_count=obs.k_count,
            yhat_ave=obs.avg_intensity,
            sq_norm_sum=obs.sq_norm_sum,
            theta_old=theta,
            s_inv=float(np.trace(cov)),
            s_phi=float(np.einsum("ij,ji->", lap, cov)),
            m_sq=float(np.dot(m, m)),
            m_dot_yhat=float(np.dot(m, obs.avg.data)),
            edge_sq=edge_sq_sum(spec, m),
        )
        sigma2_new = max(sigma2_from_stats(stats), config.sigma2_floor)
        try:
            b, lam, alpha = _m_step(stats, config, dense_resolvent)
        except ArithmeticError as exc:
            raise NumericalError(str(exc)) from exc
        theta_new = Hyperparams(sigma2=sigma2_new, b=b, lam=lam, alpha=alpha)
        max_delta = _max_param_delta(theta_new, theta)
        phases["gradients"] += time.perf_counter() - tic

        records.append(
            EMIterationRecord(theta=theta_new, max_delta=max_delta, mf_delta=0.0, mf_sweeps=0)
        )
        theta = theta_new
        if max_delta < config.epsilon:
            converged = True
            break

    tic = time.perf_counter()
    m_final = build_posterior(spec, obs, theta).mean
    phases["meanfield"] += time.perf_counter() - tic
    return EMTrace(
        records=tuple(records),
        theta_final=theta,
        m_final=ImageBuffer(spec, m_final),
        converged=converged,
        phase_seconds=phases,
    )
