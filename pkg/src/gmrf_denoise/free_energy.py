"""Free energies, gradients, and M-step updates of the GMRF model.

The model on a v x v free-boundary lattice, x and the K observations
y^(1..K) being raster vectors of length n = v^2:

    prior energy     E(x) = -b 1.x + (lam/2) ||x||^2
                            + (alpha/2) sum_edges (x_i - x_j)^2
    observation      y^(k) = x + Gaussian noise of variance sigma2

Both the prior and the posterior are Gaussian with precision matrices
lam I + alpha L and (lam + K/sigma2) I + alpha L, where L is the grid
Laplacian, so every determinant and trace reduces to sums over the
closed-form eigenvalue table Phi (spectral module). The free energy of a
Gaussian factor exp(h.x - x.P x / 2) is taken as

    F = -(1/2) h.P^-1 h + (1/2) ln det P - (n/2) ln 2 pi,

i.e. minus the log normalization; the posterior variant adds the data
term sum_k ||y^(k)||^2 / (2 sigma2). The EM lower-bound gradients below
combine posterior expectations at the previous parameters Theta_old with
prior terms at the current Theta; for the noise variance the closed-form
update sigma2_update zeroes the sigma2 gradient exactly.

lam appears alone in denominators and logs, so wherever it is consumed it
is floored at LAMBDA_FLOOR; alpha at ALPHA_FLOOR when updated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Hyperparams, ImageBuffer, LatticeSpec, ObservationSet, edge_sq_sum
from .spectral import SpectrumTable, forward, make_plan

__all__ = [
    "LAMBDA_FLOOR",
    "ALPHA_FLOOR",
    "SIGMA2_FLOOR",
    "GradientReport",
    "PosteriorStats",
    "prior_free_energy",
    "prior_gradients",
    "posterior_free_energy",
    "posterior_gradients",
    "posterior_stats",
    "q_gradients",
    "q_gradients_from_stats",
    "sigma2_update",
    "sigma2_from_stats",
    "alpha_init",
    "alpha_init_from_stats",
]

LAMBDA_FLOOR = 1e-12
ALPHA_FLOOR = 1e-12
SIGMA2_FLOOR = 1e-6

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GradientReport:
    """Free-energy or lower-bound gradients; components not defined in a
    given context are None. value carries the free energy when cheap."""

    d_b: float | None = None
    d_lambda: float | None = None
    d_sigma2: float | None = None
    d_alpha: float | None = None
    value: float | None = None

    def finite(self) -> bool:
        return all(
            g is None or math.isfinite(g)
            for g in (self.d_b, self.d_lambda, self.d_sigma2, self.d_alpha)
        )


def _resolvent_sums(phi: np.ndarray, shift: float, alpha: float) -> tuple[float, float]:
    """(sum_i 1/(shift + alpha phi_i), sum_i phi_i/(shift + alpha phi_i))."""
    inv = 1.0 / (shift + alpha * phi)
    return float(inv.sum()), float(np.dot(phi, inv))


def _spectral_avg(spec: LatticeSpec, spectrum: SpectrumTable, obs: ObservationSet) -> np.ndarray:
    """Transform coefficients of the average image, cached on the set."""
    key = ("avg-coeffs", spectrum.boundary)
    z = obs._cache.get(key)
    if z is None:
        z = forward(make_plan(spec, spectrum.boundary), obs.avg)
        z.flags.writeable = False
        obs._cache[key] = z
    return z


def prior_free_energy(spec: LatticeSpec, spectrum: SpectrumTable, theta: Hyperparams) -> float:
    """Minus the log normalization of the prior."""
    lam = max(theta.lam, LAMBDA_FLOOR)
    n = spec.n
    logdet = float(np.sum(np.log(lam + theta.alpha * spectrum.values)))
    return -0.5 * n * theta.b * theta.b / lam + 0.5 * logdet - 0.5 * n * _LOG_2PI


def prior_gradients(spec: LatticeSpec, spectrum: SpectrumTable, theta: Hyperparams) -> GradientReport:
    """Partials of the prior free energy in b, lam, alpha."""
    lam = max(theta.lam, LAMBDA_FLOOR)
    n = spec.n
    s_inv, s_phi = _resolvent_sums(spectrum.values, lam, theta.alpha)
    return GradientReport(
        d_b=-n * theta.b / lam,
        d_lambda=0.5 * n * theta.b * theta.b / (lam * lam) + 0.5 * s_inv,
        d_alpha=0.5 * s_phi,
        value=prior_free_energy(spec, spectrum, theta),
    )


def posterior_free_energy(
    spec: LatticeSpec,
    spectrum: SpectrumTable,
    obs: ObservationSet,
    theta: Hyperparams,
) -> float:
    """Minus the log normalization of the posterior factor, including the
    data term sum_k ||y^(k)||^2 / (2 sigma2)."""
    if obs.spec != spec:
        raise ValueError("observations do not match the lattice")
    lam = max(theta.lam, LAMBDA_FLOOR)
    n = spec.n
    kappa = obs.k_count / theta.sigma2
    z = _spectral_avg(spec, spectrum, obs)
    den = (lam + kappa) + theta.alpha * spectrum.values
    num = kappa * z
    num[0] += math.sqrt(n) * theta.b
    quad = float(np.sum(num * num / den))
    logdet = float(np.sum(np.log(den)))
    return (
        0.5 * obs.sq_norm_sum / theta.sigma2
        - 0.5 * quad
        + 0.5 * logdet
        - 0.5 * n * _LOG_2PI
    )


def posterior_gradients(
    spec: LatticeSpec,
    spectrum: SpectrumTable,
    obs: ObservationSet,
    theta: Hyperparams,
    m: np.ndarray | ImageBuffer,
) -> GradientReport:
    """Partials of the posterior free energy at theta, phrased in the
    posterior mean m (exact when m is the true mean at theta)."""
    if obs.spec != spec:
        raise ValueError("observations do not match the lattice")
    data = m.data if isinstance(m, ImageBuffer) else np.asarray(m, dtype=np.float64)
    lam = max(theta.lam, LAMBDA_FLOOR)
    n = spec.n
    k = obs.k_count
    kappa = k / theta.sigma2
    s_inv, s_phi = _resolvent_sums(spectrum.values, lam + kappa, theta.alpha)
    m_sq = float(np.dot(data, data))
    m_dot_yhat = float(np.dot(data, obs.avg.data))
    edge = edge_sq_sum(spec, data)
    sigma4 = theta.sigma2 * theta.sigma2
    return GradientReport(
        d_b=-n * (theta.b + kappa * obs.avg_intensity) / (lam + kappa),
        d_lambda=0.5 * m_sq + 0.5 * s_inv,
        d_sigma2=(
            -0.5 * obs.sq_norm_sum / sigma4
            + k * m_dot_yhat / sigma4
            - 0.5 * k * m_sq / sigma4
            - 0.5 * k * s_inv / sigma4
        ),
        d_alpha=0.5 * edge + 0.5 * s_phi,
    )


@dataclass(frozen=True)
class PosteriorStats:
    """Posterior sufficient statistics at Theta_old for one EM iteration.

    s_inv and s_phi are resolvent sums over the eigenvalue table with
    shift lam_old + kappa_old; m_sq, m_dot_yhat, edge_sq are quadratic
    statistics of the posterior-mean estimate m_old. Spectral EM fills the
    same fields from transform coefficients (Parseval makes them equal).
    """

    n: int
    k_count: int
    yhat_ave: float
    sq_norm_sum: float
    theta_old: Hyperparams
    s_inv: float
    s_phi: float
    m_sq: float
    m_dot_yhat: float
    edge_sq: float

    @property
    def kappa_old(self) -> float:
        return self.k_count / self.theta_old.sigma2

    @property
    def resid_sq(self) -> float:
        """sum_k ||m_old - y^(k)||^2, clamped at zero against rounding."""
        k = self.k_count
        return max(k * self.m_sq - 2.0 * k * self.m_dot_yhat + self.sq_norm_sum, 0.0)


def posterior_stats(
    spec: LatticeSpec,
    spectrum: SpectrumTable,
    obs: ObservationSet,
    theta_old: Hyperparams,
    m_old: np.ndarray | ImageBuffer,
) -> PosteriorStats:
    """Collect the statistics the M-step consumes, from a mean estimate."""
    if obs.spec != spec:
        raise ValueError("observations do not match the lattice")
    data = m_old.data if isinstance(m_old, ImageBuffer) else np.asarray(m_old, dtype=np.float64)
    lam_old = max(theta_old.lam, LAMBDA_FLOOR)
    kappa_old = obs.k_count / theta_old.sigma2
    s_inv, s_phi = _resolvent_sums(spectrum.values, lam_old + kappa_old, theta_old.alpha)
    return PosteriorStats(
        n=spec.n,
        k_count=obs.k_count,
        yhat_ave=obs.avg_intensity,
        sq_norm_sum=obs.sq_norm_sum,
        theta_old=theta_old,
        s_inv=s_inv,
        s_phi=s_phi,
        m_sq=float(np.dot(data, data)),
        m_dot_yhat=float(np.dot(data, obs.avg.data)),
        edge_sq=edge_sq_sum(spec, data),
    )


def q_gradients_from_stats(
    stats: PosteriorStats,
    spectrum: SpectrumTable,
    theta_new: Hyperparams,
) -> GradientReport:
    """EM lower-bound gradients at theta_new given old-side statistics."""
    n = stats.n
    k = stats.k_count
    old = stats.theta_old
    lam_old = max(old.lam, LAMBDA_FLOOR)
    lam_new = max(theta_new.lam, LAMBDA_FLOOR)
    kappa_old = stats.kappa_old
    s_inv_new, s_phi_new = _resolvent_sums(spectrum.values, lam_new, theta_new.alpha)
    sigma4 = theta_new.sigma2 * theta_new.sigma2
    d_b = (
        n * (old.b + kappa_old * stats.yhat_ave) / (lam_old + kappa_old)
        - n * theta_new.b / lam_new
    )
    d_lambda = (
        -0.5 * (stats.m_sq + stats.s_inv)
        + 0.5 * n * theta_new.b * theta_new.b / (lam_new * lam_new)
        + 0.5 * s_inv_new
    )
    d_sigma2 = (
        0.5 * (stats.resid_sq + k * stats.s_inv) / sigma4
        - 0.5 * n * k / theta_new.sigma2
    )
    d_alpha = -0.5 * (stats.edge_sq + stats.s_phi) + 0.5 * s_phi_new
    return GradientReport(d_b=d_b, d_lambda=d_lambda, d_sigma2=d_sigma2, d_alpha=d_alpha)


def q_gradients(
    spec: LatticeSpec,
    spectrum: SpectrumTable,
    obs: ObservationSet,
    theta_new: Hyperparams,
    theta_old: Hyperparams,
    m_old: np.ndarray | ImageBuffer,
) -> GradientReport:
    """EM lower-bound gradients at theta_new, expectations at theta_old.

    m_old must approximate the posterior mean at theta_old; the gradients
    are exact in the limit of an exact mean.
    """
    stats = posterior_stats(spec, spectrum, obs, theta_old, m_old)
    return q_gradients_from_stats(stats, spectrum, theta_new)


def sigma2_from_stats(stats: PosteriorStats) -> float:
    """Closed-form noise-variance update; zeroes the sigma2 gradient."""
    n = stats.n
    return stats.resid_sq / (n * stats.k_count) + stats.s_inv / n


def sigma2_update(
    spec: LatticeSpec,
    spectrum: SpectrumTable,
    obs: ObservationSet,
    theta_old: Hyperparams,
    m_old: np.ndarray | ImageBuffer,
) -> float:
    return sigma2_from_stats(posterior_stats(spec, spectrum, obs, theta_old, m_old))


def alpha_init_from_stats(stats: PosteriorStats, floor: float = ALPHA_FLOOR) -> float:
    """Smoothness warm start: balances the posterior edge statistics
    against the dominant part of the prior edge expectation."""
    if stats.n < 2:
        raise ValueError("alpha initialization needs at least a 2 x 2 grid")
    den = stats.edge_sq + stats.s_phi
    if den <= 0.0:
        return floor
    return max((stats.n - 1) / den, floor)


def alpha_init(
    spec: LatticeSpec,
    spectrum: SpectrumTable,
    obs: ObservationSet,
    theta_old: Hyperparams,
    m_old: np.ndarray | ImageBuffer,
    floor: float = ALPHA_FLOOR,
) -> float:
    return alpha_init_from_stats(
        posterior_stats(spec, spectrum, obs, theta_old, m_old), floor=floor
    )
