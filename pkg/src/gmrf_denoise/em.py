"""Linear-time EM estimation of the GMRF hyperparameters.

Each EM iteration costs O(n): a fixed number of Gauss-Seidel sweeps tracks
the posterior mean (exact mean-field updates, warm-restarted across
iterations), the noise variance gets its closed-form update, and b, lam,
alpha take T_M sequential gradient-ascent steps on the EM lower bound,
scaled by eta / n and projected onto their floors. Convergence is declared
when no parameter moved by more than epsilon.

The hot path is compiled: the sweep kernel fuses the quadratic statistics
the M-step needs into the same pass (meanfield module), and the resolvent
sums over the eigenvalue table run in a blocked numba reduction here. Both
accumulate per-row partials, so results are reproducible and agree with
numpy's pairwise sums to full precision.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numba import njit

from .free_energy import (
    ALPHA_FLOOR,
    LAMBDA_FLOOR,
    SIGMA2_FLOOR,
    PosteriorStats,
    alpha_init_from_stats,
    sigma2_from_stats,
)
from .instrument import WorkCounter, resolvent_touches, sweep_touches
from .lattice import Hyperparams, ImageBuffer, LatticeSpec, ObservationSet
from .meanfield import _gs_sweep, solve_map
from .spectral import Boundary, eigenvalues

__all__ = [
    "EMConfig",
    "EMIterationRecord",
    "EMTrace",
    "NumericalError",
    "run_em",
    "restore",
]

_DEFAULT_THETA = Hyperparams(sigma2=2000.0, b=0.0, lam=1e-7, alpha=1e-4)


class NumericalError(RuntimeError):
    """EM aborted on a non-finite quantity; .trace holds progress so far."""

    def __init__(self, message: str, trace: EMTrace | None = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class EMConfig:
    """Protocol knobs. Defaults are the standard protocol used throughout:
    eta_b = eta_alpha = 1e-9, eta_lambda = 1e-13, one sweep and one ascent
    step per iteration, epsilon = 1e-5, at most 100 iterations, alpha
    re-initialized from the smoothness statistics every iteration."""

    theta_init: Hyperparams = _DEFAULT_THETA
    eta_b: float = 1e-9
    eta_lambda: float = 1e-13
    eta_alpha: float = 1e-9
    t_m: int = 1
    t_mf: int = 1
    mf_tol: float | None = None
    mf_sweep_cap: int = 10_000
    epsilon: float = 1e-5
    max_em_iters: int = 100
    use_alpha_init: bool = True
    sigma2_floor: float = SIGMA2_FLOOR
    lambda_floor: float = LAMBDA_FLOOR
    alpha_floor: float = ALPHA_FLOOR

    def __post_init__(self) -> None:
        if self.eta_b < 0 or self.eta_lambda < 0 or self.eta_alpha < 0:
            raise ValueError("step sizes must be >= 0")
        if self.t_m < 1:
            raise ValueError(f"t_m must be >= 1, got {self.t_m}")
        if self.t_mf < 1:
            raise ValueError(f"t_mf must be >= 1, got {self.t_mf}")
        if self.mf_tol is not None and self.mf_tol <= 0:
            raise ValueError(f"mf_tol must be > 0, got {self.mf_tol}")
        if self.mf_sweep_cap < 1:
            raise ValueError("mf_sweep_cap must be >= 1")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_em_iters < 0:
            raise ValueError("max_em_iters must be >= 0")
        for name in ("sigma2_floor", "lambda_floor", "alpha_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta_init": self.theta_init.to_dict(),
            "eta_b": self.eta_b,
            "eta_lambda": self.eta_lambda,
            "eta_alpha": self.eta_alpha,
            "t_m": self.t_m,
            "t_mf": self.t_mf,
            "mf_tol": self.mf_tol,
            "mf_sweep_cap": self.mf_sweep_cap,
            "epsilon": self.epsilon,
            "max_em_iters": self.max_em_iters,
            "use_alpha_init": self.use_alpha_init,
            "sigma2_floor": self.sigma2_floor,
            "lambda_floor": self.lambda_floor,
            "alpha_floor": self.alpha_floor,
        }

    @classmethod
    def from_dict(cls, overrides: dict[str, Any]) -> EMConfig:
        """Defaults plus overrides; unknown keys are an error."""
        cfg = cls()
        known = cfg.to_dict()
        kwargs: dict[str, Any] = {}
        for key, val in overrides.items():
            if key not in known:
                raise ValueError(f"unknown EM config key: {key!r}")
            if key == "theta_init":
                kwargs[key] = Hyperparams.from_dict(val)
            else:
                kwargs[key] = val
        return replace(cfg, **kwargs)


@dataclass(frozen=True)
class EMIterationRecord:
    """State after one EM iteration."""

    theta: Hyperparams
    max_delta: float
    mf_delta: float
    mf_sweeps: int


@dataclass(frozen=True)
class EMTrace:
    """Full result of an EM run."""

    records: tuple[EMIterationRecord, ...]
    theta_final: Hyperparams
    m_final: ImageBuffer
    converged: bool
    phase_seconds: dict[str, float] = field(default_factory=dict)

    @property
    def iterations_used(self) -> int:
        return len(self.records)


@njit(cache=True, fastmath=True)
def _resolvent_kernel(phi, shift, alpha, rows, v):
    """Row-blocked sums of 1/(shift + alpha phi) and phi/(shift + alpha phi)."""
    for r in range(v):
        base = r * v
        acc_inv = 0.0
        acc_phi = 0.0
        for c in range(v):
            p = phi[base + c]
            inv = 1.0 / (shift + alpha * p)
            acc_inv += inv
            acc_phi += p * inv
        rows[0, r] = acc_inv
        rows[1, r] = acc_phi


def _fast_resolvent(phi: np.ndarray, v: int, rows: np.ndarray) -> Callable[[float, float], tuple[float, float]]:
    def resolvent(shift: float, alpha: float) -> tuple[float, float]:
        _resolvent_kernel(phi, shift, alpha, rows, v)
        sums = rows.sum(axis=1)
        return float(sums[0]), float(sums[1])

    return resolvent


def _m_step(
    stats: PosteriorStats,
    config: EMConfig,
    resolvent: Callable[[float, float], tuple[float, float]],
) -> tuple[float, float, float]:
    """T_M sequential ascent steps on (b, lam, alpha).

    Each parameter is updated in turn and later gradients see the earlier
    updates, matching a literal sequential reading of the update schedule.
    Raises ArithmeticError on any non-finite gradient.
    """
    n = stats.n
    old = stats.theta_old
    lam_old = max(old.lam, config.lambda_floor)
    kappa_old = stats.kappa_old
    b_pull = n * (old.b + kappa_old * stats.yhat_ave) / (lam_old + kappa_old)
    b = old.b
    lam = old.lam
    if config.use_alpha_init:
        alpha = alpha_init_from_stats(stats, config.alpha_floor)
    else:
        alpha = old.alpha
    for _ in range(config.t_m):
        lam_eff = max(lam, config.lambda_floor)
        d_b = b_pull - n * b / lam_eff
        b = b + config.eta_b / n * d_b
        s_inv_new, _ = resolvent(lam_eff, alpha)
        d_lambda = (
            -0.5 * (stats.m_sq + stats.s_inv)
            + 0.5 * n * b * b / (lam_eff * lam_eff)
            + 0.5 * s_inv_new
        )
        lam = max(lam + config.eta_lambda / n * d_lambda, config.lambda_floor)
        _, s_phi_new = resolvent(lam, alpha)
        d_alpha = -0.5 * (stats.edge_sq + stats.s_phi) + 0.5 * s_phi_new
        alpha = max(alpha + config.eta_alpha / n * d_alpha, config.alpha_floor)
        if not all(map(math.isfinite, (d_b, d_lambda, d_alpha, b, lam, alpha))):
            raise ArithmeticError(
                f"non-finite M-step update: d_b={d_b}, d_lambda={d_lambda}, "
                f"d_alpha={d_alpha}"
            )
    return b, lam, alpha


def _max_param_delta(new: Hyperparams, old: Hyperparams) -> float:
    return max(
        abs(new.sigma2 - old.sigma2),
        abs(new.b - old.b),
        abs(new.lam - old.lam),
        abs(new.alpha - old.alpha),
    )


def run_em(
    spec: LatticeSpec,
    obs: ObservationSet,
    config: EMConfig = EMConfig(),
    counter: WorkCounter | None = None,
) -> EMTrace:
    """Estimate hyperparameters by linear-time EM.

    The mean estimate starts at the average image and is warm-restarted
    across iterations; with config.mf_tol set, each E-step iterates sweeps
    to that fixed-point tolerance instead of running t_mf of them. Raises
    NumericalError (with the partial trace attached) if any update turns
    non-finite.
    """
    if obs.spec != spec:
        raise ValueError("observations do not match the lattice")
    if spec.v < 2:
        raise ValueError("EM needs at least a 2 x 2 grid")
    v = spec.v
    n = spec.n
    phi = eigenvalues(spec, Boundary.FREE).values
    m = obs.avg.data.copy()
    yhat = obs.avg.data
    stat_rows = np.empty((3, v))
    res_rows = np.empty((2, v))
    resolvent = _fast_resolvent(phi, v, res_rows)
    theta = config.theta_init
    records: list[EMIterationRecord] = []
    phases = {"meanfield": 0.0, "gradients": 0.0, "transform": 0.0}
    converged = False

    def fail(message: str) -> NumericalError:
        trace = EMTrace(
            records=tuple(records),
            theta_final=theta,
            m_final=ImageBuffer(spec, m),
            converged=False,
            phase_seconds=dict(phases),
        )
        return NumericalError(message, trace)

    for _ in range(config.max_em_iters):
        lam_eff = max(theta.lam, config.lambda_floor)
        kappa = obs.k_count / theta.sigma2

        tic = time.perf_counter()
        sweeps = 0
        mf_delta = math.inf
        while True:
            mf_delta = float(
                _gs_sweep(m, yhat, v, theta.b, lam_eff, theta.alpha, kappa, stat_rows)
            )
            sweeps += 1
            if config.mf_tol is None:
                if sweeps >= config.t_mf:
                    break
            elif mf_delta < config.mf_tol or sweeps >= config.mf_sweep_cap:
                break
        if counter is not None:
            counter.add(sweeps * sweep_touches(spec))
        phases["meanfield"] += time.perf_counter() - tic

        tic = time.perf_counter()
        m_sq, m_dot_yhat, edge_sq = (float(x) for x in stat_rows.sum(axis=1))
        s_inv, s_phi = resolvent(lam_eff + kappa, theta.alpha)
        if counter is not None:
            counter.add(resolvent_touches(spec) * (1 + 2 * config.t_m))
        stats = PosteriorStats(
            n=n,
            k_count=obs.k_count,
            yhat_ave=obs.avg_intensity,
            sq_norm_sum=obs.sq_norm_sum,
            theta_old=theta,
            s_inv=s_inv,
            s_phi=s_phi,
            m_sq=m_sq,
            m_dot_yhat=m_dot_yhat,
            edge_sq=edge_sq,
        )
        sigma2_new = max(sigma2_from_stats(stats), config.sigma2_floor)
        if not math.isfinite(sigma2_new) or not math.isfinite(mf_delta):
            phases["gradients"] += time.perf_counter() - tic
            raise fail(f"non-finite state (sigma2={sigma2_new}, mf_delta={mf_delta})")
        try:
            b, lam, alpha = _m_step(stats, config, resolvent)
        except ArithmeticError as exc:
            phases["gradients"] += time.perf_counter() - tic
            raise fail(str(exc)) from exc
        theta_new = Hyperparams(sigma2=sigma2_new, b=b, lam=lam, alpha=alpha)
        max_delta = _max_param_delta(theta_new, theta)
        phases["gradients"] += time.perf_counter() - tic

        records.append(
            EMIterationRecord(
                theta=theta_new, max_delta=max_delta, mf_delta=mf_delta, mf_sweeps=sweeps
            )
        )
        theta = theta_new
        if max_delta < config.epsilon:
            converged = True
            break

    return EMTrace(
        records=tuple(records),
        theta_final=theta,
        m_final=ImageBuffer(spec, m),
        converged=converged,
        phase_seconds=phases,
    )


def restore(
    spec: LatticeSpec,
    obs: ObservationSet,
    theta: Hyperparams,
    tol: float = 1e-8,
    init: np.ndarray | ImageBuffer | None = None,
    max_sweeps: int = 10_000,
    counter: WorkCounter | None = None,
) -> ImageBuffer:
    """Posterior mean at theta, iterated to a fixed-point tolerance."""
    state = solve_map(
        spec, obs, theta, init=init, tol=tol, max_sweeps=max_sweeps, counter=counter
    )
    return state.image()
