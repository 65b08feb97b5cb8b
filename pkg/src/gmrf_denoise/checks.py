"""Self-check suites: fast paths cross-validated against dense references.

Each suite returns (name, passed, detail). These run the same kinds of
comparisons as the test suite, packaged for the command line so an
installation can be verified in the field: closed-form spectra against
dense eigendecompositions, transform identities, mean-field fixed points
against dense solves, and analytic gradients against finite differences
and dense moments.
"""

from __future__ import annotations

import numpy as np

from .free_energy import (
    posterior_free_energy,
    posterior_gradients,
    prior_free_energy,
    prior_gradients,
    q_gradients,
    q_gradients_from_stats,
    posterior_stats,
    sigma2_update,
)
from .lattice import Hyperparams, ImageBuffer, LatticeSpec, ObservationSet
from .meanfield import fixed_point_residual, solve_map
from .noise import NoiseSpec, degrade
from .oracle import (
    MAX_DENSE_V,
    build_posterior,
    build_prior,
    exact_q_gradients,
    finite_difference,
    laplacian_dense,
    posterior_free_energy_dense,
)
from .spectral import Boundary, dct_matrix, eigenvalues, forward, inverse, make_plan

__all__ = ["run_checks"]


def _random_theta(rng: np.random.Generator) -> Hyperparams:
    return Hyperparams(
        sigma2=float(rng.uniform(0.5, 3.0)),
        b=float(rng.uniform(-0.5, 0.5)),
        lam=float(rng.uniform(0.05, 0.5)),
        alpha=float(rng.uniform(0.02, 0.3)),
    )


def _random_problem(v: int, rng: np.random.Generator) -> tuple[LatticeSpec, ObservationSet]:
    spec = LatticeSpec(v)
    k = int(rng.integers(1, 4))
    truth = ImageBuffer(spec, rng.normal(size=spec.n))
    obs = degrade(truth, NoiseSpec(sigma=1.0, k_count=k, seed=int(rng.integers(1 << 31))))
    return spec, obs


def _check_lattice(v: int, trials: int, rng) -> tuple[bool, str]:
    spec = LatticeSpec(v)
    for i in range(spec.n):
        for j in spec.neighbors(i):
            if i not in spec.neighbors(j):
                return False, f"asymmetric adjacency at ({i}, {j})"
    n_edges = sum(1 for _ in spec.edges())
    if n_edges != spec.edge_count:
        return False, f"edge count {n_edges} != {spec.edge_count}"
    if int(spec.degrees().sum()) != 2 * spec.edge_count:
        return False, "degree sum != twice the edge count"
    return True, f"{spec.n} pixels, {n_edges} edges"


def _check_spectral(v: int, trials: int, rng) -> tuple[bool, str]:
    spec = LatticeSpec(v)
    details = []
    for boundary in (Boundary.FREE, Boundary.TORUS):
        table = np.sort(eigenvalues(spec, boundary).values)
        if boundary is Boundary.FREE:
            dense = np.linalg.eigvalsh(laplacian_dense(spec))
            if not np.allclose(table, dense, atol=1e-9):
                return False, f"{boundary.value} eigenvalues disagree with dense"
        plan = make_plan(spec, boundary)
        for _ in range(trials):
            x = ImageBuffer(spec, rng.normal(size=spec.n))
            z = forward(plan, x)
            back = inverse(plan, z)
            if not np.allclose(back.data, x.data, atol=1e-10):
                return False, f"{boundary.value} transform does not invert"
            if abs(np.dot(z, z) - np.dot(x.data, x.data)) > 1e-8 * spec.n:
                return False, f"{boundary.value} transform is not orthogonal"
    if v <= 8:
        k1 = dct_matrix(v)
        u = np.kron(k1, k1)
        x = rng.normal(size=spec.n)
        z_fast = forward(make_plan(spec, Boundary.FREE), ImageBuffer(spec, x))
        if not np.allclose(z_fast, u.T @ x, atol=1e-10):
            return False, "fast free-boundary transform != dense U^T x"
        details.append("dense U^T cross-check")
    if v <= 4:
        vals = ", ".join(f"{t:.4f}" for t in np.sort(eigenvalues(spec).values))
        details.append(f"free eigenvalues [{vals}]")
    return True, "; ".join(details) if details else "transform identities hold"


def _check_prior_identity(v: int, trials: int, rng) -> tuple[bool, str]:
    spec = LatticeSpec(v)
    for _ in range(trials):
        theta = _random_theta(rng)
        pri = build_prior(spec, theta)
        lhs = float(np.dot(np.full(spec.n, theta.b), pri.mean))
        rhs = spec.n * theta.b * theta.b / theta.lam
        if abs(lhs - rhs) > 1e-8 * max(1.0, abs(rhs)):
            return False, f"b 1 . mean = {lhs} vs n b^2 / lam = {rhs}"
    return True, "constant-mode identity holds"


def _check_meanfield(v: int, trials: int, rng) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(trials):
        spec, obs = _random_problem(v, rng)
        theta = _random_theta(rng)
        state = solve_map(spec, obs, theta, tol=1e-12)
        exact = build_posterior(spec, obs, theta).mean
        worst = max(worst, float(np.max(np.abs(state.m - exact))))
        if worst > 1e-8:
            return False, f"mean-field mean off dense by {worst:.2e}"
        if fixed_point_residual(spec, obs, theta, state.m) > 1e-10:
            return False, "fixed-point residual above 1e-10"
    return True, f"max deviation from dense mean {worst:.2e}"


def _check_gradients(v: int, trials: int, rng) -> tuple[bool, str]:
    spec = LatticeSpec(min(v, MAX_DENSE_V))
    spectrum = eigenvalues(spec)
    for _ in range(trials):
        _, obs = _random_problem(spec.v, rng)
        theta = _random_theta(rng)
        theta_old = _random_theta(rng)

        fe = prior_free_energy(spec, spectrum, theta)
        fe_dense = build_prior(spec, theta).free_energy()
        if abs(fe - fe_dense) > 1e-8 * max(1.0, abs(fe_dense)):
            return False, "prior free energy != dense"
        fe_post = posterior_free_energy(spec, spectrum, obs, theta)
        fe_post_dense = posterior_free_energy_dense(spec, obs, theta)
        if abs(fe_post - fe_post_dense) > 1e-8 * max(1.0, abs(fe_post_dense)):
            return False, "posterior free energy != dense"

        grad = prior_gradients(spec, spectrum, theta)
        for name, got in (("b", grad.d_b), ("lam", grad.d_lambda), ("alpha", grad.d_alpha)):
            fd = finite_difference(
                lambda x, nm=name: prior_free_energy(
                    spec, spectrum, _replace_param(theta, nm, x)
                ),
                _theta_param(theta, name),
            )
            if abs(got - fd) > max(1e-6, 1e-4 * abs(fd)):
                return False, f"prior d{name} {got} vs fd {fd}"

        m_exact = build_posterior(spec, obs, theta).mean
        pgrad = posterior_gradients(spec, spectrum, obs, theta, m_exact)
        for name, got in (
            ("b", pgrad.d_b),
            ("lam", pgrad.d_lambda),
            ("sigma2", pgrad.d_sigma2),
            ("alpha", pgrad.d_alpha),
        ):
            fd = finite_difference(
                lambda x, nm=name: posterior_free_energy(
                    spec, spectrum, obs, _replace_param(theta, nm, x)
                ),
                _theta_param(theta, name),
            )
            if abs(got - fd) > max(1e-6, 1e-4 * abs(fd)):
                return False, f"posterior d{name} {got} vs fd {fd}"

        m_old = build_posterior(spec, obs, theta_old).mean
        q = q_gradients(spec, spectrum, obs, theta, theta_old, m_old)
        q_ref = exact_q_gradients(spec, obs, theta, theta_old)
        for name, got, want in (
            ("b", q.d_b, q_ref.d_b),
            ("lam", q.d_lambda, q_ref.d_lambda),
            ("sigma2", q.d_sigma2, q_ref.d_sigma2),
            ("alpha", q.d_alpha, q_ref.d_alpha),
        ):
            if abs(got - want) > max(1e-6, 1e-6 * abs(want)):
                return False, f"q d{name} {got} vs dense {want}"

        s2 = sigma2_update(spec, spectrum, obs, theta_old, m_old)
        stats = posterior_stats(spec, spectrum, obs, theta_old, m_old)
        theta_s2 = Hyperparams(sigma2=s2, b=theta_old.b, lam=theta_old.lam, alpha=theta_old.alpha)
        resid = q_gradients_from_stats(stats, spectrum, theta_s2).d_sigma2
        if abs(resid) > 1e-8 * spec.n:
            return False, f"sigma2 update leaves gradient {resid:.2e}"
    return True, "finite differences and dense moments agree"


def _replace_param(theta: Hyperparams, name: str, value: float) -> Hyperparams:
    d = {"sigma2": theta.sigma2, "b": theta.b, "lam": theta.lam, "alpha": theta.alpha}
    d[name] = value
    return Hyperparams(**d)


def _theta_param(theta: Hyperparams, name: str) -> float:
    return {"sigma2": theta.sigma2, "b": theta.b, "lam": theta.lam, "alpha": theta.alpha}[name]


def run_checks(v: int = 8, trials: int = 3, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run all suites at lattice side v; returns (name, passed, detail)."""
    if v > MAX_DENSE_V:
        raise ValueError(f"checks use the dense oracle, v must be <= {MAX_DENSE_V}")
    if v < 2:
        raise ValueError("checks need v >= 2")
    rng = np.random.default_rng(seed)
    suites = [
        ("lattice", _check_lattice),
        ("spectral", _check_spectral),
        ("prior-identity", _check_prior_identity),
        ("meanfield", _check_meanfield),
        ("gradients", _check_gradients),
    ]
    out = []
    for name, fn in suites:
        try:
            ok, detail = fn(v, trials, rng)
        except Exception as exc:  # a crashed suite is a failed suite
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        out.append((name, ok, detail))
    return out
