"""Shared construction helpers for the test suite."""

from __future__ import annotations

import numpy as np

from gmrf_denoise import (
    Hyperparams,
    ImageBuffer,
    LatticeSpec,
    ObservationSet,
)


def random_theta(rng: np.random.Generator) -> Hyperparams:
    """A well-conditioned random parameter point for oracle-scale tests."""
    return Hyperparams(
        sigma2=float(rng.uniform(0.5, 3.0)),
        b=float(rng.uniform(-0.5, 0.5)),
        lam=float(rng.uniform(0.05, 0.5)),
        alpha=float(rng.uniform(0.02, 0.3)),
    )


def random_obs(spec: LatticeSpec, rng: np.random.Generator, k: int | None = None,
               scale: float = 1.0) -> ObservationSet:
    """K random images with O(scale) entries on the given lattice."""
    k = int(rng.integers(1, 4)) if k is None else k
    images = [
        ImageBuffer(spec, scale * rng.standard_normal(spec.n)) for _ in range(k)
    ]
    return ObservationSet.from_images(images)


def random_problem(
    v: int, rng: np.random.Generator, k: int | None = None
) -> tuple[LatticeSpec, ObservationSet, Hyperparams]:
    spec = LatticeSpec(v)
    return spec, random_obs(spec, rng, k=k), random_theta(rng)
