"""Synthetic degradation, prior sampling, and the built-in test scene.

All randomness flows through counter-based Philox streams keyed as
(seed, stream): observation k of a degradation uses stream k, prior draws
use a reserved high stream. Streams are independent and the draws do not
depend on generation order, so re-running any subset of the pipeline with
the same seed reproduces the same images bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Hyperparams, ImageBuffer, LatticeSpec, ObservationSet
from .spectral import Boundary, eigenvalues, inverse, make_plan

__all__ = ["NoiseSpec", "degrade", "sample_prior", "synthetic_scene"]

# Stream ids 0..k-1 belong to observations; prior draws get their own
# region so they can never collide with an observation stream.
_PRIOR_STREAM = 2**32

_MAX_SEED = 2**64


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian degradation: K copies at std sigma."""

    sigma: float
    k_count: int
    seed: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma) or self.sigma < 0.0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.k_count < 1:
            raise ValueError(f"k_count must be >= 1, got {self.k_count}")
        if not 0 <= int(self.seed) < _MAX_SEED:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "k_count", int(self.k_count))
        object.__setattr__(self, "seed", int(self.seed))


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


def degrade(truth: ImageBuffer, noise: NoiseSpec) -> ObservationSet:
    """K independent noisy copies of the truth, real-valued (no
    quantization; that happens only at image export)."""
    n = truth.spec.n
    images = []
    for k in range(noise.k_count):
        nu = _stream(noise.seed, k).standard_normal(n)
        images.append(ImageBuffer(truth.spec, truth.data + noise.sigma * nu))
    return ObservationSet.from_images(images)


def sample_prior(spec: LatticeSpec, theta: Hyperparams, seed: int) -> ImageBuffer:
    """Exact draw from the prior via its spectral factorization.

    A standard normal vector is scaled per slot by 1/sqrt(lam + alpha Phi)
    and synthesized; the constant mean b/lam is added on top.
    """
    if not 0 <= int(seed) < _MAX_SEED:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    xi = _stream(int(seed), _PRIOR_STREAM).standard_normal(spec.n)
    phi = eigenvalues(spec, Boundary.FREE).values
    coeffs = xi / np.sqrt(theta.lam + theta.alpha * phi)
    draw = inverse(make_plan(spec, Boundary.FREE), coeffs)
    return ImageBuffer(spec, draw.data + theta.b / theta.lam)


def synthetic_scene(v: int) -> ImageBuffer:
    """Deterministic natural-like test scene on a v x v grid.

    Smooth low-frequency shading plus two piecewise-constant objects (a
    rectangle and a disk), all values inside [40, 215] so moderate noise
    rarely leaves the 8-bit range.
    """
    spec = LatticeSpec(v)
    r = (np.arange(v) + 0.5) / v
    rr, cc = np.meshgrid(r, r, indexing="ij")
    scene = (
        118.0
        + 36.0 * np.cos(2.0 * np.pi * (1.1 * rr + 0.25)) * np.cos(2.0 * np.pi * (0.7 * cc + 0.1))
        + 22.0 * np.sin(2.0 * np.pi * (0.5 * rr + 0.9 * cc))
    )
    rect = (rr >= 0.15) & (rr < 0.45) & (cc >= 0.55) & (cc < 0.85)
    scene = scene + 38.0 * rect
    disk = (rr - 0.65) ** 2 + (cc - 0.30) ** 2 < 0.17**2
    scene = scene - 20.0 * disk
    return ImageBuffer(spec, np.clip(scene, 0.0, 255.0).ravel())
