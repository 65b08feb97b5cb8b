"""Grid geometry, image containers, observation sets, and hyperparameters.

Everything downstream operates on a v x v square grid of pixels with free
boundaries. Grids are vectorized in raster order (row-major): pixel (r, c)
lives at flat index r * v + c. The containers defined here are immutable
after construction so they can be shared freely between solvers and threads.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeSpec",
    "ImageBuffer",
    "ObservationSet",
    "Hyperparams",
    "center",
    "edge_sq_sum",
]


def _frozen_f64(values: np.ndarray | Sequence[float], n: int) -> np.ndarray:
    """Copy to a read-only, contiguous float64 vector of length n."""
    out = np.array(values, dtype=np.float64).ravel()
    if out.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {np.shape(values)}")
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite pixel values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LatticeSpec:
    """A v x v pixel grid with free (non-wrapping) boundaries.

    The grid graph has an edge between horizontally or vertically adjacent
    pixels, 2 * v * (v - 1) edges in total. Interior pixels have degree 4,
    non-corner boundary pixels 3, corners 2.
    """

    v: int

    def __post_init__(self) -> None:
        if not isinstance(self.v, (int, np.integer)) or isinstance(self.v, bool):
            raise TypeError(f"grid side must be an integer, got {type(self.v).__name__}")
        if self.v < 1:
            raise ValueError(f"grid side must be >= 1, got {self.v}")
        object.__setattr__(self, "v", int(self.v))

    @property
    def n(self) -> int:
        """Number of pixels, v squared."""
        return self.v * self.v

    @property
    def edge_count(self) -> int:
        return 2 * self.v * (self.v - 1)

    def index(self, r: int, c: int) -> int:
        """Flat raster index of pixel (r, c)."""
        if not (0 <= r < self.v and 0 <= c < self.v):
            raise IndexError(f"pixel ({r}, {c}) outside {self.v} x {self.v} grid")
        return r * self.v + c

    def neighbors(self, i: int) -> list[int]:
        """Flat indices of the grid neighbors of pixel i, ascending.

        Free boundary: edge and corner pixels simply have fewer neighbors.
        For v = 1 the list is empty.
        """
        v = self.v
        if not 0 <= i < self.n:
            raise IndexError(f"pixel index {i} outside grid of {self.n}")
        r, c = divmod(i, v)
        out = []
        if r > 0:
            out.append(i - v)
        if c > 0:
            out.append(i - 1)
        if c < v - 1:
            out.append(i + 1)
        if r < v - 1:
            out.append(i + v)
        return out

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))

    def degrees(self) -> np.ndarray:
        """Vector of all pixel degrees in raster order."""
        v = self.v
        line = np.full(v, 2.0)
        if v > 1:
            line[1:-1] = 3.0
            line[[0, -1]] = 2.0
            interior = np.full(v, 4.0)
            interior[[0, -1]] = 3.0
        grid = np.empty((v, v))
        if v == 1:
            grid[:] = 0.0
        else:
            grid[0, :] = line
            grid[-1, :] = line
            grid[1:-1, :] = interior
        return grid.ravel()

    def edges(self) -> Iterator[tuple[int, int]]:
        """All undirected edges as (i, j) pairs with i < j, raster order."""
        v = self.v
        for r in range(v):
            base = r * v
            for c in range(v):
                i = base + c
                if c < v - 1:
                    yield (i, i + 1)
                if r < v - 1:
                    yield (i, i + v)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge endpoints as two index vectors (tail, head), tail < head."""
        v = self.v
        idx = np.arange(self.n).reshape(v, v)
        horiz_i = idx[:, :-1].ravel()
        horiz_j = idx[:, 1:].ravel()
        vert_i = idx[:-1, :].ravel()
        vert_j = idx[1:, :].ravel()
        return (
            np.concatenate([horiz_i, vert_i]),
            np.concatenate([horiz_j, vert_j]),
        )


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """A raster-ordered vector of n real-valued pixel intensities.

    Intensities are float64 and must be finite; quantization to 8-bit
    happens only at image export (see pgm module).
    """

    spec: LatticeSpec
    data: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", _frozen_f64(self.data, self.spec.n))

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> ImageBuffer:
        """Wrap a square 2-D array, inferring the lattice from its shape."""
        arr = np.asarray(grid, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square 2-D array, got shape {arr.shape}")
        return cls(LatticeSpec(arr.shape[0]), arr.ravel())

    def as_grid(self) -> np.ndarray:
        """View the pixel vector as a v x v array (read-only)."""
        return self.data.reshape(self.spec.v, self.spec.v)

    def shifted(self, offset: float) -> ImageBuffer:
        return ImageBuffer(self.spec, self.data + offset)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """K >= 1 degraded images of the same scene, plus cached aggregates.

    avg is the pixel-wise average image y-hat, sq_norm_sum the total squared
    norm over all K images, avg_intensity the mean pixel value of avg. The
    aggregates are recomputed and cross-checked at construction, so a set
    built through from_images is always internally consistent.
    """

    spec: LatticeSpec
    images: tuple[ImageBuffer, ...]
    avg: ImageBuffer
    sq_norm_sum: float
    avg_intensity: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.images) < 1:
            raise ValueError("need at least one observed image")
        object.__setattr__(self, "images", tuple(self.images))
        for im in self.images:
            if im.spec != self.spec:
                raise ValueError("observation lattice mismatch")
        if self.avg.spec != self.spec:
            raise ValueError("average-image lattice mismatch")
        stack = np.stack([im.data for im in self.images])
        avg = stack.mean(axis=0)
        scale = max(1.0, float(np.max(np.abs(avg))))
        if not np.allclose(avg, self.avg.data, rtol=0.0, atol=1e-9 * scale):
            raise ValueError("avg is not the pixel-wise mean of the images")
        sq = float(np.einsum("ki,ki->", stack, stack))
        if not np.isclose(sq, self.sq_norm_sum, rtol=1e-9, atol=1e-6):
            raise ValueError("sq_norm_sum does not match the images")
        if not np.isclose(float(avg.mean()), self.avg_intensity, rtol=0.0, atol=1e-9 * scale):
            raise ValueError("avg_intensity does not match avg")

    @property
    def k_count(self) -> int:
        return len(self.images)

    @classmethod
    def from_images(cls, images: Sequence[ImageBuffer]) -> ObservationSet:
        """Build a set from images, computing all aggregates."""
        if len(images) < 1:
            raise ValueError("need at least one observed image")
        spec = images[0].spec
        stack = np.stack([im.data for im in images])
        avg = stack.mean(axis=0)
        return cls(
            spec=spec,
            images=tuple(images),
            avg=ImageBuffer(spec, avg),
            sq_norm_sum=float(np.einsum("ki,ki->", stack, stack)),
            avg_intensity=float(avg.mean()),
        )


def center(obs: ObservationSet) -> tuple[ObservationSet, float]:
    """Shift the global mean over all K images to zero.

    Returns the centered set and the offset that was subtracted; add the
    offset back to restored images before export or metric comparison
    against uncentered truth.
    """
    offset = float(np.mean([im.data.mean() for im in obs.images]))
    shifted = [im.shifted(-offset) for im in obs.images]
    return ObservationSet.from_images(shifted), offset


def edge_sq_sum(spec: LatticeSpec, x: np.ndarray | ImageBuffer) -> float:
    """Sum of squared differences over all grid edges, x^T L x for the
    free-boundary grid Laplacian L."""
    data = x.data if isinstance(x, ImageBuffer) else np.asarray(x, dtype=np.float64)
    grid = data.reshape(spec.v, spec.v)
    horiz = np.diff(grid, axis=1)
    vert = np.diff(grid, axis=0)
    return float(np.einsum("ij,ij->", horiz, horiz) + np.einsum("ij,ij->", vert, vert))


@dataclass(frozen=True)
class Hyperparams:
    """Model hyperparameters Theta = (sigma2, b, lam, alpha).

    sigma2 is the observation noise variance, b the prior bias, lam the
    prior precision of the mean level, alpha the smoothness coupling. lam
    and sigma2 must be strictly positive, alpha non-negative.
    """

    sigma2: float
    b: float
    lam: float
    alpha: float

    def __post_init__(self) -> None:
        for name in ("sigma2", "b", "lam", "alpha"):
            val = getattr(self, name)
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val}")
            object.__setattr__(self, name, float(val))
        if self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.lam <= 0.0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.alpha < 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    def to_dict(self) -> dict[str, float]:
        return {
            "sigma2": self.sigma2,
            "b": self.b,
            "lambda": self.lam,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict[str, float]) -> Hyperparams:
        unknown = set(d) - {"sigma2", "b", "lambda", "alpha"}
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(
            sigma2=float(d["sigma2"]),
            b=float(d["b"]),
            lam=float(d["lambda"]),
            alpha=float(d["alpha"]),
        )
