"""Closed-form grid-Laplacian spectra and fast orthogonal 2-D transforms.

The free-boundary grid Laplacian on a v x v lattice is diagonalized by the
orthonormal 2-D type-II DCT; its eigenvalues have the closed form

    Phi[r * v + c] = 4 sin^2(pi r / (2 v)) + 4 sin^2(pi c / (2 v)).

The periodic (torus) Laplacian is diagonalized by the 2-D DFT with

    Phi[r * v + c] = 4 sin^2(pi r / v) + 4 sin^2(pi c / v).

Both transforms are exposed through a common orthogonal real-to-real
interface: forward(x) = U^T x (analysis) and inverse(z) = U z (synthesis),
with U's first column the constant vector 1/sqrt(n), so the transforms
preserve Euclidean norms and map the all-ones image to sqrt(n) on slot 0.
The torus case packs the complex DFT into n real coefficients using
Hermitian symmetry: self-conjugate frequencies keep their real part, and
each conjugate pair (f, -f) stores sqrt(2) * Re at the canonical member and
sqrt(2) * Im at the partner. FFT kernels come from scipy; everything else
here is authored against the dense definitions and verified in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .lattice import ImageBuffer, LatticeSpec

__all__ = [
    "Boundary",
    "SpectrumTable",
    "TransformPlan",
    "eigenvalues",
    "dct_matrix",
    "make_plan",
    "forward",
    "inverse",
]

_SQRT2 = np.sqrt(2.0)


class Boundary(str, Enum):
    """Boundary condition of the grid Laplacian."""

    FREE = "free"
    TORUS = "torus"


@dataclass(frozen=True, eq=False)
class SpectrumTable:
    """Eigenvalues of the grid Laplacian in raster order.

    values[r * v + c] is the eigenvalue belonging to the transform slot
    (r, c); slot 0 is always the zero eigenvalue of the constant mode.
    """

    spec: LatticeSpec
    boundary: Boundary
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.spec.n,):
            raise ValueError("eigenvalue table has wrong length")


@lru_cache(maxsize=64)
def _eigen_cached(v: int, boundary: Boundary) -> np.ndarray:
    k = np.arange(v)
    if boundary is Boundary.FREE:
        half = 4.0 * np.sin(np.pi * k / (2.0 * v)) ** 2
    else:
        half = 4.0 * np.sin(np.pi * k / v) ** 2
    table = np.add.outer(half, half).ravel()
    table.flags.writeable = False
    return table


def eigenvalues(spec: LatticeSpec, boundary: Boundary = Boundary.FREE) -> SpectrumTable:
    """Closed-form Laplacian eigenvalue table for the given boundary."""
    return SpectrumTable(spec, boundary, _eigen_cached(spec.v, Boundary(boundary)))


def dct_matrix(v: int) -> np.ndarray:
    """Dense v x v orthonormal synthesis matrix of the 1-D type-II DCT.

    Column j is the j-th cosine basis vector; column 0 is the constant
    1/sqrt(v). The 2-D transform matrix is the Kronecker square of this,
    and forward() applies its transpose. Intended for desk-scale
    verification, not production paths.
    """
    if v < 1:
        raise ValueError(f"v must be >= 1, got {v}")
    i = np.arange(v)[:, None]
    j = np.arange(v)[None, :]
    mat = np.sqrt(2.0 / v) * np.cos(np.pi * (2 * i + 1) * j / (2.0 * v))
    mat[:, 0] = 1.0 / np.sqrt(v)
    return mat


def _torus_packing(v: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index sets for Hermitian packing of the v x v DFT.

    Returns (self_idx, pos_idx, neg_idx): flat indices of self-conjugate
    frequencies, of the canonical member of each conjugate pair, and of its
    partner. Canonical member = the smaller flat index of the pair.
    """
    q, r = np.meshgrid(np.arange(v), np.arange(v), indexing="ij")
    flat = (q * v + r).ravel()
    partner = (((-q) % v) * v + ((-r) % v)).ravel()
    self_idx = flat[partner == flat]
    pos_idx = flat[flat < partner]
    neg_idx = partner[flat < partner]
    return self_idx, pos_idx, neg_idx


@dataclass(frozen=True, eq=False)
class TransformPlan:
    """Reusable plan binding a lattice to one boundary's transform."""

    spec: LatticeSpec
    boundary: Boundary
    _self_idx: np.ndarray | None = None
    _pos_idx: np.ndarray | None = None
    _neg_idx: np.ndarray | None = None


@lru_cache(maxsize=64)
def _plan_cached(v: int, boundary: Boundary) -> TransformPlan:
    spec = LatticeSpec(v)
    if boundary is Boundary.FREE:
        return TransformPlan(spec, boundary)
    self_idx, pos_idx, neg_idx = _torus_packing(v)
    return TransformPlan(spec, boundary, self_idx, pos_idx, neg_idx)


def make_plan(spec: LatticeSpec, boundary: Boundary = Boundary.FREE) -> TransformPlan:
    return _plan_cached(spec.v, Boundary(boundary))


def _forward_array(plan: TransformPlan, x: np.ndarray) -> np.ndarray:
    """Analysis transform of a flat raster vector (U^T x)."""
    v = plan.spec.v
    grid = np.asarray(x, dtype=np.float64).reshape(v, v)
    if plan.boundary is Boundary.FREE:
        return _fft.dctn(grid, type=2, norm="ortho").ravel()
    n = plan.spec.n
    freq = (_fft.fft2(grid) / np.sqrt(n)).ravel()
    out = np.empty(n)
    out[plan._self_idx] = freq[plan._self_idx].real
    pair = freq[plan._pos_idx]
    out[plan._pos_idx] = _SQRT2 * pair.real
    out[plan._neg_idx] = _SQRT2 * pair.imag
    return out


def _inverse_array(plan: TransformPlan, z: np.ndarray) -> np.ndarray:
    """Synthesis transform of a flat coefficient vector (U z)."""
    v = plan.spec.v
    coeffs = np.asarray(z, dtype=np.float64)
    if plan.boundary is Boundary.FREE:
        return _fft.idctn(coeffs.reshape(v, v), type=2, norm="ortho").ravel()
    n = plan.spec.n
    freq = np.zeros(n, dtype=np.complex128)
    freq[plan._self_idx] = coeffs[plan._self_idx]
    pair = (coeffs[plan._pos_idx] + 1j * coeffs[plan._neg_idx]) / _SQRT2
    freq[plan._pos_idx] = pair
    freq[plan._neg_idx] = np.conj(pair)
    return np.sqrt(n) * _fft.ifft2(freq.reshape(v, v)).ravel().real


def forward(plan: TransformPlan, img: ImageBuffer) -> np.ndarray:
    """Spectral coefficients z = U^T x of an image."""
    if img.spec != plan.spec:
        raise ValueError("image lattice does not match plan")
    return _forward_array(plan, img.data)


def inverse(plan: TransformPlan, z: np.ndarray) -> ImageBuffer:
    """Image x = U z from spectral coefficients."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape != (plan.spec.n,):
        raise ValueError(f"expected {plan.spec.n} coefficients, got {z.shape}")
    return ImageBuffer(plan.spec, _inverse_array(plan, z))
