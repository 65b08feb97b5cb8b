"""Restoration quality metrics."""

from __future__ import annotations

import math

import numpy as np

from .lattice import ImageBuffer

__all__ = ["mse", "psnr"]


def _as_vector(x: np.ndarray | ImageBuffer) -> np.ndarray:
    data = x.data if isinstance(x, ImageBuffer) else np.asarray(x, dtype=np.float64)
    return data.ravel()


def mse(a: np.ndarray | ImageBuffer, b: np.ndarray | ImageBuffer) -> float:
    """Mean squared error between two equal-size images."""
    av = _as_vector(a)
    bv = _as_vector(b)
    if av.shape != bv.shape:
        raise ValueError(f"size mismatch: {av.shape} vs {bv.shape}")
    diff = av - bv
    return float(np.dot(diff, diff) / diff.size)


def psnr(a: np.ndarray | ImageBuffer, b: np.ndarray | ImageBuffer, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)
