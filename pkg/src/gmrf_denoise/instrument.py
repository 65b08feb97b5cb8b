"""Work counters for verifying linear scaling of the EM path.

Counters charge pixel touches, array-element reads and writes of the
O(n) kernels, under a fixed model so counts are exactly reproducible:

- Gauss-Seidel sweep: one yhat read and one m write per pixel plus one
  read per neighbor, 2 n + 4 v (v - 1) touches per sweep.
- Fused resolvent reduction over the eigenvalue table: 2 n per call
  (one table read, one derived denominator per slot).

Wall time of FFT-based phases is measured, not counted; transforms go
through library internals whose element traffic is not observable here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .lattice import LatticeSpec

__all__ = ["WorkCounter", "sweep_touches", "resolvent_touches"]


def sweep_touches(spec: LatticeSpec) -> int:
    """Pixel touches charged for one Gauss-Seidel sweep."""
    return 2 * spec.n + 4 * spec.v * (spec.v - 1)


def resolvent_touches(spec: LatticeSpec) -> int:
    """Pixel touches charged for one fused reduction over the spectrum."""
    return 2 * spec.n


@dataclass
class WorkCounter:
    """Accumulates pixel touches across solver calls."""

    total: int = 0

    def add(self, touches: int) -> None:
        if touches < 0:
            raise ValueError("touch counts are non-negative")
        self.total += int(touches)

    def reset(self) -> None:
        self.total = 0
