"""Benchmark harness comparing the EM methods across grid sizes.

Each timed run is one full EM estimation on a centered synthetic problem,
including the restoration the method naturally delivers (the linear
driver's warm mean, the spectral drivers' exact map). Data generation and
all file I/O stay outside the clock. Per-phase wall time from the traces
(mean-field sweeps vs. gradient formulas vs. transforms) and pixel-touch
counts for the linear path are surfaced so the O(n) versus O(n ln n)
split is visible, and the speed-up ratio

    sur = (t_dctfft - t_linear) / t_dctfft * 100

is reported per size from best-of-trials times (its magnitude is hardware
dependent; the sign is the claim of interest).
"""

from __future__ import annotations

import statistics
import time
from typing import Any

from .em import EMConfig, EMTrace, run_em
from .em_spectral import run_em_spectral
from .instrument import WorkCounter
from .lattice import LatticeSpec, center
from .metrics import mse, psnr
from .noise import NoiseSpec, degrade, synthetic_scene
from .spectral import Boundary

__all__ = ["METHODS", "run_bench"]

METHODS = ("linear", "dctfft", "torus")


def _run_method(method: str, spec, obs, config: EMConfig, counter=None) -> EMTrace:
    if method == "linear":
        return run_em(spec, obs, config, counter=counter)
    if method == "dctfft":
        return run_em_spectral(spec, obs, config, boundary=Boundary.FREE, counter=counter)
    if method == "torus":
        return run_em_spectral(spec, obs, config, boundary=Boundary.TORUS, counter=counter)
    raise ValueError(f"unknown method {method!r} (expected one of {METHODS})")


def _warmup() -> None:
    """Pay one-time compile and planning costs outside the clock."""
    spec = LatticeSpec(16)
    obs, _ = center(degrade(synthetic_scene(16), NoiseSpec(sigma=10.0, k_count=2, seed=0)))
    cfg = EMConfig(max_em_iters=2)
    run_em(spec, obs, cfg)
    run_em_spectral(spec, obs, cfg, boundary=Boundary.FREE)
    run_em_spectral(spec, obs, cfg, boundary=Boundary.TORUS)


def run_bench(
    sizes: list[int],
    methods: list[str] | None = None,
    trials: int = 3,
    sigma: float = 15.0,
    k_count: int = 8,
    seed: int = 0,
    config: EMConfig | None = None,
) -> dict[str, Any]:
    """Time the methods over sizes; returns a JSON-ready report."""
    methods = list(methods) if methods else list(METHODS[:2])
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r} (expected one of {METHODS})")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    config = config or EMConfig()
    _warmup()

    results: list[dict[str, Any]] = []
    best: dict[tuple[int, str], float] = {}
    for v in sizes:
        spec = LatticeSpec(v)
        scene = synthetic_scene(v)
        obs, offset = center(degrade(scene, NoiseSpec(sigma=sigma, k_count=k_count, seed=seed)))
        for method in methods:
            seconds = []
            trace = None
            counter = WorkCounter() if method == "linear" else None
            for trial in range(trials):
                trial_counter = counter if trial == 0 else None
                tic = time.perf_counter()
                trace = _run_method(method, spec, obs, config, counter=trial_counter)
                seconds.append(time.perf_counter() - tic)
            restored = trace.m_final.data + offset
            iters = trace.iterations_used
            row: dict[str, Any] = {
                "v": v,
                "method": method,
                "seconds_min": min(seconds),
                "seconds_mean": statistics.fmean(seconds),
                "seconds_std": statistics.pstdev(seconds) if len(seconds) > 1 else 0.0,
                "iterations": iters,
                "converged": trace.converged,
                "mse": mse(restored, scene),
                "psnr_db": psnr(restored, scene),
                "phase_seconds": dict(trace.phase_seconds),
            }
            if counter is not None:
                row["pixel_touches"] = counter.total
                row["touches_per_iteration"] = counter.total // max(iters, 1)
            results.append(row)
            best[(v, method)] = min(seconds)

    sur: dict[str, float] = {}
    if "linear" in methods and "dctfft" in methods:
        for v in sizes:
            t_lin = best[(v, "linear")]
            t_fft = best[(v, "dctfft")]
            sur[str(v)] = (t_fft - t_lin) / t_fft * 100.0

    return {
        "schema": 1,
        "sizes": list(sizes),
        "methods": methods,
        "trials": trials,
        "sigma": sigma,
        "k": k_count,
        "seed": seed,
        "results": results,
        "sur_percent": sur,
    }
