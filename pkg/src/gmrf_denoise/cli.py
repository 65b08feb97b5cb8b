"""Command-line interface: degrade | denoise | bench | check.

A batch, file-based pipeline around the library. `degrade` synthesizes
noisy copies of a grayscale image plus a manifest.json describing them;
`denoise` estimates hyperparameters on a manifest (or explicit images)
and writes the restored image plus a report.json; `bench` times the
estimation methods across grid sizes; `check` cross-validates the fast
paths against dense references.

Exit codes: 0 on success, 2 on usage errors, 3 on numerical failure (a
partial report is still written when possible). JSON reports may contain
Infinity (e.g. the PSNR of a perfect restoration), which Python's json
module reads back natively.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
import numpy as np
import scipy.fft as _fft

from .bench import METHODS, run_bench
from .checks import run_checks
from .em import EMConfig, EMTrace, run_em, restore
from .em_spectral import run_em_spectral
from .lattice import ImageBuffer, LatticeSpec, ObservationSet, center
from .metrics import mse, psnr
from .noise import NoiseSpec, degrade
from .oracle import MAX_DENSE_V, run_em_dense
from .pgm import quantize, read_gray_image, write_gray_image
from .spectral import Boundary

__all__ = ["RunReport", "main"]

MANIFEST_NAME = "manifest.json"


@dataclass
class RunReport:
    """Machine-readable summary of one denoise run."""

    method: str
    theta: dict[str, float]
    iterations: int
    converged: bool
    mse: float | None
    psnr_db: float | None
    wall_time_s: float
    seed: int | None
    sizes: list[int]
    schema: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": self.schema,
            "method": self.method,
            "theta": dict(self.theta),
            "iterations": self.iterations,
            "converged": self.converged,
            "mse": self.mse,
            "psnr_db": self.psnr_db,
            "wall_time_s": self.wall_time_s,
            "seed": self.seed,
            "sizes": list(self.sizes),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunReport:
        if d.get("schema") != 1:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        return cls(
            method=str(d["method"]),
            theta={k: float(v) for k, v in d["theta"].items()},
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
            mse=None if d["mse"] is None else float(d["mse"]),
            psnr_db=None if d["psnr_db"] is None else float(d["psnr_db"]),
            wall_time_s=float(d["wall_time_s"]),
            seed=None if d["seed"] is None else int(d["seed"]),
            sizes=[int(x) for x in d["sizes"]],
        )


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _load_em_config(path: str | None) -> EMConfig:
    if path is None:
        return EMConfig()
    try:
        overrides = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}") from exc
    try:
        return EMConfig.from_dict(overrides)
    except (ValueError, KeyError, TypeError) as exc:
        raise click.UsageError(f"bad config {path}: {exc}") from exc


@click.group()
def main() -> None:
    """Image denoising with a smoothness prior: linear-time estimation."""


@main.command("degrade")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Square grayscale input image (.pgm, or .png with Pillow).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for noisy copies and manifest.json.")
@click.option("--sigma", required=True, type=click.FloatRange(min=0.0),
              help="Noise standard deviation in gray levels.")
@click.option("--k", "k_count", default=1, show_default=True, type=click.IntRange(min=1),
              help="Number of independent noisy copies.")
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0),
              help="Stream seed; copy k uses stream (seed, k).")
def cmd_degrade(in_path: str, out_dir: str, sigma: float, k_count: int, seed: int) -> None:
    """Synthesize noisy copies of an image and write a manifest."""
    arr = read_gray_image(in_path)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise click.UsageError(f"input must be square, got {arr.shape[0]} x {arr.shape[1]}")
    truth = ImageBuffer.from_grid(arr.astype(np.float64))
    obs = degrade(truth, NoiseSpec(sigma=sigma, k_count=k_count, seed=seed))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, im in enumerate(obs.images):
        name = f"y_{i:03d}.pgm"
        write_gray_image(out / name, quantize(im.as_grid()))
        names.append(name)
    manifest = {
        "schema": 1,
        "sigma": sigma,
        "k": k_count,
        "seed": seed,
        "truth_path": str(Path(in_path).resolve()),
        "images": names,
    }
    _write_json(out / MANIFEST_NAME, manifest)
    click.echo(f"wrote {k_count} degraded image(s) and {MANIFEST_NAME} to {out}")


def _load_manifest(path: Path) -> tuple[list[Path], str | None, int | None]:
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read manifest {path}: {exc}") from exc
    if manifest.get("schema") != 1:
        raise click.UsageError(f"unsupported manifest schema {manifest.get('schema')!r}")
    images = manifest.get("images") or []
    if not images:
        raise click.UsageError(f"manifest {path} lists no images")
    base = path.parent
    paths = [base / p if not Path(p).is_absolute() else Path(p) for p in images]
    truth = manifest.get("truth_path")
    seed = manifest.get("seed")
    return paths, truth, None if seed is None else int(seed)


def _load_observations(paths: list[Path]) -> tuple[LatticeSpec, ObservationSet]:
    arrays = []
    for p in paths:
        if not p.exists():
            raise click.UsageError(f"image not found: {p}")
        arrays.append(read_gray_image(p))
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise click.UsageError(f"inconsistent image sizes: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 2 or shape[0] != shape[1]:
        raise click.UsageError(f"images must be square, got {shape[0]} x {shape[1]}")
    spec = LatticeSpec(shape[0])
    obs = ObservationSet.from_images(
        [ImageBuffer.from_grid(a.astype(np.float64)) for a in arrays]
    )
    return spec, obs


def _iteration_table(trace: EMTrace) -> str:
    lines = ["iter    sigma2            b             lambda        alpha         max_delta"]
    for i, rec in enumerate(trace.records, 1):
        t = rec.theta
        lines.append(
            f"{i:4d}  {t.sigma2:<14.6g}  {t.b:<12.5g}  {t.lam:<12.5g}  "
            f"{t.alpha:<12.5g}  {rec.max_delta:<.3g}"
        )
    return "\n".join(lines)


@main.command("denoise")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              help="Manifest written by degrade; provides images, seed, truth.")
@click.option("--images", "image_paths", multiple=True, type=click.Path(),
              help="Explicit degraded images (alternative to --manifest).")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False),
              help="Ground-truth image for metrics (overrides manifest).")
@click.option("--method", type=click.Choice(["linear", "dctfft", "torus", "oracle"]),
              default="linear", show_default=True)
@click.option("--out", "out_dir", default=".", show_default=True,
              type=click.Path(file_okay=False), help="Directory for outputs.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file overriding estimation protocol knobs.")
@click.option("--clip", is_flag=True,
              help="Quantize the restoration to 8-bit before computing metrics.")
@click.option("--threads", default=1, show_default=True, type=click.IntRange(min=1),
              help="Worker threads for FFT phases (1 = fully reproducible).")
@click.option("--seed", "seed_override", type=int, default=None,
              help="Seed echoed into the report (defaults to the manifest's).")
@click.option("--verbose", is_flag=True, help="Print the per-iteration trace to stderr.")
def cmd_denoise(
    manifest_path: str | None,
    image_paths: tuple[str, ...],
    truth_path: str | None,
    method: str,
    out_dir: str,
    config_path: str | None,
    clip: bool,
    threads: int,
    seed_override: int | None,
    verbose: bool,
) -> None:
    """Estimate hyperparameters and restore an image."""
    if manifest_path is None and not image_paths:
        raise click.UsageError("give --manifest or at least one --images path")
    seed: int | None = None
    if manifest_path is not None:
        paths, manifest_truth, seed = _load_manifest(Path(manifest_path))
        if image_paths:
            raise click.UsageError("--manifest and --images are mutually exclusive")
        if truth_path is None and manifest_truth and Path(manifest_truth).exists():
            truth_path = manifest_truth
    else:
        paths = [Path(p) for p in image_paths]
    if seed_override is not None:
        seed = seed_override

    spec, obs = _load_observations(paths)
    if method == "oracle" and spec.v > MAX_DENSE_V:
        raise click.UsageError(
            f"--method oracle is capped at v <= {MAX_DENSE_V}, got v = {spec.v}"
        )
    cfg = _load_em_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cobs, offset = center(obs)
    failure: str | None = None
    tic = time.perf_counter()
    with _fft.set_workers(threads):
        try:
            if method == "linear":
                trace = run_em(spec, cobs, cfg)
                restored_img = restore(
                    spec, cobs, trace.theta_final, init=trace.m_final
                )
            elif method == "dctfft":
                trace = run_em_spectral(spec, cobs, cfg, boundary=Boundary.FREE)
                restored_img = trace.m_final
            elif method == "torus":
                trace = run_em_spectral(spec, cobs, cfg, boundary=Boundary.TORUS)
                restored_img = trace.m_final
            else:
                trace = run_em_dense(spec, cobs, cfg)
                restored_img = trace.m_final
        except RuntimeError as exc:
            failure = str(exc)
            trace = getattr(exc, "trace", None)
            restored_img = trace.m_final if trace is not None else None
    wall = time.perf_counter() - tic

    if verbose and trace is not None:
        click.echo(_iteration_table(trace), err=True)

    restored_real = None
    if restored_img is not None:
        restored_real = restored_img.data + offset
        write_gray_image(
            out / "restored.pgm", quantize(restored_real.reshape(spec.v, spec.v))
        )

    run_mse = run_psnr = None
    if truth_path is not None and restored_real is not None:
        truth_arr = read_gray_image(truth_path).astype(np.float64)
        if truth_arr.shape != (spec.v, spec.v):
            raise click.UsageError(
                f"truth image is {truth_arr.shape[0]} x {truth_arr.shape[1]}, "
                f"observations are {spec.v} x {spec.v}"
            )
        compare = (
            quantize(restored_real.reshape(spec.v, spec.v)).astype(np.float64)
            if clip
            else restored_real.reshape(spec.v, spec.v)
        )
        run_mse = mse(compare, truth_arr)
        run_psnr = psnr(compare, truth_arr)

    theta = trace.theta_final if trace is not None else cfg.theta_init
    report = RunReport(
        method=method,
        theta=theta.to_dict(),
        iterations=trace.iterations_used if trace is not None else 0,
        converged=bool(trace.converged) if trace is not None else False,
        mse=run_mse,
        psnr_db=run_psnr,
        wall_time_s=wall,
        seed=seed,
        sizes=[spec.v],
    )
    _write_json(out / "report.json", report.to_dict())

    if failure is not None:
        click.echo(f"numerical failure: {failure} (partial report written)", err=True)
        sys.exit(3)
    quality = "" if run_mse is None else f", mse {run_mse:.2f}, psnr {run_psnr:.2f} dB"
    click.echo(
        f"{method}: {trace.iterations_used} iterations, "
        f"converged={str(trace.converged).lower()}{quality}"
    )


@main.command("bench")
@click.option("--sizes", default="256,512", show_default=True,
              help="Comma-separated grid sides.")
@click.option("--methods", default="linear,dctfft", show_default=True,
              help=f"Comma-separated subset of {{{','.join(METHODS)}}}.")
@click.option("--trials", default=3, show_default=True, type=click.IntRange(min=1))
@click.option("--sigma", default=15.0, show_default=True, type=click.FloatRange(min=0.0))
@click.option("--k", "k_count", default=8, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--threads", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Also write the full JSON report here.")
def cmd_bench(
    sizes: str,
    methods: str,
    trials: int,
    sigma: float,
    k_count: int,
    seed: int,
    threads: int,
    out_path: str | None,
) -> None:
    """Time the estimation methods on synthetic problems."""
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
        method_list = [m.strip() for m in methods.split(",") if m.strip()]
        if not size_list or not method_list:
            raise ValueError("empty list")
        if any(v < 2 for v in size_list):
            raise ValueError("sizes must be >= 2")
    except ValueError as exc:
        raise click.UsageError(f"bad --sizes/--methods: {exc}") from exc
    try:
        with _fft.set_workers(threads):
            report = run_bench(
                size_list, method_list, trials=trials, sigma=sigma,
                k_count=k_count, seed=seed,
            )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    for row in report["results"]:
        phases = row["phase_seconds"]
        phase_txt = ", ".join(
            f"{name} {secs:.3f}s" for name, secs in phases.items() if secs > 0.0
        )
        click.echo(
            f"v={row['v']:<5d} {row['method']:<7s} best {row['seconds_min']:.3f}s "
            f"({row['iterations']} iters, {phase_txt})"
        )
    for v, val in report["sur_percent"].items():
        click.echo(f"v={v}: speed-up ratio {val:+.1f}%")
    if out_path is not None:
        _write_json(Path(out_path), report)
        click.echo(f"report written to {out_path}")


@main.command("check")
@click.option("--v", "side", default=8, show_default=True,
              type=click.IntRange(min=2, max=32), help="Lattice side for the suites.")
@click.option("--trials", default=3, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
def cmd_check(side: int, trials: int, seed: int) -> None:
    """Cross-validate fast paths against dense references."""
    results = run_checks(v=side, trials=trials, seed=seed)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        if not ok:
            failed += 1
        click.echo(f"{status}  {name}: {detail}")
    if failed:
        click.echo(f"{failed} of {len(results)} suites failed", err=True)
        sys.exit(3)
    click.echo(f"all {len(results)} suites passed (v={side}, trials={trials})")


if __name__ == "__main__":
    main()
