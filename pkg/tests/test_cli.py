"""End-to-end command-line workflows over temp directories."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from gmrf_denoise import quantize, read_pgm, synthetic_scene, write_pgm
from gmrf_denoise.cli import RunReport, main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scene_pgm(tmp_path):
    def make(v: int, name: str = "scene.pgm"):
        path = tmp_path / name
        write_pgm(path, quantize(synthetic_scene(v).as_grid()))
        return path

    return make


def run_degrade(runner, scene, out_dir, sigma=20.0, k=2, seed=5):
    result = runner.invoke(
        main,
        ["degrade", "--in", str(scene), "--out", str(out_dir),
         "--sigma", str(sigma), "--k", str(k), "--seed", str(seed)],
    )
    assert result.exit_code == 0, result.output
    return out_dir / "manifest.json"


class TestDegrade:
    def test_writes_copies_and_manifest(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(32)
        out = tmp_path / "noisy"
        manifest_path = run_degrade(runner, scene, out, k=3)
        manifest = json.loads(manifest_path.read_text())
        assert manifest["schema"] == 1
        assert manifest["sigma"] == 20.0
        assert manifest["k"] == 3
        assert manifest["seed"] == 5
        assert manifest["images"] == ["y_000.pgm", "y_001.pgm", "y_002.pgm"]
        assert manifest["truth_path"] == str(scene.resolve())
        for name in manifest["images"]:
            assert read_pgm(out / name).shape == (32, 32)

    def test_deterministic(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        run_degrade(runner, scene, tmp_path / "a")
        run_degrade(runner, scene, tmp_path / "b")
        assert (tmp_path / "a" / "y_000.pgm").read_bytes() == (
            tmp_path / "b" / "y_000.pgm"
        ).read_bytes()

    def test_tiny_sigma_is_lossless(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        out = tmp_path / "clean"
        run_degrade(runner, scene, out, sigma=1e-6, k=1)
        np.testing.assert_array_equal(read_pgm(out / "y_000.pgm"), read_pgm(scene))

    def test_rejects_nonsquare(self, runner, tmp_path):
        path = tmp_path / "rect.pgm"
        write_pgm(path, np.zeros((4, 6), dtype=np.uint8))
        result = runner.invoke(
            main, ["degrade", "--in", str(path), "--out", str(tmp_path / "o"),
                   "--sigma", "5"],
        )
        assert result.exit_code == 2
        assert "square" in result.stderr

    def test_rejects_missing_input(self, runner, tmp_path):
        result = runner.invoke(
            main, ["degrade", "--in", str(tmp_path / "nope.pgm"),
                   "--out", str(tmp_path), "--sigma", "5"],
        )
        assert result.exit_code == 2


class TestDenoise:
    def denoise(self, runner, out_dir, *args):
        return runner.invoke(main, ["denoise", "--out", str(out_dir), *args])

    def test_manifest_roundtrip(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(32)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy, sigma=25.0, k=4)
        out = tmp_path / "restored"
        result = self.denoise(runner, out, "--manifest", str(manifest))
        assert result.exit_code == 0, result.output
        assert (out / "restored.pgm").exists()
        report = RunReport.from_dict(json.loads((out / "report.json").read_text()))
        assert report.method == "linear"
        assert report.sizes == [32]
        assert report.seed == 5
        assert report.iterations >= 1
        assert report.mse is not None and report.mse > 0.0
        assert report.psnr_db is not None
        assert set(report.theta) == {"sigma2", "b", "lambda", "alpha"}

    def test_restoration_beats_average(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(64)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy, sigma=30.0, k=2, seed=1)
        out = tmp_path / "restored"
        result = self.denoise(runner, out, "--manifest", str(manifest))
        assert result.exit_code == 0
        report = json.loads((out / "report.json").read_text())
        truth = read_pgm(scene).astype(np.float64)
        observed = np.stack(
            [read_pgm(noisy / f"y_{i:03d}.pgm").astype(np.float64) for i in range(2)]
        ).mean(axis=0)
        avg_mse = float(((observed - truth) ** 2).mean())
        assert report["mse"] < avg_mse

    def test_images_flag_without_truth(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        noisy = tmp_path / "noisy"
        run_degrade(runner, scene, noisy, k=2)
        out = tmp_path / "o"
        result = self.denoise(
            runner, out,
            "--images", str(noisy / "y_000.pgm"),
            "--images", str(noisy / "y_001.pgm"),
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "report.json").read_text())
        assert report["mse"] is None
        assert report["psnr_db"] is None
        assert report["seed"] is None

    def test_manifest_and_images_conflict(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy)
        result = self.denoise(
            runner, tmp_path / "o",
            "--manifest", str(manifest), "--images", str(noisy / "y_000.pgm"),
        )
        assert result.exit_code == 2
        assert "mutually exclusive" in result.stderr

    def test_requires_some_input(self, runner, tmp_path):
        result = self.denoise(runner, tmp_path / "o")
        assert result.exit_code == 2

    def test_inconsistent_sizes(self, runner, tmp_path):
        a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        write_pgm(a, np.zeros((8, 8), dtype=np.uint8))
        write_pgm(b, np.zeros((16, 16), dtype=np.uint8))
        result = self.denoise(
            runner, tmp_path / "o", "--images", str(a), "--images", str(b)
        )
        assert result.exit_code == 2
        assert "inconsistent" in result.stderr

    def test_oracle_scale_guard(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(36)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy, k=1)
        result = self.denoise(
            runner, tmp_path / "o", "--manifest", str(manifest), "--method", "oracle"
        )
        assert result.exit_code == 2
        assert "oracle" in result.stderr

    def test_oracle_agrees_with_linear(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy, sigma=12.0, k=3, seed=2)
        reports = {}
        for method in ("linear", "oracle"):
            out = tmp_path / method
            result = self.denoise(
                runner, out, "--manifest", str(manifest), "--method", method
            )
            assert result.exit_code == 0, result.output
            reports[method] = json.loads((out / "report.json").read_text())
        a = reports["linear"]["theta"]
        b = reports["oracle"]["theta"]
        assert b["sigma2"] == pytest.approx(a["sigma2"], rel=1e-4)
        assert b["alpha"] == pytest.approx(a["alpha"], rel=1e-3, abs=1e-9)

    def test_dctfft_and_torus_methods_run(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(32)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy, sigma=20.0, k=2)
        for method in ("dctfft", "torus"):
            out = tmp_path / method
            result = self.denoise(
                runner, out, "--manifest", str(manifest), "--method", method
            )
            assert result.exit_code == 0, result.output
            report = json.loads((out / "report.json").read_text())
            assert report["method"] == method
            assert report["mse"] > 0.0

    def test_deterministic_outputs(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy)
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            result = self.denoise(runner, out, "--manifest", str(manifest))
            assert result.exit_code == 0
            outs.append(out)
        assert (outs[0] / "restored.pgm").read_bytes() == (
            outs[1] / "restored.pgm"
        ).read_bytes()
        r1 = json.loads((outs[0] / "report.json").read_text())
        r2 = json.loads((outs[1] / "report.json").read_text())
        assert r1["theta"] == r2["theta"]
        assert r1["mse"] == r2["mse"]

    def test_config_overrides(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        noisy = tmp_path / "noisy"
        manifest = run_degrade(runner, scene, noisy)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"max_em_iters": 3}))
        out = tmp_path / "o"
        result = self.denoise(
            runner, out, "--manifest", str(manifest), "--config", str(config)
        )
        assert result.exit_code == 0
        assert json.loads((out / "report.json").read_text())["iterations"] <= 3

    def test_config_unknown_key(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        manifest = run_degrade(runner, scene, tmp_path / "noisy")
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"momentum": 0.9}))
        result = self.denoise(
            runner, tmp_path / "o", "--manifest", str(manifest), "--config", str(config)
        )
        assert result.exit_code == 2

    def test_config_malformed_json(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        manifest = run_degrade(runner, scene, tmp_path / "noisy")
        config = tmp_path / "config.json"
        config.write_text("{not json")
        result = self.denoise(
            runner, tmp_path / "o", "--manifest", str(manifest), "--config", str(config)
        )
        assert result.exit_code == 2

    def test_clip_changes_metric(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(32)
        manifest = run_degrade(runner, scene, tmp_path / "noisy", sigma=25.0, k=2)
        values = {}
        for flag, name in ((False, "raw"), (True, "clipped")):
            out = tmp_path / name
            args = ["--manifest", str(manifest)] + (["--clip"] if flag else [])
            result = self.denoise(runner, out, *args)
            assert result.exit_code == 0
            values[name] = json.loads((out / "report.json").read_text())["mse"]
        assert values["raw"] != values["clipped"]

    def test_seed_override_echoed(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        manifest = run_degrade(runner, scene, tmp_path / "noisy")
        out = tmp_path / "o"
        result = self.denoise(
            runner, out, "--manifest", str(manifest), "--seed", "99"
        )
        assert result.exit_code == 0
        assert json.loads((out / "report.json").read_text())["seed"] == 99

    def test_verbose_iteration_table(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        manifest = run_degrade(runner, scene, tmp_path / "noisy")
        result = self.denoise(
            runner, tmp_path / "o", "--manifest", str(manifest), "--verbose"
        )
        assert result.exit_code == 0
        assert "sigma2" in result.stderr
        assert "max_delta" in result.stderr

    def test_threads_option_runs(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        manifest = run_degrade(runner, scene, tmp_path / "noisy")
        result = self.denoise(
            runner, tmp_path / "o", "--manifest", str(manifest),
            "--method", "dctfft", "--threads", "2",
        )
        assert result.exit_code == 0

    def test_numerical_failure_exit_3(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        manifest = run_degrade(runner, scene, tmp_path / "noisy")
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "eta_b": 1e300,
            "use_alpha_init": False,
            "theta_init": {"sigma2": 2000.0, "b": 1.0, "lambda": 1e-7, "alpha": 1e-4},
        }))
        out = tmp_path / "o"
        result = self.denoise(
            runner, out, "--manifest", str(manifest), "--config", str(config)
        )
        assert result.exit_code == 3
        assert "numerical failure" in result.stderr
        report = json.loads((out / "report.json").read_text())
        assert report["converged"] is False

    def test_truth_size_mismatch(self, runner, scene_pgm, tmp_path):
        scene = scene_pgm(16)
        noisy = tmp_path / "noisy"
        run_degrade(runner, scene, noisy, k=1)
        other = scene_pgm(32, name="other.pgm")
        result = self.denoise(
            runner, tmp_path / "o",
            "--images", str(noisy / "y_000.pgm"), "--truth", str(other),
        )
        assert result.exit_code == 2


class TestBench:
    def test_smoke(self, runner, tmp_path):
        out = tmp_path / "bench.json"
        result = runner.invoke(
            main,
            ["bench", "--sizes", "8,16", "--methods", "linear,dctfft",
             "--trials", "1", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert "speed-up ratio" in result.output
        report = json.loads(out.read_text())
        assert report["schema"] == 1
        assert report["sizes"] == [8, 16]
        assert len(report["results"]) == 4
        assert set(report["sur_percent"]) == {"8", "16"}

    def test_bad_method(self, runner):
        result = runner.invoke(main, ["bench", "--methods", "quantum", "--trials", "1"])
        assert result.exit_code == 2

    def test_bad_sizes(self, runner):
        result = runner.invoke(main, ["bench", "--sizes", "1", "--trials", "1"])
        assert result.exit_code == 2


class TestCheck:
    def test_all_suites_pass(self, runner):
        result = runner.invoke(main, ["check", "--v", "6", "--trials", "1"])
        assert result.exit_code == 0, result.output
        lines = [l for l in result.output.splitlines() if l.strip()]
        assert sum(line.startswith("PASS") for line in lines) >= 5
        assert not any(line.startswith("FAIL") for line in lines)
        assert "suites passed" in lines[-1]


class TestRunReport:
    def test_schema_guard(self):
        with pytest.raises(ValueError):
            RunReport.from_dict({"schema": 2})

    def test_roundtrip(self):
        report = RunReport(
            method="linear",
            theta={"sigma2": 1.0, "b": 0.0, "lambda": 0.1, "alpha": 0.01},
            iterations=4,
            converged=True,
            mse=12.5,
            psnr_db=37.2,
            wall_time_s=0.8,
            seed=3,
            sizes=[64],
        )
        assert RunReport.from_dict(report.to_dict()) == report
