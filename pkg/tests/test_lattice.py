"""Lattice indexing, buffers, observation sets, and centering."""

import numpy as np
import pytest

from gmrf_denoise import (
    Hyperparams,
    ImageBuffer,
    LatticeSpec,
    ObservationSet,
    center,
    edge_sq_sum,
)

from helpers import random_obs


class TestLatticeSpec:
    def test_rejects_bad_side(self):
        with pytest.raises(ValueError):
            LatticeSpec(0)
        with pytest.raises(ValueError):
            LatticeSpec(-3)

    def test_sizes(self):
        spec = LatticeSpec(7)
        assert spec.n == 49
        assert spec.edge_count == 2 * 7 * 6

    def test_corner_neighbors_v2(self):
        spec = LatticeSpec(2)
        assert list(spec.neighbors(0)) == [1, 2]

    def test_center_neighbors_v3(self):
        spec = LatticeSpec(3)
        assert list(spec.neighbors(4)) == [1, 3, 5, 7]

    def test_edge_site_neighbors_v3(self):
        spec = LatticeSpec(3)
        assert list(spec.neighbors(1)) == [0, 2, 4]

    def test_single_site_has_no_neighbors(self):
        spec = LatticeSpec(1)
        assert list(spec.neighbors(0)) == []
        assert spec.edge_count == 0

    def test_neighbor_symmetry(self):
        spec = LatticeSpec(5)
        for i in range(spec.n):
            for j in spec.neighbors(i):
                assert i in spec.neighbors(j)

    def test_degree_sum_is_twice_edges(self):
        spec = LatticeSpec(6)
        degrees = spec.degrees()
        assert degrees.sum() == 2 * spec.edge_count
        assert all(spec.degree(i) == degrees[i] for i in range(spec.n))

    def test_degree_values(self):
        spec = LatticeSpec(4)
        grid = spec.degrees().reshape(4, 4)
        assert grid[0, 0] == 2
        assert grid[0, 1] == 3
        assert grid[1, 1] == 4

    def test_index_raster_order(self):
        spec = LatticeSpec(3)
        assert spec.index(0, 0) == 0
        assert spec.index(0, 2) == 2
        assert spec.index(1, 0) == 3
        assert spec.index(2, 2) == 8

    def test_edges_listed_once_ordered(self):
        spec = LatticeSpec(4)
        edges = list(spec.edges())
        assert len(edges) == spec.edge_count
        assert len(set(edges)) == spec.edge_count
        assert all(i < j for i, j in edges)

    def test_edge_arrays_match_edges(self):
        spec = LatticeSpec(3)
        heads, tails = spec.edge_arrays()
        assert sorted(zip(heads.tolist(), tails.tolist())) == sorted(spec.edges())


class TestImageBuffer:
    def test_roundtrip_grid(self, rng):
        spec = LatticeSpec(4)
        grid = rng.standard_normal((4, 4))
        buf = ImageBuffer.from_grid(grid)
        assert buf.spec.v == 4
        np.testing.assert_array_equal(buf.as_grid(), grid)

    def test_rejects_nonfinite(self):
        spec = LatticeSpec(2)
        with pytest.raises(ValueError):
            ImageBuffer(spec, np.array([0.0, 1.0, np.nan, 2.0]))
        with pytest.raises(ValueError):
            ImageBuffer(spec, np.array([0.0, np.inf, 0.0, 2.0]))

    def test_rejects_wrong_length(self):
        spec = LatticeSpec(2)
        with pytest.raises(ValueError):
            ImageBuffer(spec, np.zeros(5))

    def test_rejects_nonsquare_grid(self):
        with pytest.raises(ValueError):
            ImageBuffer.from_grid(np.zeros((2, 3)))

    def test_data_read_only(self):
        buf = ImageBuffer(LatticeSpec(2), np.zeros(4))
        with pytest.raises(ValueError):
            buf.data[0] = 1.0

    def test_shifted(self):
        buf = ImageBuffer(LatticeSpec(2), np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_allclose(buf.shifted(1.5).data, [2.5, 3.5, 4.5, 5.5])


class TestObservationSet:
    def test_avg_and_sums(self, rng):
        spec = LatticeSpec(4)
        images = [ImageBuffer(spec, rng.standard_normal(spec.n)) for _ in range(3)]
        obs = ObservationSet.from_images(images)
        stack = np.stack([im.data for im in images])
        assert obs.k_count == 3
        np.testing.assert_allclose(obs.avg.data, stack.mean(axis=0), atol=1e-14)
        assert obs.sq_norm_sum == pytest.approx((stack**2).sum(), rel=1e-14)
        assert obs.avg_intensity == pytest.approx(stack.mean(), rel=1e-12, abs=1e-14)

    def test_requires_at_least_one_image(self):
        with pytest.raises(ValueError):
            ObservationSet.from_images([])

    def test_rejects_mixed_sizes(self, rng):
        a = ImageBuffer(LatticeSpec(2), rng.standard_normal(4))
        b = ImageBuffer(LatticeSpec(3), rng.standard_normal(9))
        with pytest.raises(ValueError):
            ObservationSet.from_images([a, b])

    def test_rejects_inconsistent_summaries(self, rng):
        spec = LatticeSpec(2)
        images = (ImageBuffer(spec, rng.standard_normal(4)),)
        wrong_avg = ImageBuffer(spec, images[0].data + 1.0)
        with pytest.raises(ValueError):
            ObservationSet(
                spec=spec,
                images=images,
                avg=wrong_avg,
                sq_norm_sum=float(images[0].data @ images[0].data),
                avg_intensity=float(images[0].data.mean()),
            )


class TestCenter:
    def test_constant_image(self):
        spec = LatticeSpec(3)
        obs = ObservationSet.from_images([ImageBuffer(spec, np.full(9, 5.0))])
        cobs, offset = center(obs)
        assert offset == pytest.approx(5.0)
        np.testing.assert_allclose(cobs.avg.data, 0.0, atol=1e-12)

    def test_zero_mean_after_centering(self, rng):
        obs = random_obs(LatticeSpec(4), rng, k=3, scale=10.0)
        cobs, offset = center(obs)
        assert cobs.avg_intensity == pytest.approx(0.0, abs=1e-12)
        assert offset == pytest.approx(obs.avg_intensity)

    def test_idempotent(self, rng):
        obs = random_obs(LatticeSpec(4), rng, k=2, scale=10.0)
        cobs, _ = center(obs)
        cobs2, offset2 = center(cobs)
        assert offset2 == pytest.approx(0.0, abs=1e-12)
        for a, b in zip(cobs2.images, cobs.images):
            np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_add_back_restores(self, rng):
        obs = random_obs(LatticeSpec(5), rng, k=2, scale=10.0)
        cobs, offset = center(obs)
        for orig, cent in zip(obs.images, cobs.images):
            np.testing.assert_allclose(cent.data + offset, orig.data, atol=1e-10)


class TestEdgeSqSum:
    def test_matches_bruteforce(self, rng):
        spec = LatticeSpec(5)
        x = rng.standard_normal(spec.n)
        expected = sum((x[i] - x[j]) ** 2 for i, j in spec.edges())
        assert edge_sq_sum(spec, x) == pytest.approx(expected, rel=1e-12)

    def test_constant_is_zero(self):
        spec = LatticeSpec(4)
        assert edge_sq_sum(spec, np.full(16, 3.3)) == 0.0


class TestHyperparams:
    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparams(sigma2=0.0, b=0.0, lam=1.0, alpha=0.0)
        with pytest.raises(ValueError):
            Hyperparams(sigma2=1.0, b=0.0, lam=0.0, alpha=0.0)
        with pytest.raises(ValueError):
            Hyperparams(sigma2=1.0, b=0.0, lam=1.0, alpha=-0.1)
        with pytest.raises(ValueError):
            Hyperparams(sigma2=1.0, b=float("nan"), lam=1.0, alpha=0.0)

    def test_alpha_zero_allowed(self):
        theta = Hyperparams(sigma2=1.0, b=0.0, lam=1.0, alpha=0.0)
        assert theta.alpha == 0.0

    def test_dict_roundtrip(self):
        theta = Hyperparams(sigma2=2.5, b=-0.25, lam=0.125, alpha=0.0625)
        d = theta.to_dict()
        assert d["lambda"] == 0.125
        assert Hyperparams.from_dict(d) == theta

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            Hyperparams.from_dict(
                {"sigma2": 1.0, "b": 0.0, "lambda": 1.0, "alpha": 0.0, "extra": 1}
            )
