import json

import numpy as np
import pytest
from scipy.stats import norm

from kdlab.data import (
    GaussianSpec,
    LabeledDataset,
    analytic_bcpd,
    bayes_accuracy,
    blend_uniform,
    load_dataset,
    make_spec,
    perturb_bcpd,
    sample_dataset,
    save_dataset,
    sharpen_bcpd,
    truncate_bcpd,
    split_dataset,
)
from kdlab.losses import mse_distance
from kdlab.tensor import make_rng


class TestMakeSpec:
    def test_entries_from_symbol_set(self):
        spec = make_spec(make_rng(1), num_classes=4, dim=12, delta_mu=1.5)
        assert set(np.unique(spec.means)) <= {-1.5, 0.0, 1.5}

    def test_zero_separation_uniform_posterior(self, rng):
        spec = make_spec(make_rng(2), delta_mu=0.0)
        x = rng.standard_normal((5, 30))
        np.testing.assert_allclose(analytic_bcpd(spec, x), 1 / 3, atol=1e-12)

    def test_deterministic(self):
        a = make_spec(make_rng(3, "s"))
        b = make_spec(make_rng(3, "s"))
        np.testing.assert_array_equal(a.means, b.means)

    def test_symbol_frequencies(self):
        spec = make_spec(make_rng(4), num_classes=30, dim=400)
        for symbol in (-1.0, 0.0, 1.0):
            frac = (spec.means == symbol).mean()
            assert abs(frac - 1 / 3) < 0.02

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            make_spec(make_rng(0), num_classes=1)
        with pytest.raises(ValueError):
            make_spec(make_rng(0), sigma=0.0)
        with pytest.raises(ValueError):
            make_spec(make_rng(0), delta_mu=-1.0)

    def test_spec_invariant_enforced(self):
        with pytest.raises(ValueError):
            GaussianSpec(2, 2, 1.0, 1.0, np.array([[0.5, 0.0], [1.0, -1.0]]))


def two_class_line_spec(sigma=1.0):
    """d=1 means at -1 and +1; the posterior has a closed logistic form."""
    return GaussianSpec(2, 1, 1.0, sigma, np.array([[-1.0], [1.0]]))


class TestAnalyticBcpd:
    def test_equidistant_point_is_uniform(self):
        spec = two_class_line_spec()
        np.testing.assert_allclose(analytic_bcpd(spec, np.array([0.0])), [0.5, 0.5], atol=1e-12)

    def test_score_ratio_identity(self, rng):
        spec = make_spec(make_rng(5), num_classes=3, dim=8, sigma=2.0)
        x = rng.standard_normal(8) * 3
        p = analytic_bcpd(spec, x)
        s = -np.square(x - spec.means).sum(axis=1) / (2 * spec.sigma**2)
        for k in range(3):
            for j in range(3):
                assert p[k] / p[j] == pytest.approx(np.exp(s[k] - s[j]), rel=1e-10)

    def test_binary_closed_form_against_density_ratio(self):
        # density-ratio oracle p(y=2|x) = N(x;1,1) / (N(x;1,1) + N(x;-1,1));
        # at x = 0.5 this is the logistic value 1/(1+e^-1)
        spec = two_class_line_spec(sigma=1.0)
        x = np.array([0.5])
        oracle = norm.pdf(0.5, 1, 1) / (norm.pdf(0.5, 1, 1) + norm.pdf(0.5, -1, 1))
        p = analytic_bcpd(spec, x)
        assert p[1] == pytest.approx(oracle, abs=1e-12)
        assert p[1] == pytest.approx(0.7310585786300049, abs=1e-12)

    def test_well_separated_means_confident(self):
        spec = GaussianSpec(3, 2, 10.0, 1.0, np.array([[-10.0, -10.0], [0.0, 0.0], [10.0, 10.0]]))
        for k in range(3):
            p = analytic_bcpd(spec, spec.means[k])
            assert p.argmax() == k
            assert p.max() > 0.99

    def test_rows_are_simplex(self, rng):
        spec = make_spec(make_rng(6))
        p = analytic_bcpd(spec, rng.standard_normal((100, 30)) * 5)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            analytic_bcpd(make_spec(make_rng(0)), np.zeros(7))


class TestSampleDataset:
    def test_class_frequencies(self):
        spec = make_spec(make_rng(7))
        ds = sample_dataset(make_rng(7, "d"), spec, 100_000)
        for k in range(3):
            assert abs((ds.y == k).mean() - 1 / 3) < 0.01

    def test_per_class_feature_means(self):
        # per-class n ~ 33k at sigma 4 -> se ~ 0.022; the max over 90
        # coordinates needs ~4.5 se for a sound joint bound, and the mean
        # absolute deviation concentrates well under 0.05
        spec = make_spec(make_rng(8))
        ds = sample_dataset(make_rng(8, "d"), spec, 100_000)
        for k in range(3):
            dev = np.abs(ds.x[ds.y == k].mean(axis=0) - spec.means[k])
            assert dev.max() < 0.1
            assert dev.mean() < 0.05

    def test_bcpd_matches_analytic(self):
        spec = make_spec(make_rng(9), dim=4)
        ds = sample_dataset(make_rng(9, "d"), spec, 50)
        np.testing.assert_allclose(ds.bcpd, analytic_bcpd(spec, ds.x), atol=1e-12)

    def test_nearest_mean_equals_bayes_argmax(self):
        # equal priors and covariances: nearest-mean rule is the exact rule
        spec = make_spec(make_rng(10), dim=6, sigma=2.0)
        ds = sample_dataset(make_rng(10, "d"), spec, 2000)
        d2 = np.square(ds.x[:, None, :] - spec.means[None]).sum(axis=2)
        np.testing.assert_array_equal(d2.argmin(axis=1), ds.bcpd.argmax(axis=1))

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            sample_dataset(make_rng(0), make_spec(make_rng(0)), 0)


class TestSplit:
    def test_exact_sizes(self):
        spec = make_spec(make_rng(11), dim=3)
        ds = sample_dataset(make_rng(11, "d"), spec, 100)
        ds = split_dataset(make_rng(11, "s"), ds, (0.9, 0.05, 0.05))
        assert ds.split_sizes() == {"train": 90, "val": 5, "test": 5}

    def test_disjoint_cover(self):
        spec = make_spec(make_rng(12), dim=3)
        ds = sample_dataset(make_rng(12, "d"), spec, 173)
        ds = split_dataset(make_rng(12, "s"), ds, (0.6, 0.2, 0.2))
        parts = [set(ds.indices(s)) for s in ("train", "val", "test")]
        assert sum(len(p) for p in parts) == 173
        assert set.union(*parts) == set(range(173))

    def test_deterministic(self):
        spec = make_spec(make_rng(13), dim=3)
        ds = sample_dataset(make_rng(13, "d"), spec, 50)
        a = split_dataset(make_rng(13, "s"), ds)
        b = split_dataset(make_rng(13, "s"), ds)
        np.testing.assert_array_equal(a.split, b.split)

    def test_bad_ratios(self):
        spec = make_spec(make_rng(14), dim=3)
        ds = sample_dataset(make_rng(14, "d"), spec, 50)
        with pytest.raises(ValueError):
            split_dataset(make_rng(0), ds, (0.5, 0.2, 0.2))
        with pytest.raises(ValueError):
            split_dataset(make_rng(0), ds, (1.0, 0.0, 0.0))


class TestPerturb:
    def test_zero_scale_is_identity(self, rng):
        spec = make_spec(make_rng(15), dim=5)
        p = analytic_bcpd(spec, rng.standard_normal((50, 5)))
        np.testing.assert_allclose(perturb_bcpd(make_rng(0), p, 0.0), p, atol=1e-12)

    def test_output_on_simplex_any_scale(self, rng):
        spec = make_spec(make_rng(16), dim=5)
        p = analytic_bcpd(spec, rng.standard_normal((100, 5)))
        for scale in (0.1, 1.0, 50.0):
            q = perturb_bcpd(make_rng(1, "p"), p, scale)
            assert np.all(q >= 0)
            np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(np.isfinite(q))

    def test_mean_distance_monotone_in_scale(self):
        # Monte-Carlo sweep with common random numbers: the same noise
        # directions are rescaled across the grid, otherwise independent
        # draws need ~40k rows before adjacent grid means order reliably
        spec = make_spec(make_rng(17), dim=5)
        p = analytic_bcpd(spec, make_rng(17, "x").standard_normal((1500, 5)) * 4)
        grid = np.arange(0.05, 2.01, 0.05)
        means = []
        for scale in grid:
            q = perturb_bcpd(make_rng(17, "noise"), p, float(scale))
            means.append(float(np.mean(mse_distance(p, q))))
        assert all(b >= a for a, b in zip(means, means[1:]))

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError):
            perturb_bcpd(make_rng(0), np.array([[0.5, 0.5]]), -0.1)

    def test_handles_exact_zeros(self):
        q = perturb_bcpd(make_rng(2), np.array([[0.0, 1.0]]), 0.5)
        assert np.all(np.isfinite(q))
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-9)


class TestShapedPerturbations:
    def test_sharpen_keeps_argmax_and_concentrates(self, rng):
        spec = make_spec(make_rng(18), dim=5)
        p = analytic_bcpd(spec, rng.standard_normal((200, 5)) * 4)
        q = sharpen_bcpd(p, 2.0)
        np.testing.assert_array_equal(q.argmax(axis=1), p.argmax(axis=1))
        assert np.all(q.max(axis=1) >= p.max(axis=1) - 1e-12)
        np.testing.assert_allclose(sharpen_bcpd(p, 0.0), p, atol=1e-12)

    def test_truncate_zeroes_small_entries_keeps_argmax(self, rng):
        spec = make_spec(make_rng(20, "t"), dim=5)
        p = analytic_bcpd(spec, rng.standard_normal((300, 5)) * 4)
        q = truncate_bcpd(p, 0.15)
        np.testing.assert_array_equal(q.argmax(axis=1), p.argmax(axis=1))
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
        dropped = (p < 0.15) & (p < p.max(axis=1, keepdims=True))
        assert np.all(q[dropped] == 0.0)
        assert dropped.any()

    def test_truncate_zero_threshold_identity(self, rng):
        spec = make_spec(make_rng(21, "t"), dim=4)
        p = analytic_bcpd(spec, rng.standard_normal((50, 4)))
        np.testing.assert_allclose(truncate_bcpd(p, 0.0), p, atol=1e-15)

    def test_truncate_extreme_threshold_is_onehot(self):
        p = np.array([[0.5, 0.3, 0.2]])
        q = truncate_bcpd(p, 1.0)
        np.testing.assert_array_equal(q, np.array([[1.0, 0.0, 0.0]]))

    def test_truncate_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            truncate_bcpd(np.array([[0.5, 0.5]]), -0.1)

    def test_blend_uniform_keeps_argmax(self, rng):
        spec = make_spec(make_rng(19), dim=5)
        p = analytic_bcpd(spec, rng.standard_normal((200, 5)) * 4)
        q = blend_uniform(p, 0.9)
        np.testing.assert_array_equal(q.argmax(axis=1), p.argmax(axis=1))
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(blend_uniform(p, 0.0), p, atol=1e-15)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            sharpen_bcpd(np.array([[0.5, 0.5]]), -0.5)
        with pytest.raises(ValueError):
            blend_uniform(np.array([[0.5, 0.5]]), 1.5)


class TestBayesAccuracy:
    def test_perfect_when_labels_follow_argmax(self):
        x = np.zeros((4, 2))
        bcpd = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.1, 0.9]])
        y = bcpd.argmax(axis=1)
        ds = LabeledDataset(x=x, y=y, bcpd=bcpd, split=np.zeros(4, dtype=np.int8))
        assert bayes_accuracy(ds) == 1.0

    def test_empty_split_rejected(self):
        ds = LabeledDataset(
            x=np.zeros((2, 1)),
            y=np.zeros(2, dtype=np.int64),
            bcpd=np.full((2, 2), 0.5),
            split=np.zeros(2, dtype=np.int8),
        )
        with pytest.raises(ValueError):
            bayes_accuracy(ds, "test")


class TestDatasetIo:
    def test_round_trip_bit_exact(self, tmp_path):
        spec = make_spec(make_rng(20), dim=4)
        ds = sample_dataset(make_rng(20, "d"), spec, 60)
        ds = split_dataset(make_rng(20, "s"), ds, (0.8, 0.1, 0.1))
        csv_path, meta_path = tmp_path / "d.csv", tmp_path / "d.meta.json"
        save_dataset(ds, spec, csv_path, meta_path, seed=20)
        ds2, spec2, meta = load_dataset(csv_path, meta_path)
        np.testing.assert_array_equal(ds.x, ds2.x)
        np.testing.assert_array_equal(ds.y, ds2.y)
        np.testing.assert_array_equal(ds.bcpd, ds2.bcpd)
        np.testing.assert_array_equal(ds.split, ds2.split)
        np.testing.assert_array_equal(spec.means, spec2.means)
        assert meta["seed"] == 20
        assert meta["split_sizes"] == {"train": 48, "val": 6, "test": 6}
        assert 0.0 <= meta["bayes_accuracy"] <= 1.0

    def test_write_is_deterministic(self, tmp_path):
        spec = make_spec(make_rng(21), dim=4)
        ds = sample_dataset(make_rng(21, "d"), spec, 30)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        m1, m2 = tmp_path / "a.json", tmp_path / "b.json"
        save_dataset(ds, spec, p1, m1, seed=21)
        save_dataset(ds, spec, p2, m2, seed=21)
        assert p1.read_bytes() == p2.read_bytes()
        assert m1.read_bytes() == m2.read_bytes()

    def test_header_validated(self, tmp_path):
        spec = make_spec(make_rng(22), dim=3)
        ds = sample_dataset(make_rng(22, "d"), spec, 10)
        csv_path, meta_path = tmp_path / "d.csv", tmp_path / "d.meta.json"
        save_dataset(ds, spec, csv_path, meta_path, seed=22)
        broken = csv_path.read_text().replace("x_0", "q_0", 1)
        csv_path.write_text(broken)
        with pytest.raises(ValueError):
            load_dataset(csv_path, meta_path)

    def test_metadata_is_valid_json_with_means(self, tmp_path):
        spec = make_spec(make_rng(23), dim=3)
        ds = sample_dataset(make_rng(23, "d"), spec, 10)
        save_dataset(ds, spec, tmp_path / "d.csv", tmp_path / "m.json", seed=23)
        meta = json.loads((tmp_path / "m.json").read_text())
        assert np.array(meta["means"]).shape == (3, 3)
