"""Fuzzy/hard binning, interval extraction, encoding, and initialization."""

import numpy as np
import pytest

from medic.binning import (
    BinningParams,
    BinningWarning,
    EncodingLayout,
    Interval,
    MODE_HARD,
    encode_instance,
    encode_matrix,
    feature_intervals,
    fuzzy_bin,
    hard_bin,
    init_binning,
    intervals_from_centers,
    inv_softplus,
    softplus,
)
from medic.errors import DataError, ModelError
from medic.schema import (
    ROLE_CATEGORICAL,
    ROLE_CONTINUOUS,
    ROLE_TARGET,
    Dataset,
    FeatureSchema,
)
from medic.synthetic import make_synthetic


class TestReparameterization:
    def test_softplus_positive_and_monotone(self):
        xs = np.linspace(-40, 40, 401)
        ys = softplus(xs)
        assert (ys > 0).all()
        assert (np.diff(ys) > 0).all()

    def test_inverse_round_trip(self):
        ys = np.array([1e-4, 0.5, 1.0, 3.0, 40.0, 80.0])
        assert np.allclose(softplus(inv_softplus(ys)), ys, rtol=1e-12)


class TestFuzzyBin:
    def test_peaked_at_exact_center(self):
        w = fuzzy_bin(10.0, np.array([0.0, 10.0, 20.0]), 1.0)
        # side bins vanish; the eps in the denominator holds the peak ~1e-8 under 1
        assert w[0] < 1e-10 and w[2] < 1e-10
        assert abs(w[1] - 1.0) < 2e-8
        # exact agreement with a direct evaluation of the definition
        d = (10.0 - np.array([0.0, 10.0, 20.0])) ** 2 / 2.0
        u = np.exp(-d)
        assert np.allclose(w, u / (u.sum() + 1e-8), rtol=0, atol=1e-16)

    def test_symmetric_midpoint(self):
        w = fuzzy_bin(1.0, np.array([0.0, 2.0]), 1.0)
        assert np.allclose(w, [0.5, 0.5], atol=1e-6)

    def test_normalization(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(1, 7))
            centers = rng.normal(scale=3, size=k)
            w = fuzzy_bin(float(rng.normal(scale=5)), centers, float(rng.uniform(0.1, 2)))
            assert abs(w.sum() - 1.0) < 1e-6
            assert ((w >= 0) & (w < 1)).all()

    def test_far_outlier_still_normalized(self):
        w = fuzzy_bin(1e6, np.array([0.0, 1.0, 2.0]), 0.01)
        assert abs(w.sum() - 1.0) < 1e-6

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            fuzzy_bin(float("nan"), np.array([0.0, 1.0]), 1.0)
        with pytest.raises(DataError):
            fuzzy_bin(float("inf"), np.array([0.0, 1.0]), 1.0)


class TestHardBin:
    def test_nearest_center(self):
        assert hard_bin(12.0, np.array([0.0, 10.0, 20.0])).tolist() == [0.0, 1.0, 0.0]

    def test_midpoint_goes_to_upper(self):
        assert hard_bin(5.0, np.array([0.0, 10.0])).tolist() == [0.0, 1.0]
        # also when the larger center is listed first
        assert hard_bin(5.0, np.array([10.0, 0.0])).tolist() == [1.0, 0.0]

    def test_single_bin(self):
        assert hard_bin(-1e9, np.array([3.0])).tolist() == [1.0]

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            hard_bin(float("nan"), np.array([0.0]))


class TestIntervals:
    def test_albumin_style_boundaries(self):
        mean, scale = 3.8, 0.25
        original = np.array([3.64, 3.76, 3.88])
        standardized = (original - mean) / scale
        ivs = intervals_from_centers(standardized, mean, scale)
        assert len(ivs) == 3
        assert np.isneginf(ivs[0].lower) and np.isposinf(ivs[2].upper)
        assert ivs[0].upper == pytest.approx(3.70, abs=1e-12)
        assert ivs[1].lower == pytest.approx(3.70, abs=1e-12)
        assert ivs[1].upper == pytest.approx(3.82, abs=1e-12)
        assert ivs[2].lower == pytest.approx(3.82, abs=1e-12)

    def test_unsorted_centers_give_same_intervals(self):
        a = intervals_from_centers(np.array([20.0, 0.0, 10.0]))
        b = intervals_from_centers(np.array([0.0, 10.0, 20.0]))
        assert [(i.lower, i.upper) for i in a] == [(i.lower, i.upper) for i in b]

    def test_single_center_spans_reals(self):
        (iv,) = intervals_from_centers(np.array([5.0]))
        assert np.isneginf(iv.lower) and np.isposinf(iv.upper)

    def test_duplicates_merged_with_warning(self):
        with pytest.warns(BinningWarning):
            ivs = intervals_from_centers(np.array([1.0, 1.0 + 1e-12, 5.0]))
        assert len(ivs) == 2

    def test_interval_contains_half_open(self):
        iv = Interval(1.0, 2.0)
        assert iv.contains(1.0) and not iv.contains(2.0)
        with pytest.raises(ModelError):
            Interval(2.0, 2.0)

    def test_slot_map_tracks_merged_slots(self):
        params = BinningParams(
            centers=np.array([[0.5, 0.5 + 1e-12, -1.0]]),
            rho=np.zeros(1),
            mean=np.zeros(1),
            scale=np.ones(1),
        )
        ivs, slot_map = feature_intervals(params, 0)
        assert len(ivs) == 2
        assert slot_map[0] == slot_map[1] == 1  # merged pair sits above -1.0
        assert slot_map[2] == 0


class TestEncoding:
    def _schema(self):
        return FeatureSchema(
            columns=[("x", ROLE_CONTINUOUS), ("c", ROLE_CATEGORICAL), ("y", ROLE_TARGET)],
            category_vocab={"c": ["no", "yes"]},
            class_labels=["a", "b"],
        )

    def _params(self, mode="fuzzy"):
        return BinningParams(
            centers=np.array([[-1.0, 0.0, 1.0]]),
            rho=inv_softplus(np.array([0.5])),
            mean=np.array([10.0]),
            scale=np.array([2.0]),
            mode=mode,
        )

    def test_hard_mode_two_ones(self):
        enc = encode_instance(np.array([12.0, 1.0]), self._schema(), self._params(MODE_HARD))
        assert enc.vector.shape == (5,)
        assert enc.vector.sum() == 2.0
        assert set(np.unique(enc.vector)) <= {0.0, 1.0}
        assert enc.vector[2] == 1.0  # (12-10)/2 = 1.0 -> third bin
        assert enc.vector[4] == 1.0  # category index 1

    def test_fuzzy_segment_sums_to_one(self):
        enc = encode_instance(np.array([11.3, 0.0]), self._schema(), self._params())
        assert abs(enc.vector[0:3].sum() - 1.0) < 1e-6
        assert enc.vector[3] == 1.0 and enc.vector[4] == 0.0

    def test_width_rule(self):
        d = make_synthetic(rows=20, n_continuous=8, n_categorical=0, n_classes=2, seed=0)
        layout = EncodingLayout.build(d.schema, 3)
        assert layout.width == 24

    def test_category_out_of_vocab_names_feature_and_value(self):
        with pytest.raises(DataError, match="'c'"):
            encode_instance(np.array([12.0, 5.0]), self._schema(), self._params())

    def test_nan_rejected(self):
        with pytest.raises(DataError, match="impute"):
            encode_instance(np.array([np.nan, 1.0]), self._schema(), self._params())
        with pytest.raises(DataError, match="impute"):
            encode_instance(np.array([12.0, np.nan]), self._schema(), self._params())

    def test_matrix_matches_instances(self):
        d = make_synthetic(rows=15, n_classes=2, seed=5)
        params = init_binning(d, 3)
        mat = encode_matrix(d.values, d.schema, params)
        for i in range(d.rows):
            one = encode_instance(d.values[i], d.schema, params)
            assert np.array_equal(mat[i], one.vector)


class TestInitBinning:
    def test_quantile_centers_on_uniform(self):
        rng = np.random.default_rng(0)
        schema = FeatureSchema(
            columns=[("u", ROLE_CONTINUOUS), ("y", ROLE_TARGET)], class_labels=["a"]
        )
        vals = rng.uniform(0, 1, size=(5000, 1))
        d = Dataset(schema, vals, np.zeros(5000, dtype=np.int64))
        params = init_binning(d, 3)
        # undo standardization to compare against the raw quantiles
        raw = params.mean[0] + params.scale[0] * params.centers[0]
        assert np.allclose(raw, [1 / 6, 3 / 6, 5 / 6], atol=0.02)
        assert params.sigma[0] > 0

    def test_single_bin_at_median(self):
        d = make_synthetic(rows=101, n_classes=2, n_continuous=1, n_categorical=0, seed=8)
        params = init_binning(d, 1)
        raw = params.mean[0] + params.scale[0] * params.centers[0, 0]
        assert raw == pytest.approx(np.quantile(d.values[:, 0], 0.5), abs=1e-6)

    def test_constant_feature_perturbed_with_warning(self):
        schema = FeatureSchema(
            columns=[("k", ROLE_CONTINUOUS), ("y", ROLE_TARGET)], class_labels=["a", "b"]
        )
        vals = np.full((10, 1), 7.0)
        d = Dataset(schema, vals, np.array([0, 1] * 5, dtype=np.int64))
        with pytest.warns(BinningWarning):
            params = init_binning(d, 3)
        assert len(np.unique(params.centers[0])) == 3

    def test_missing_rejected(self):
        d = make_synthetic(rows=30, n_classes=2, seed=1, missing_rate=0.2)
        with pytest.raises(DataError):
            init_binning(d, 3)


class TestProperties:
    """Randomized invariants, seeded; the acceptance suite re-runs these at scale."""

    def test_partition_tiles_reals(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            k = int(rng.integers(1, 7))
            centers = np.unique(rng.normal(scale=4, size=k))
            ivs = intervals_from_centers(centers)
            assert np.isneginf(ivs[0].lower) and np.isposinf(ivs[-1].upper)
            for a, b in zip(ivs[:-1], ivs[1:]):
                assert a.upper == b.lower
            x = float(rng.normal(scale=10))
            assert sum(iv.contains(x) for iv in ivs) == 1

    def test_fuzzy_matches_hard_at_small_sigma(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            centers = rng.normal(scale=3, size=k)
            span = centers.max() - centers.min()
            if span < 1e-6:
                continue
            x = float(rng.normal(scale=4))
            w = fuzzy_bin(x, centers, 1e-3 * span)
            hard = hard_bin(x, centers)
            # skip near-ties, where the limit is genuinely ambiguous
            d = (x - centers) ** 2
            two = np.partition(d, 1)[:2]
            if two[1] - two[0] < 1e-2 * span**2:
                continue
            assert int(np.argmax(w)) == int(np.argmax(hard))
            assert w.max() > 1.0 - 1e-3

    def test_hard_bin_interval_round_trip(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            centers = np.unique(rng.normal(scale=2, size=k))
            mean = float(rng.normal(scale=10))
            scale = float(rng.uniform(0.1, 5))
            params = BinningParams(
                centers=centers[None, :].copy(),
                rho=np.zeros(1),
                mean=np.array([mean]),
                scale=np.array([scale]),
            )
            ivs, slot_map = feature_intervals(params, 0)
            x_std = float(rng.normal(scale=3))
            x_raw = mean + scale * x_std
            slot = int(np.argmax(hard_bin(x_std, centers)))
            containing = [i for i, iv in enumerate(ivs) if iv.contains(x_raw)]
            assert containing == [int(slot_map[slot])]

    def test_fuzzy_gradients_match_fd(self):
        from medic.backend import kernels as K
        from medic.binning import sigmoid
        from conftest import rel_err_ok

        rng = np.random.default_rng(14)
        for _ in range(25):
            f = int(rng.integers(1, 4))
            k = int(rng.integers(1, 5))
            b = int(rng.integers(1, 5))
            xs = rng.normal(scale=2, size=(b, f))
            centers = rng.normal(scale=2, size=(f, k))
            rho = rng.normal(size=f)
            sigmas = softplus(rho)
            gw = rng.normal(size=(b, f, k))
            gc, gs = K.fuzzy_weights_grad(xs, centers, sigmas, 1e-8, gw)
            grho = gs * sigmoid(rho)

            def value(c, r):
                return float(np.sum(gw * K.fuzzy_weights(xs, c, softplus(r), 1e-8)))

            step = 1e-5
            num_c = np.zeros_like(centers)
            for i in range(f):
                for j in range(k):
                    cp, cm = centers.copy(), centers.copy()
                    cp[i, j] += step
                    cm[i, j] -= step
                    num_c[i, j] = (value(cp, rho) - value(cm, rho)) / (2 * step)
            num_r = np.zeros_like(rho)
            for i in range(f):
                rp, rm = rho.copy(), rho.copy()
                rp[i] += step
                rm[i] -= step
                num_r[i] = (value(centers, rp) - value(centers, rm)) / (2 * step)
            assert rel_err_ok(gc, num_c)
            assert rel_err_ok(grho, num_r)
