import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftimpute.data import DataMatrix, standardize_values
from shiftimpute.masking import (
    MarSpec,
    apply_mar_mask,
    calibrate_intercept,
    select_random_spec,
    sigmoid,
)

# closed-form logit oracle: mean sigmoid(b) = 0.7  =>  b = ln(0.7/0.3)
LOGIT_07 = math.log(7.0 / 3.0)


def gaussian_matrix(n, d, seed=0):
    rng = np.random.default_rng(seed)
    return DataMatrix(rng.normal(size=(n, d)), tuple(f"c{j}" for j in range(d)))


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_saturation(self):
        assert sigmoid(40.0) > 1 - 1e-15

    def test_ln3(self):
        # 1/(1 + exp(-ln 3)) = 3/4 by hand
        assert sigmoid(math.log(3.0)) == pytest.approx(0.75, abs=1e-15)

    def test_no_overflow_at_700(self):
        assert 0.0 < sigmoid(-700.0) < 1e-300
        assert sigmoid(700.0) == 1.0  # saturates without warnings/overflow

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-700, 700, allow_nan=False))
    def test_symmetry(self, z):
        assert sigmoid(-z) == pytest.approx(1.0 - sigmoid(z), abs=1e-15)


class TestCalibrateIntercept:
    def test_zero_scores_target_03(self):
        beta = calibrate_intercept(np.zeros(100), 0.3)
        assert beta == pytest.approx(LOGIT_07, abs=1e-4)

    def test_zero_scores_target_05(self):
        assert calibrate_intercept(np.zeros(50), 0.5) == pytest.approx(0.0, abs=1e-4)

    def test_two_point_scores_vs_grid_oracle(self):
        scores = np.array([-1.0, 1.0])
        beta = calibrate_intercept(scores, 0.3)
        # dense grid search oracle over the same interval
        grid = np.linspace(-50, 50, 2_000_001)
        rates = 1.0 - 0.5 * (sigmoid(-1.0 + grid) + sigmoid(1.0 + grid))
        oracle = grid[np.argmin(np.abs(rates - 0.3))]
        assert beta == pytest.approx(oracle, abs=1e-4)
        achieved = float(np.mean(1.0 - sigmoid(scores + beta)))
        assert abs(achieved - 0.3) <= 1e-4

    def test_rate_tolerance_contract(self):
        rng = np.random.default_rng(7)
        scores = rng.normal(0, 2, 500)
        for target in (0.05, 0.3, 0.7, 0.95):
            beta = calibrate_intercept(scores, target)
            achieved = float(np.mean(1.0 - sigmoid(scores + beta)))
            assert abs(achieved - target) <= 1e-4

    def test_non_bracketing_reported(self):
        with pytest.raises(ValueError, match="bracket"):
            calibrate_intercept(np.full(10, 1e6), 0.3)

    def test_target_range_validated(self):
        with pytest.raises(ValueError):
            calibrate_intercept(np.zeros(5), 0.999)


class TestApplyMarMask:
    def test_mcar_rate(self):
        data = gaussian_matrix(10_000, 5, seed=1)
        spec = MarSpec((0,), ((1, 2),), alpha=0.0, target_missing_rate=0.3, seed=5)
        ds, mech = apply_mar_mask(data, spec)
        rate = float((~ds.mask.observed[:, 0]).mean())
        assert abs(rate - 0.3) < 0.015
        np.testing.assert_allclose(mech.probabilities, 0.7, atol=1e-6)

    def test_alpha3_rate_and_monotonicity(self):
        data = gaussian_matrix(10_000, 5, seed=2)
        spec = MarSpec((0,), ((1, 2),), alpha=3.0, target_missing_rate=0.3, seed=6)
        ds, mech = apply_mar_mask(data, spec)
        rate = float((~ds.mask.observed[:, 0]).mean())
        assert abs(rate - 0.3) < 0.015
        # missingness probability decreases in the predictor sum for alpha > 0
        scaled, _ = standardize_values(data.values)
        order = np.argsort(scaled[:, [1, 2]].sum(axis=1))
        p_missing = 1.0 - mech.probabilities[order, 0]
        assert np.all(np.diff(p_missing) <= 1e-12)
        miss = ~ds.mask.observed[:, 0]
        low, high = miss[order[:2000]].mean(), miss[order[-2000:]].mean()
        assert low > high  # empirically concentrated at low predictor sums

    def test_determinism(self):
        data = gaussian_matrix(500, 4, seed=3)
        spec = MarSpec((1,), ((0,),), alpha=1.0, target_missing_rate=0.25, seed=11)
        a, _ = apply_mar_mask(data, spec)
        b, _ = apply_mar_mask(data, spec)
        np.testing.assert_array_equal(a.mask.observed, b.mask.observed)

    def test_mcar_with_empty_predictors_allowed(self):
        data = gaussian_matrix(2000, 3, seed=4)
        spec = MarSpec((2,), ((),), alpha=0.0, target_missing_rate=0.4, seed=12)
        ds, _ = apply_mar_mask(data, spec)
        assert abs(float((~ds.mask.observed[:, 2]).mean()) - 0.4) < 0.04

    def test_empty_predictors_with_shift_rejected(self):
        data = gaussian_matrix(100, 3, seed=4)
        spec = MarSpec((2,), ((),), alpha=1.0, target_missing_rate=0.4, seed=12)
        with pytest.raises(ValueError, match="no predictors"):
            apply_mar_mask(data, spec)

    def test_probabilities_stay_inside_open_interval(self):
        data = gaussian_matrix(5000, 6, seed=5)
        spec = MarSpec((0, 1), ((2, 3, 4, 5), (2, 3)), alpha=3.0,
                       target_missing_rate=0.3, seed=13)
        _, mech = apply_mar_mask(data, spec)
        assert (mech.probabilities > 1e-12 - 1e-18).all()
        assert (mech.probabilities < 1 - 1e-12 + 1e-18).all()

    def test_degenerate_mask_resampled_or_rejected(self):
        data = gaussian_matrix(2, 3, seed=6)
        resampled = rejected = False
        for seed in range(300):
            spec = MarSpec((0,), ((1,),), alpha=0.0,
                           target_missing_rate=0.9, seed=seed)
            first = np.random.default_rng(seed).random(2) < 0.9
            try:
                ds, _ = apply_mar_mask(data, spec)
            except RuntimeError:
                rejected = True
                continue
            col = ds.mask.observed[:, 0]
            assert col.any() and not col.all()
            if first.all():  # first draw was fully missing yet we recovered
                resampled = True
        assert resampled and rejected


class TestCalibrationMonteCarlo:
    def test_rate_within_001_across_alphas(self):
        # mean realized rate over 35 seeds per alpha, n >= 1000
        data = gaussian_matrix(2000, 6, seed=9)
        for alpha in range(-3, 4):
            rates = []
            for seed in range(35):
                spec = MarSpec((0, 1), ((2, 3), (4,)), alpha=float(alpha),
                               target_missing_rate=0.3, seed=seed)
                ds, _ = apply_mar_mask(data, spec)
                rates.append(float((~ds.mask.observed[:, [0, 1]]).mean()))
            assert abs(np.mean(rates) - 0.3) <= 0.01, f"alpha={alpha}"

    def test_mcar_uncorrelated_with_predictors(self):
        n = 4000
        data = gaussian_matrix(n, 5, seed=10)
        spec = MarSpec((0,), ((1, 2, 3),), alpha=0.0,
                       target_missing_rate=0.3, seed=21)
        ds, _ = apply_mar_mask(data, spec)
        miss = (~ds.mask.observed[:, 0]).astype(float)
        for j in (1, 2, 3):
            corr = np.corrcoef(miss, data.values[:, j])[0, 1]
            assert abs(corr) <= 3.0 / math.sqrt(n)


class TestSelectRandomSpec:
    def test_valid_disjoint_spec_on_ten_columns(self):
        data = gaussian_matrix(50, 10, seed=11)
        spec = select_random_spec(data, 4, 4, seed=123)
        assert len(spec.missing_cols) == 4
        missing = set(spec.missing_cols)
        for cols in spec.predictor_sets:
            assert len(cols) == 4
            assert missing.isdisjoint(cols)

    def test_too_small_dimension_rejected(self):
        data = gaussian_matrix(10, 3, seed=12)
        with pytest.raises(ValueError):
            select_random_spec(data, 4, 2, seed=0)

    def test_seeds_give_distinct_specs(self):
        data = gaussian_matrix(10, 10, seed=13)
        specs = {
            (select_random_spec(data, 4, 4, seed=s).missing_cols,
             select_random_spec(data, 4, 4, seed=s).predictor_sets)
            for s in range(100)
        }
        assert len(specs) >= 95

    def test_reproducible(self):
        data = gaussian_matrix(10, 10, seed=14)
        a = select_random_spec(data, 3, 2, seed=77)
        b = select_random_spec(data, 3, 2, seed=77)
        assert a == b


class TestMarSpecInvariants:
    def test_predictors_cannot_overlap_missing(self):
        with pytest.raises(ValueError, match="intersect"):
            MarSpec((0, 1), ((1,), (2,)), 1.0, 0.3, 0)

    def test_rate_bounds(self):
        with pytest.raises(ValueError):
            MarSpec((0,), ((1,),), 1.0, 1.0, 0)

    def test_json_round_trip(self):
        spec = MarSpec((0, 2), ((1,), (3, 4)), -2.0, 0.25, 9)
        assert MarSpec.from_dict(spec.to_dict()) == spec
