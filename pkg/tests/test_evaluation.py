from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rw2cf.data_io import CalendarMonth, DataError
from rw2cf.evaluation import SyntheticSpec, adjusted_r2, coverage95, generate_synthetic, make_folds, run_cv
from rw2cf.sampler import ModelConfig, SamplerSettings

from conftest import tfl_shaped_dataset


def adj_r2_fraction(obs, pred, p):
    obs = [Fraction(x).limit_denominator(10**6) for x in obs]
    pred = [Fraction(x).limit_denominator(10**6) for x in pred]
    n = len(obs)
    mean = sum(obs) / n
    ss_res = sum((o - q) ** 2 for o, q in zip(obs, pred))
    ss_tot = sum((o - mean) ** 2 for o in obs)
    return 1 - (ss_res / ss_tot) * Fraction(n - 1, n - p - 1)


class TestAdjustedR2:
    def test_six_point_fixture(self):
        obs = [1, 2, 3, 4, 5, 6]
        pred = [1.1, 1.9, 3.2, 3.8, 5.1, 5.9]
        expected = adj_r2_fraction(obs, pred, 1)
        assert expected == Fraction(347, 350)
        assert adjusted_r2(obs, pred, 1) == pytest.approx(float(expected), abs=1e-12)

    def test_perfect(self):
        assert adjusted_r2([1, 2, 3, 5], [1, 2, 3, 5], 2) == 1.0

    def test_constant_observed(self):
        assert adjusted_r2([2, 2, 2, 2], [1, 2, 3, 4], 1) is None

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            adjusted_r2([1, 2, 3], [1, 2, 3], 2)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(-50, 50), min_size=6, max_size=12), st.integers(0, 3), st.integers(0, 10**6))
    def test_matches_rational(self, obs, p, seed):
        pred = np.random.default_rng(seed).integers(-50, 50, len(obs))
        if len(set(obs)) == 1:
            return
        got = adjusted_r2(obs, pred, p)
        assert got == pytest.approx(float(adj_r2_fraction(obs, pred.tolist(), p)), rel=1e-12, abs=1e-12)


class TestCoverage:
    def test_counts(self):
        obs = [1.0, 2.0, 3.0, 4.0]
        iv = [(0, 2), (2, 3), (3.5, 5), (4, 4)]
        assert coverage95(obs, iv) == 0.75

    def test_boundaries_closed(self):
        assert coverage95([1.0, 2.0], [(1.0, 1.5), (1.0, 2.0)]) == 1.0

    def test_empty(self):
        assert np.isnan(coverage95([], np.empty((0, 2))))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            coverage95([1.0], [(0, 1), (0, 1)])


class TestFolds:
    def test_tfl_shape(self):
        ds = tfl_shaped_dataset()
        folds = make_folds(ds)
        assert [f.held_out_year for f in folds] == list(range(2010, 2020))
        assert len(folds[0].test_months) == 6  # Jul-Dec 2010
        assert all(f.train_end == CalendarMonth(2019, 12) for f in folds)
        assert len(make_folds(ds, include_partial=False)) == 9

    def test_disjoint_and_complete(self):
        ds = tfl_shaped_dataset()
        for f in make_folds(ds):
            assert not set(f.train_months) & set(f.test_months)
            assert set(f.train_months) | set(f.test_months) == set(range(ds.index_of(f.train_end) + 1))
            assert all(ds.months[i].year == f.held_out_year for i in f.test_months)

    def test_subset(self):
        folds = make_folds(tfl_shaped_dataset(), years=[2013])
        assert len(folds) == 1 and folds[0].train_end == CalendarMonth(2013, 12)

    def test_absent_year(self):
        with pytest.raises(DataError, match="2021"):
            make_folds(tfl_shaped_dataset(), years=[2019, 2021])


class TestSynthetic:
    def test_deterministic(self):
        a, b = generate_synthetic(SyntheticSpec(seed=3)), generate_synthetic(SyntheticSpec(seed=3))
        np.testing.assert_array_equal(a.outcome.values, b.outcome.values)
        assert not np.array_equal(a.outcome.values, generate_synthetic(SyntheticSpec(seed=4)).outcome.values)

    def test_covariates_standardized(self):
        ds = generate_synthetic(SyntheticSpec())
        for s in ds.covariates:
            assert abs(s.values.mean()) < 1e-12 and s.values.std(ddof=1) == pytest.approx(1.0)

    def test_degenerate_is_pure_regression(self):
        spec = SyntheticSpec(beta={"a": 1.0}, beta0=2.0, gamma=0.0, v=0.0, v_e=0.0, T=60)
        ds = generate_synthetic(spec)
        np.testing.assert_allclose(ds.outcome.values, 2.0 + ds.get("a").values, atol=1e-12)

    def test_ols_recovery_large_T(self):
        spec = SyntheticSpec(T=2000, v_e=0.0, seed=1)
        ds = generate_synthetic(spec)
        y = ds.outcome.values
        Z = np.column_stack([np.ones(1988), ds.get("temperature").values[12:], ds.get("rainfall").values[12:], y[:-12]])
        coef = np.linalg.lstsq(Z, y[12:], rcond=None)[0]
        np.testing.assert_allclose(coef, [0.0, 0.7, -0.3, 0.3], atol=0.05)

    def test_spec_dict_roundtrip(self):
        spec = SyntheticSpec(beta={"a": 0.5}, T=48)
        assert SyntheticSpec.from_dict(spec.to_dict()) == spec
        with pytest.raises(ValueError, match="unknown"):
            SyntheticSpec.from_dict({"bogus": 1})

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(T=20)


def test_cv_noiseless_fit():
    spec = SyntheticSpec(v=1e-6, v_e=1e-8, T=72, start="2000-01", seed=2)
    ds = generate_synthetic(spec)
    cfg = ModelConfig(("temperature", "rainfall"))
    rep = run_cv(ds, cfg, SamplerSettings(2, 600, 200, 2, seed=1), years=range(2001, 2006))
    assert rep.n_test == 60
    assert rep.adjusted_r2 > 0.99
    assert rep.p == 3
    text = rep.predictions_csv()
    assert len(text.splitlines()) == 61


def test_cv_first_year_has_no_lag():
    ds = generate_synthetic(SyntheticSpec(T=48, seed=5))
    rep = run_cv(ds, ModelConfig(("temperature", "rainfall")), SamplerSettings(2, 300, 100, 2), years=range(2000, 2004))
    first = rep.folds[0]
    assert first.year == 2000 and first.n_test == 0 and first.summary is None
    assert rep.n_test == 36
    again = run_cv(ds, ModelConfig(("temperature", "rainfall")), SamplerSettings(2, 300, 100, 2), years=range(2000, 2004))
    assert again.to_json() == rep.to_json()
