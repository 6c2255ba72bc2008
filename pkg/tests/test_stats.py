import numpy as np
import pytest
from scipy import special, stats as scipy_stats

from hdemg import (DegenerateDataError, InvalidInputError, Recording,
                   overall_rms, regularized_incomplete_beta, rms_per_channel,
                   student_t_two_sided_p, two_sample_ttest, zscore_outliers)


def _rec(samples, fs=2000.0, mask=None):
    return Recording(samples=np.asarray(samples, dtype=float), sample_rate=fs,
                     channel_mask=mask)


def test_rms_constant_channel():
    rec = _rec(np.full((100, 1), -3.0))
    assert rms_per_channel(rec)[0] == pytest.approx(3.0, abs=1e-12)


def test_rms_unit_sine_integer_periods():
    fs = 2000.0
    t = np.arange(int(fs))  # 1 s = 50 full periods of 50 Hz
    x = np.sin(2 * np.pi * 50.0 * t / fs)[:, None]
    assert rms_per_channel(_rec(x))[0] == pytest.approx(1 / np.sqrt(2), abs=1e-9)


def test_rms_two_sample_channel():
    # sqrt((9 + 16) / 2), evaluated by hand
    rec = _rec([[3.0], [4.0]])
    assert rms_per_channel(rec)[0] == pytest.approx(3.5355339059327378, abs=1e-12)


def test_rms_includes_masked_channels():
    rec = _rec(np.column_stack([np.full(10, 1.0), np.full(10, 5.0)]),
               mask=[True, False])
    assert rms_per_channel(rec).tolist() == [1.0, 5.0]


def test_rms_sign_flip_and_scaling():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(500, 4))
    base = rms_per_channel(_rec(x))
    assert np.allclose(rms_per_channel(_rec(-x)), base)
    assert np.allclose(rms_per_channel(_rec(2.5 * x)), 2.5 * base)


def test_overall_rms_mean_of_channels():
    rec = _rec(np.column_stack([np.full(10, 2.0), np.full(10, 4.0)]))
    assert overall_rms(rec) == pytest.approx(3.0, abs=1e-12)


def test_overall_rms_identical_channels():
    rng = np.random.default_rng(2)
    ch = rng.normal(size=200)
    rec = _rec(np.tile(ch[:, None], (1, 64)))
    assert overall_rms(rec) == pytest.approx(rms_per_channel(rec)[0], abs=1e-12)


def test_overall_rms_respects_mask():
    rec = _rec(np.column_stack([np.full(10, 2.0), np.full(10, 100.0)]),
               mask=[True, False])
    assert overall_rms(rec, use_mask=True) == pytest.approx(2.0)
    assert overall_rms(rec, use_mask=False) == pytest.approx(51.0)


def test_overall_rms_no_active_channels():
    rec = _rec(np.ones((10, 2)), mask=[False, False])
    with pytest.raises(InvalidInputError):
        overall_rms(rec, use_mask=True)


def test_zscore_flags_planted_outlier():
    # 63 channels at 10 uV, one at 1000 uV: mean 25.46875, sample std 123.75,
    # outlier z = 7.875 (frozen from direct evaluation of the formula)
    values = np.array([10.0] * 63 + [1000.0])
    cs = zscore_outliers(values, threshold=3.0)
    assert np.flatnonzero(cs.outlier).tolist() == [63]
    assert cs.zscore[63] == pytest.approx(7.875, abs=1e-12)
    assert cs.zscore[0] == pytest.approx(-0.125, abs=1e-12)


def test_zscore_degenerate_and_small():
    with pytest.raises(DegenerateDataError):
        zscore_outliers(np.full(8, 4.0))
    with pytest.raises(InvalidInputError):
        zscore_outliers(np.array([1.0]))


def test_zscore_affine_invariance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.normal(size=32)
        a = rng.uniform(0.1, 5.0) * rng.choice([-1.0, 1.0])
        b = rng.uniform(-10, 10)
        flagged = zscore_outliers(v, 1.5).outlier
        assert np.array_equal(zscore_outliers(a * v + b, 1.5).outlier, flagged)


def test_ttest_pooled_derived_example():
    # a=[1..5], b=[2..6]: pooled variance 2.5, se 1.0 -> t = -1, dof = 8;
    # p frozen against scipy.stats.ttest_ind: 0.3465935071
    r = two_sample_ttest([1, 2, 3, 4, 5], [2, 3, 4, 5, 6], variant="pooled")
    assert r.t_statistic == pytest.approx(-1.0, abs=1e-12)
    assert r.dof == 8
    assert r.p_value == pytest.approx(0.3465935070873343, abs=1e-6)


def test_ttest_identical_samples():
    r = two_sample_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t_statistic == 0.0
    assert r.p_value == 1.0


def test_ttest_antisymmetry():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.normal(size=12)
        b = rng.normal(loc=0.5, size=15)
        for variant in ("pooled", "welch"):
            r1 = two_sample_ttest(a, b, variant)
            r2 = two_sample_ttest(b, a, variant)
            assert r1.t_statistic == pytest.approx(-r2.t_statistic, rel=1e-12)
            assert r1.p_value == pytest.approx(r2.p_value, rel=1e-12)


def test_ttest_matches_scipy():
    rng = np.random.default_rng(5)
    for _ in range(25):
        a = rng.normal(size=rng.integers(3, 40))
        b = rng.normal(loc=rng.uniform(-1, 1), scale=rng.uniform(0.5, 2),
                       size=rng.integers(3, 40))
        for variant, equal_var in (("pooled", True), ("welch", False)):
            mine = two_sample_ttest(a, b, variant)
            ref = scipy_stats.ttest_ind(a, b, equal_var=equal_var)
            assert mine.t_statistic == pytest.approx(ref.statistic, rel=1e-10)
            assert mine.p_value == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-12)


def test_ttest_errors():
    with pytest.raises(InvalidInputError):
        two_sample_ttest([1.0], [1.0, 2.0])
    with pytest.raises(DegenerateDataError):
        two_sample_ttest([2.0, 2.0, 2.0], [3.0, 3.0])
    with pytest.raises(InvalidInputError):
        two_sample_ttest([1, 2, 3], [4, 5, 6], variant="bootstrap")


def test_incomplete_beta_against_scipy():
    rng = np.random.default_rng(6)
    for _ in range(200):
        a = rng.uniform(0.2, 50)
        b = rng.uniform(0.2, 50)
        x = rng.uniform(0, 1)
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(
            float(special.betainc(a, b, x)), abs=1e-10)


def test_student_t_p_against_scipy():
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = rng.uniform(-6, 6)
        dof = rng.uniform(1, 200)
        ref = 2 * scipy_stats.t.sf(abs(t), dof)
        assert student_t_two_sided_p(t, dof) == pytest.approx(ref, abs=1e-10)
