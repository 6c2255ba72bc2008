import numpy as np
import pytest

from hdemg import (InsufficientSpikesError, InvalidInputError, MotorUnit,
                   SpikeTrain, clean_units, cov_isi, dedup_units, firing_rate,
                   rate_of_agreement)
from hdemg.metrics import match_spikes

FS = 1000.0


def _unit(spikes, sil=0.9, fs=FS):
    spikes = np.asarray(spikes, dtype=np.int64)
    return MotorUnit(spikes=spikes, sample_rate=fs, sil=sil, cov_isi=0.0,
                     firing_rate=0.0)


def _train(spikes, fs=FS, duration=100000):
    return SpikeTrain(spike_samples=np.asarray(spikes, dtype=np.int64),
                      sample_rate=fs, duration_samples=duration)


def test_cov_isi_periodic_is_zero():
    unit = _unit(np.arange(0, 5000, 100))
    assert cov_isi(unit) == pytest.approx(0.0, abs=1e-12)


def test_cov_isi_hand_example():
    # ISIs of 100, 100, 200 ms: 100 * 57.735/133.333 = 43.301270 (frozen)
    unit = _unit([0, 100, 200, 400])
    assert cov_isi(unit) == pytest.approx(43.30127018922193, abs=1e-9)


def test_cov_isi_needs_three_spikes():
    with pytest.raises(InsufficientSpikesError):
        cov_isi(_unit([0, 100]))


def test_firing_rate_examples():
    assert firing_rate(_unit(np.arange(0, 2100, 100))) == pytest.approx(10.0)
    assert firing_rate(_unit([0, 500])) == pytest.approx(2.0)
    with pytest.raises(InsufficientSpikesError):
        firing_rate(_unit([42]))


def test_metrics_time_shift_invariant():
    rng = np.random.default_rng(0)
    spikes = np.cumsum(rng.integers(50, 150, size=40))
    a, b = _unit(spikes), _unit(spikes + 12345)
    assert cov_isi(a) == pytest.approx(cov_isi(b))
    assert firing_rate(a) == pytest.approx(firing_rate(b))


def test_clean_units_thresholds():
    keep = MotorUnit(spikes=np.arange(0, 3000, 80), sample_rate=FS, sil=0.9,
                     cov_isi=22.8, firing_rate=12.46)
    drop_cov = MotorUnit(spikes=np.arange(0, 3000, 80), sample_rate=FS, sil=0.9,
                         cov_isi=43.3, firing_rate=12.0)
    drop_rate = MotorUnit(spikes=np.arange(0, 3000, 80), sample_rate=FS, sil=0.9,
                          cov_isi=10.0, firing_rate=40.0)
    assert clean_units([keep, drop_cov, drop_rate]) == [keep]
    assert clean_units([]) == []


def test_clean_units_idempotent():
    units = [MotorUnit(spikes=np.arange(0, 3000, 80), sample_rate=FS, sil=0.9,
                       cov_isi=c, firing_rate=r)
             for c, r in [(10, 10), (35, 10), (10, 40), (29.9, 34.9)]]
    once = clean_units(units)
    assert clean_units(once) == once


def test_roa_identical_and_disjoint():
    t = _train([100, 200, 300])
    assert rate_of_agreement(_unit([100, 200, 300]), t, tol_ms=1.0) == 1.0
    assert rate_of_agreement(_unit([150, 250, 350]), t, tol_ms=1.0) == 0.0


def test_roa_derived_example():
    # truth {100,200,300}, est {101,205,400}, tol 2 samples:
    # 1 matched, 2 missed, 2 false -> 0.2
    t = _train([100, 200, 300])
    est = _unit([101, 205, 400])
    assert rate_of_agreement(est, t, tol_ms=2.0) == pytest.approx(0.2)


def test_roa_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = np.unique(rng.integers(0, 5000, size=30))
        b = np.unique(rng.integers(0, 5000, size=25))
        r1 = rate_of_agreement(_unit(a), _train(b), tol_ms=3.0)
        r2 = rate_of_agreement(_unit(b), _train(a), tol_ms=3.0)
        assert r1 == pytest.approx(r2)


def test_roa_requires_same_rate():
    with pytest.raises(InvalidInputError):
        rate_of_agreement(_unit([1, 2], fs=1000.0), _train([1, 2], fs=2048.0))


def test_match_spikes_greedy_one_to_one():
    assert match_spikes(np.array([10, 11]), np.array([10]), 2) == 1
    assert match_spikes(np.array([10]), np.array([9, 11]), 1) == 1


def test_dedup_keeps_higher_sil_duplicate():
    spikes = np.arange(0, 4000, 100)
    low = _unit(spikes, sil=0.90)
    high = _unit(spikes, sil=0.95)
    survivors = dedup_units([low, high])
    assert survivors == [high]


def test_dedup_keeps_disjoint_units():
    a = _unit(np.arange(0, 4000, 100), sil=0.9)
    b = _unit(np.arange(37, 4000, 100), sil=0.8)
    assert dedup_units([a, b], tol_ms=0.5) == [a, b]


def test_dedup_idempotent():
    rng = np.random.default_rng(2)
    units = [_unit(np.unique(rng.integers(0, 8000, size=60)),
                   sil=float(rng.uniform(0.5, 1.0))) for _ in range(6)]
    once = dedup_units(units)
    assert dedup_units(once) == once


def _brute_force_dedup(units, share_threshold, tol):
    """Independent formulation: repeatedly take the best-SIL survivor and
    delete everything sharing too many of the smaller train's spikes."""
    remaining = list(range(len(units)))
    kept = []
    while remaining:
        best = min(remaining, key=lambda i: (-units[i].sil, i))
        kept.append(best)
        remaining.remove(best)
        still = []
        for j in remaining:
            a, b = units[best].spikes, units[j].spikes
            share = match_spikes(a, b, tol) / min(a.size, b.size)
            if share <= share_threshold:
                still.append(j)
        remaining = still
    return [units[i] for i in sorted(kept)]


def test_dedup_matches_brute_force_on_small_sets():
    rng = np.random.default_rng(3)
    for trial in range(200):
        n = int(rng.integers(1, 6))
        units = []
        base = np.unique(rng.integers(0, 3000, size=40))
        for _ in range(n):
            if rng.random() < 0.5 and len(units):
                # jittered copy of an earlier unit -> likely duplicate
                src = units[int(rng.integers(0, len(units)))].spikes
                spikes = np.unique(src + rng.integers(-1, 2, size=src.size))
            else:
                spikes = np.unique(rng.integers(0, 3000, size=int(rng.integers(10, 40))))
            units.append(_unit(spikes, sil=float(rng.uniform(0.5, 1.0))))
        mine = dedup_units(units, share_threshold=0.3, tol_ms=2.0)
        ref = _brute_force_dedup(units, 0.3, tol=2)
        assert [id(u) for u in mine] == [id(u) for u in ref]
    del base


def test_dedup_chain_case():
    # A~B share 50%, B~C share 50%, A,C disjoint: only the best of {A,B}
    # survives from that pair; C survives unless it duplicates the survivor.
    a = _unit(np.arange(0, 2000, 100), sil=0.95)        # 20 spikes
    b_spikes = np.concatenate([np.arange(0, 1000, 100),      # 10 shared with A
                               np.arange(1050, 2050, 100)])  # 10 shared with C
    b = _unit(np.sort(b_spikes), sil=0.90)
    c = _unit(np.arange(1050, 3050, 100), sil=0.85)
    survivors = dedup_units([a, b, c], share_threshold=0.3, tol_ms=0.5)
    ref = _brute_force_dedup([a, b, c], 0.3, tol=0)
    assert survivors == ref
    assert a in survivors and b not in survivors
