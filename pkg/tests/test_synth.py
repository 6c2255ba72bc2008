import numpy as np
import pytest

from hdemg import (InvalidInputError, SynthConfig, generate_muap,
                   generate_spike_train, mix, synth_gesture_dataset, synthesize)
from hdemg.synth import REFRACTORY_S

FS = 2048.0


def test_zero_cov_train_is_periodic():
    train = generate_spike_train(10.0, 0.0, 2.0, FS, seed=0)
    assert 19 <= train.num_spikes <= 21
    isi = np.diff(train.spike_samples)
    assert isi.max() - isi.min() <= 1  # rounding of an exactly periodic train


def test_train_cov_lands_near_target():
    train = generate_spike_train(12.0, 15.0, 20.0, FS, seed=11)
    isi = np.diff(train.spike_samples) / FS
    cov = 100 * isi.std(ddof=1) / isi.mean()
    assert 10.0 <= cov <= 20.0


def test_train_rate_within_15_percent():
    for seed in range(5):
        for rate in (8.0, 15.0, 30.0):
            train = generate_spike_train(rate, 15.0, 10.0, FS, seed=seed)
            spikes = train.spike_samples / FS
            empirical = (train.num_spikes - 1) / (spikes[-1] - spikes[0])
            assert abs(empirical - rate) / rate <= 0.15


def test_train_determinism_and_refractory():
    a = generate_spike_train(20.0, 30.0, 15.0, FS, seed=5)
    b = generate_spike_train(20.0, 30.0, 15.0, FS, seed=5)
    assert np.array_equal(a.spike_samples, b.spike_samples)
    assert np.all(np.diff(a.spike_samples) >= int(REFRACTORY_S * FS) - 1)


def test_train_validation():
    with pytest.raises(InvalidInputError):
        generate_spike_train(-5.0, 0.0, 2.0, FS, seed=0)
    with pytest.raises(InvalidInputError):
        generate_spike_train(10.0, 0.0, -1.0, FS, seed=0)
    with pytest.raises(InvalidInputError):
        generate_spike_train(50.0, 0.0, 2.0, FS, seed=0)  # above 35 Hz


def test_muap_energy_concentrates_at_tiny_spread():
    tpl = generate_muap(16, 40, center_channel=7, spread=0.1, amplitude=5.0)
    energy = np.sum(np.square(tpl.waveforms), axis=1)
    assert energy[7] / energy.sum() >= 0.99


def test_muap_zero_amplitude_rejected():
    with pytest.raises(InvalidInputError):
        generate_muap(8, 32, 4, spread=2.0, amplitude=0.0)


def test_muap_biphasic_integrates_to_zero():
    tpl = generate_muap(4, 64, 1, spread=2.0, amplitude=3.0, seed=1)
    assert abs(tpl.waveforms[1].sum()) < 1e-6 * 3.0 * 64


def test_muap_peak_amplitude_on_center_channel():
    tpl = generate_muap(12, 48, 5, spread=1.5, amplitude=7.0, seed=2)
    assert np.max(np.abs(tpl.waveforms[5])) == pytest.approx(7.0, rel=1e-12)
    assert np.max(np.abs(tpl.waveforms)) == pytest.approx(7.0, rel=1e-12)


def test_muap_validation():
    with pytest.raises(InvalidInputError):
        generate_muap(8, 4, 0, spread=1.0, amplitude=1.0)  # too short
    with pytest.raises(InvalidInputError):
        generate_muap(8, 32, 9, spread=1.0, amplitude=1.0)  # bad center
    with pytest.raises(InvalidInputError):
        generate_muap(8, 32, 0, spread=0.0, amplitude=1.0)


def _single_spike_train(k, duration, fs=FS):
    from hdemg import SpikeTrain
    return SpikeTrain(spike_samples=np.array([k]), sample_rate=fs,
                      duration_samples=duration)


def test_mix_single_impulse_places_template():
    tpl = generate_muap(6, 32, 2, spread=1.0, amplitude=4.0)
    train = _single_spike_train(100, 400)
    rec = mix([train], [tpl], snr_db=np.inf, seed=0)
    assert rec.samples.shape == (400, 6)
    assert np.array_equal(rec.samples[100:132, :], tpl.waveforms.T)
    out = rec.samples.copy()
    out[100:132, :] = 0.0
    assert not out.any()


def test_mix_superposition_is_exact():
    t1 = _single_spike_train(50, 500)
    t2 = _single_spike_train(200, 500)
    tp1 = generate_muap(6, 32, 1, spread=1.0, amplitude=4.0, seed=1)
    tp2 = generate_muap(6, 32, 4, spread=1.0, amplitude=2.0, seed=2)
    both = mix([t1, t2], [tp1, tp2], snr_db=np.inf, seed=0)
    one = mix([t1], [tp1], snr_db=np.inf, seed=0, num_samples=500)
    two = mix([t2], [tp2], snr_db=np.inf, seed=0, num_samples=500)
    assert np.array_equal(both.samples, one.samples + two.samples)


def test_mix_no_units_gives_configured_noise():
    rec = mix([], [], snr_db=20.0, seed=3, num_samples=40000, sample_rate=FS,
              num_channels=8, noise_rms=2.5)
    rms = np.sqrt(np.mean(np.square(rec.samples), axis=0))
    assert np.all(np.abs(rms - 2.5) / 2.5 < 0.05)


def test_mix_unit_count_mismatch():
    tpl = generate_muap(6, 32, 2, spread=1.0, amplitude=4.0)
    with pytest.raises(InvalidInputError):
        mix([], [tpl], snr_db=20.0, seed=0)


def test_configured_snr_matches_measured():
    cfg = SynthConfig(num_channels=16, num_units=4, duration_s=10.0,
                      snr_db=20.0, seed=7)
    gt = synthesize(cfg)
    clean = mix(gt.trains, gt.templates, snr_db=np.inf, seed=0,
                num_samples=gt.recording.num_samples)
    noise = gt.recording.samples - clean.samples
    active = np.any(clean.samples != 0.0, axis=1)
    measured = 10 * np.log10(np.mean(np.square(clean.samples[active]))
                             / np.mean(np.square(noise)))
    assert abs(measured - 20.0) <= 0.5


def test_synthesize_reproducible():
    cfg = SynthConfig(num_channels=16, num_units=3, duration_s=5.0, seed=42)
    a = synthesize(cfg)
    b = synthesize(cfg)
    assert np.array_equal(a.recording.samples, b.recording.samples)
    for ta, tb in zip(a.trains, b.trains):
        assert np.array_equal(ta.spike_samples, tb.spike_samples)
    for pa, pb in zip(a.templates, b.templates):
        assert np.array_equal(pa.waveforms, pb.waveforms)


def test_gesture_dataset_counts_and_determinism():
    ds1 = synth_gesture_dataset(num_classes=3, windows_per_class=5,
                                num_channels=24, seed=1)
    ds2 = synth_gesture_dataset(num_classes=3, windows_per_class=5,
                                num_channels=24, seed=1)
    assert len(ds1) == 15
    assert np.array_equal(ds1.windows, ds2.windows)
    assert np.array_equal(ds1.labels, ds2.labels)
    assert np.bincount(ds1.labels).tolist() == [5, 5, 5]


def test_gesture_dataset_two_disjoint_classes_centroid_separable():
    ds = synth_gesture_dataset(num_classes=2, windows_per_class=30,
                               num_channels=24, snr_db=30.0, seed=4)
    energy = np.mean(np.square(ds.windows), axis=1)       # (N, C)
    centroids = np.stack([energy[ds.labels == g].mean(axis=0) for g in (0, 1)])
    dists = ((energy[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    predicted = dists.argmin(axis=1)
    assert np.array_equal(predicted, ds.labels)


def test_gesture_dataset_window_too_short():
    with pytest.raises(InvalidInputError):
        synth_gesture_dataset(num_classes=2, windows_per_class=4,
                              num_channels=16, window_ms=2.0, seed=0)
