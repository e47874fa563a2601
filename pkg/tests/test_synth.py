import json

import numpy as np
import pytest

from sorn.synth import (LabelingRule, Segment, SynthSpec, autocorrelation, clean_mean_curve, distort_periods,
                        gen_base, generate, inject_noise, inject_slowdowns, sample_durations)


def test_sync_dimension_is_14():
    series, _ = gen_base(SynthSpec(T=20, tasks_per_slot=10))
    assert series.dim == 14


def test_single_tone_slot_means_track_the_mean_curve():
    spec = SynthSpec(tones=[(30.0, 96.0)], T=3000)
    mu = clean_mean_curve(spec)
    d = sample_durations(mu, spec.tasks_per_slot, spec.gamma_shape, np.random.default_rng(0))
    # gamma(k, mu/k) has std mu/sqrt(k)
    se = mu / np.sqrt(spec.gamma_shape) / np.sqrt(spec.tasks_per_slot)
    inside = np.abs(d.mean(axis=1) - mu) <= 3 * se
    assert inside.mean() >= 0.99


def test_no_tones_gives_no_autocorrelation():
    ds = generate(SynthSpec(tones=[], T=3000, n_segments=0))
    e = ds.series.expectation()
    bound = 4 / np.sqrt(e.size)
    for lag in (1, 12, 48, 288):
        assert abs(autocorrelation(e, lag)) < bound


def test_noise_zero_is_identity_and_negative_rejected():
    mu = clean_mean_curve(SynthSpec(T=50))
    out = inject_noise(mu, 0.0, 50.0, np.random.default_rng(1))
    np.testing.assert_array_equal(out, mu)
    with pytest.raises(ValueError):
        inject_noise(mu, -0.1, 50.0)
    with pytest.raises(ValueError):
        SynthSpec(noise=-1)


def test_noise_std_matches_max_amplitude_fraction():
    spec = SynthSpec(T=4000, noise=0.5)
    mu = clean_mean_curve(spec)
    dev = inject_noise(mu, 0.5, spec.max_amplitude, np.random.default_rng(2)) - mu
    target = 0.5 * spec.max_amplitude
    assert abs(dev.std() - target) <= 0.1 * target


def test_max_amplitude_of_default_tones():
    # both tones peak together at t = 0
    assert SynthSpec().max_amplitude == pytest.approx(50.0)


def test_strict_periodicity_and_distortion_lowers_it():
    strict = generate(SynthSpec(T=3000, n_segments=0, seed=4))
    bent = generate(SynthSpec(T=3000, n_segments=0, distortion=0.5, seed=4))
    a0 = autocorrelation(strict.series.expectation(), 288)
    a5 = autocorrelation(bent.series.expectation(), 288)
    assert a0 >= 0.95
    assert a5 < a0


def test_stretch_factors_in_range():
    tl = distort_periods(SynthSpec(T=2000), 0.3, np.random.default_rng(5))
    for s in tl.stretches:
        assert (s > 1).all() and (s <= 1.3).all()
    tl0 = distort_periods(SynthSpec(T=200), 0.0)
    np.testing.assert_allclose(tl0.phases[0], 2 * np.pi * np.arange(200) / 288)


def _clean(T=30, n=400, seed=6):
    return np.random.default_rng(seed).gamma(4.0, 15.0, size=(T, n))


def test_zero_slow_ratio_labels_nothing():
    out, y = inject_slowdowns(_clean(), [Segment(5, 10, 0.0)], LabelingRule(10.0), np.random.default_rng(7))
    assert not y.any()
    np.testing.assert_array_equal(out, _clean())


def test_full_slow_ratio_labels_every_segment_slot():
    segs = [Segment(3, 4, 1.0, 120.0), Segment(15, 6, 1.0, 120.0)]
    _, y = inject_slowdowns(_clean(), segs, LabelingRule(10.0), np.random.default_rng(8))
    inside = np.zeros(30, dtype=bool)
    inside[3:7] = inside[15:21] = True
    assert y[inside].all() and not y[~inside].any()


def test_labels_follow_distributions_not_segments():
    d = _clean()
    shifted = d.copy()
    shifted[10] += 50.0
    y = LabelingRule(10.0).labels(shifted, d)
    assert y.tolist() == [int(t == 10) for t in range(30)]


def test_small_slowdowns_can_stay_unlabeled():
    _, y = inject_slowdowns(_clean(), [Segment(0, 30, 0.02, 30.0)], LabelingRule(10.0), np.random.default_rng(9))
    assert y.sum() < 30


def test_segment_errors():
    with pytest.raises(ValueError, match="overlap"):
        inject_slowdowns(_clean(), [Segment(0, 5), Segment(4, 3)], LabelingRule(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        inject_slowdowns(_clean(), [Segment(28, 5)], LabelingRule(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        Segment(0, 3, slow_ratio=1.5)
    with pytest.raises(ValueError, match="base_duration"):
        generate(SynthSpec(tones=[(40.0, 10.0), (30.0, 5.0)], base_duration=60.0, T=20))


def test_default_anomaly_ratio_near_one_percent():
    ds = generate(SynthSpec())
    assert abs(ds.labels.mean() - 0.01) <= 0.005


def test_generation_is_reproducible(tmp_path):
    spec = SynthSpec(T=300, tasks_per_slot=100, noise=0.2, distortion=0.3, seed=11)
    a, b = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.series.counts, b.series.counts)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = generate(SynthSpec(T=300, tasks_per_slot=100, noise=0.2, distortion=0.3, seed=12))
    assert not np.array_equal(a.series.counts, c.series.counts)
    paths = a.write(tmp_path)
    assert json.loads(paths["spec"].read_text())["seed"] == 11
    assert SynthSpec.from_dict(json.loads(paths["spec"].read_text())) == spec
