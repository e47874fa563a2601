import math

import numpy as np
import pytest

from sorn.model import TrainConfig
from sorn.theorems import (FourierSignal, TwoToneSignal, closed_form_general, closed_form_weight,
                           compare_standard_vs_skimming, dominance_report, fit_tones, quadrature_general,
                           quadrature_weight, simpson_weights, verify_fourier_random)


def test_closed_form_at_zero_lag():
    sig = TwoToneSignal(2.0, 1.0, 1, 2)
    assert sig.p == 2
    assert closed_form_weight(sig, 0.0) == 5.0


def test_closed_form_periodic_in_p_and_peaks_at_T1():
    sig = TwoToneSignal(3.0, 1.0, 2, 3)
    assert closed_form_weight(sig, sig.p) == pytest.approx(closed_form_weight(sig, 0.0), rel=1e-12)
    c1_term = sig.p / 2 * sig.c1 ** 2 * math.cos(sig.w1 * sig.T1)
    assert c1_term == pytest.approx(sig.p / 2 * sig.c1 ** 2, rel=1e-12)


def test_signal_validation():
    with pytest.raises(ValueError):
        TwoToneSignal(2.0, 1.0, 2, 2)
    with pytest.raises(ValueError):
        FourierSignal(0.0, (1.0,), ())


def test_simpson_integrates_cubics_exactly():
    x = np.linspace(0, 2, 11)
    assert (simpson_weights(10, 0.2) @ x ** 3) == pytest.approx(4.0, rel=1e-13)
    with pytest.raises(ValueError):
        simpson_weights(5, 0.1)


@pytest.mark.parametrize("a,b,c1,c2", [(1, 2, 2.0, 1.0), (3, 4, 1.0, 0.5), (2, 3, 3.0, 1.0)])
def test_quadrature_matches_closed_form(a, b, c1, c2):
    sig = TwoToneSignal(c1, c2, a, b)
    lags = np.linspace(0, sig.p, 37)
    q = quadrature_weight(sig, 0.0, lags, sig.p / 20000)
    err = np.abs(q - closed_form_weight(sig, lags)) / (c1 ** 2 + c2 ** 2)
    assert err.max() <= 1e-6


def test_quadrature_shift_invariant_in_start():
    sig = TwoToneSignal(2.0, 1.0, 2, 3)
    lags = np.array([0.0, 0.7, 1.9, 4.3])
    q0 = quadrature_weight(sig, 0.0, lags, sig.p / 20000)
    q1 = quadrature_weight(sig, 0.37 * sig.p, lags, sig.p / 20000)
    assert np.abs(q0 - q1).max() / np.abs(q0).max() < 1e-8


def test_single_tone_orthogonality():
    sig = TwoToneSignal(1.5, 0.0, 2, 5)
    lags = np.array([0.0, 0.3, 1.1, 2.5])
    q = quadrature_weight(sig, 0.0, lags, sig.p / 20000)
    np.testing.assert_allclose(q, sig.p / 2 * 1.5 ** 2 * np.cos(sig.w1 * lags), atol=1e-8)


def test_constant_fourier_signal():
    sig = FourierSignal(1.7, (0.0, 0.0), (0.0, 0.0), p=3.0)
    np.testing.assert_allclose(closed_form_general(sig, np.linspace(0, 3, 7)), 1.7 ** 2 * 3 / 4, rtol=1e-15)


def test_general_form_specializes_to_two_tones():
    # a_1 cos + b_2 sin with p = lcm(1, 2) = 2 is the two-tone signal with a=1, b=2
    two = TwoToneSignal(2.0, 0.5, 1, 2)
    gen = FourierSignal(0.0, (2.0, 0.0), (0.0, 0.5), p=2.0)
    t = np.linspace(0, 2, 9)
    np.testing.assert_allclose(gen(t), two(t), atol=1e-14)
    np.testing.assert_allclose(closed_form_general(gen, t), closed_form_weight(two, t), rtol=1e-13)


def test_padding_with_zero_coefficient_changes_nothing():
    sig = FourierSignal.random(4, np.random.default_rng(0))
    longer = FourierSignal(sig.a0, sig.a + (0.0,), sig.b + (0.0,), sig.p)
    t = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(closed_form_general(sig, t), closed_form_general(longer, t))


def test_random_fourier_quadrature_agrees():
    rep = verify_fourier_random(n_signals=3, n_lags=10, step_divisor=20000, seed=1)
    assert rep["passed"] and rep["max_rel_error"] <= 1e-6
    sig = FourierSignal.random(5, np.random.default_rng(2), p=2.0)
    q = quadrature_general(sig, 0.4, 0.0, 2.0 / 20000)
    assert abs(q - float(closed_form_general(sig, 0.0))) / sig.energy_scale() <= 1e-6


def test_dominant_period_is_high_amplitude_tone():
    rep = dominance_report(TwoToneSignal(2.0, 1.0, 2, 3))
    assert rep.at_multiple_of_T1 and rep.dominant_period == rep.T1
    np.testing.assert_allclose(rep.maximizers, [3.0], atol=2 * 6 / 20000)
    # brute force: interior local maxima of a dense grid (the edges near 0 and p are the trivial self-match)
    sig = TwoToneSignal(2.0, 1.0, 2, 3)
    lags = np.linspace(0, sig.p, 60001)
    w = closed_form_weight(sig, lags)
    inner = np.flatnonzero((w[1:-1] > w[:-2]) & (w[1:-1] > w[2:])) + 1
    top = lags[inner[np.isclose(w[inner], w[inner].max(), rtol=1e-12)]]
    np.testing.assert_allclose(top, [3.0], atol=1e-3)


def test_swapping_tones_swaps_dominant_period():
    base = dominance_report(TwoToneSignal(2.0, 1.0, 2, 3))
    swapped = dominance_report(TwoToneSignal(1.0, 2.0, 3, 2))
    assert base.dominant_period == 3.0
    assert swapped.at_multiple_of_T2_only and swapped.dominant_period == swapped.T2 == 3.0


def test_equal_amplitudes_rejected():
    with pytest.raises(ValueError):
        dominance_report(TwoToneSignal(1.0, 1.0, 2, 3))


def test_fit_tones_recovers_exact_components():
    t = np.arange(500.0)
    hi, lo = 5 * np.sin(2 * np.pi * t / 48), np.cos(2 * np.pi * t / 12 + 0.4)
    fh, fl = fit_tones(hi + lo + 3.0, t, [48, 12])
    np.testing.assert_allclose(fh, hi, atol=1e-9)
    np.testing.assert_allclose(fl, lo, atol=1e-9)


def test_single_tone_input_gives_comparable_models():
    t = np.arange(400.0)
    hi = 2 * np.sin(2 * np.pi * t / 24)
    zero = np.zeros_like(t)
    cfg = TrainConfig(window_length=48, patch_size=2, learning_rate=0.01, epochs=2, batch_size=64, disable_ot=True)
    cmp = compare_standard_vs_skimming(hi, [hi, zero], [24, 12], cfg)
    scale = np.sqrt(np.mean(hi ** 2))
    ratio = cmp.high_rmse_skimming / cmp.high_rmse_standard
    assert 0.5 < ratio < 2.0
    assert max(cmp.low_rmse_skimming, cmp.low_rmse_standard) < 0.05 * scale
    assert cmp.first_layer_corr_low == 0.0
