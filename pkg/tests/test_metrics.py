import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import tone
from scoredec.audio_io import Waveform
from scoredec.metrics import (REPORT_HEADER, SI_SDR_CAP_DB, EvalRow, corpus_average, evaluate_pair, format_report,
                              phase_error, si_sdr, wav_mse)
from scoredec.spectral import TOY_STFT, stft


def test_wav_mse_examples(rng):
    x = rng.normal(size=100)
    assert wav_mse(x, x) == 0.0
    assert wav_mse(np.zeros(10), np.full(10, 0.1)) == pytest.approx(0.01)
    s = np.sin(np.linspace(0, 20, 500))
    assert wav_mse(s, -s) == pytest.approx(4 * np.mean(s ** 2))
    with pytest.raises(ValueError):
        wav_mse(np.zeros(3), np.zeros(4))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 16, elements=st.integers(-1000, 1000).map(lambda v: v / 100)),
       arrays(np.float64, 16, elements=st.integers(-1000, 1000).map(lambda v: v / 100)))
def test_wav_mse_metric_squared(a, b):
    assert wav_mse(a, b) == wav_mse(b, a)
    assert (wav_mse(a, b) == 0) == np.array_equal(a, b)


def test_si_sdr_scaled_copy_hits_cap(rng):
    x = rng.normal(size=1000)
    for a in (1.0, 0.3, -2.0, 50.0):
        assert si_sdr(x, a * x) == pytest.approx(SI_SDR_CAP_DB, abs=1e-6)


def test_si_sdr_orthogonal_equal_energy_is_zero_db(rng):
    r = rng.normal(size=4096)
    n = rng.normal(size=4096)
    n -= (n @ r) / (r @ r) * r
    n *= math.sqrt((r @ r) / (n @ n))
    assert abs(si_sdr(r, r + n)) < 1e-9


def test_si_sdr_zero_reference_rejected():
    with pytest.raises(ValueError):
        si_sdr(np.zeros(8), np.ones(8))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_si_sdr_scale_invariant(seed, a):
    r = np.random.default_rng(seed)
    ref, est = r.normal(size=256), r.normal(size=256)
    assert si_sdr(ref, a * est) == pytest.approx(si_sdr(ref, est), abs=1e-9)


def test_more_noise_orders_metrics(rng):
    ref = rng.normal(size=2048)
    n = rng.normal(size=2048)
    n -= (n @ ref) / (ref @ ref) * ref
    prev_sdr, prev_mse = math.inf, -math.inf
    for g in (0.1, 0.3, 1.0, 3.0):
        s, m = si_sdr(ref, ref + g * n), wav_mse(ref, ref + g * n)
        assert s < prev_sdr and m > prev_mse
        prev_sdr, prev_mse = s, m


def test_phase_error_examples():
    assert phase_error(1.0, 1.0) == 0
    assert phase_error(math.pi - 0.1, -math.pi + 0.1) == pytest.approx(0.2, abs=1e-12)
    assert phase_error(0.5, 0.5 - math.pi) == pytest.approx(math.pi)
    assert phase_error(math.pi, 0.0) == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        phase_error(np.zeros(2), np.zeros(3))


def test_phase_error_million_pairs():
    r = np.random.default_rng(8)
    a = r.uniform(-math.pi, math.pi, 1_000_000)
    b = r.uniform(-math.pi, math.pi, 1_000_000)
    e = phase_error(a, b)
    assert e.min() >= 0 and e.max() <= math.pi
    np.testing.assert_array_equal(e, phase_error(b, a))


principal = st.floats(-math.pi, math.pi, exclude_min=True)


@settings(max_examples=500, deadline=None)
@given(principal, principal)
def test_phase_error_properties(a, b):
    e = float(phase_error(a, b))
    assert 0 <= e <= math.pi
    assert e == float(phase_error(b, a))
    # agrees with distance on the unit circle
    assert e == pytest.approx(abs(math.atan2(math.sin(a - b), math.cos(a - b))), abs=1e-9)


def test_evaluate_identity():
    w = tone(440, 4000)
    row = evaluate_pair(w, w, TOY_STFT, "u")
    assert row.wav_mse == 0 and row.si_sdr_db == pytest.approx(SI_SDR_CAP_DB) and row.phase_err_rad == 0


def test_half_period_shift_gives_near_max_phase_error():
    rate, k = 8000, 9
    f = k * rate / TOY_STFT.fft_size
    n = 4000
    ref = tone(f, n, rate)
    half = TOY_STFT.fft_size // (2 * k)
    assert half * 2 * k == TOY_STFT.fft_size
    # the tone period is an integer number of samples, so a circular shift by half of it flips the sign
    shifted = Waveform(np.roll(ref.samples, half), rate)
    np.testing.assert_allclose(shifted.samples[half:], -ref.samples[half:], atol=1e-12)
    a = stft(ref, TOY_STFT).bins[3:-3, k]
    b = stft(shifted, TOY_STFT).bins[3:-3, k]
    err = phase_error(np.angle(b), np.angle(a))
    assert np.all(err > math.pi - 1e-6)
    assert evaluate_pair(ref, shifted, TOY_STFT).phase_err_rad > 0.9 * math.pi


def test_evaluate_truncates_and_checks_rate():
    a, b = tone(300, 4000), tone(300, 3500)
    row = evaluate_pair(a, b, TOY_STFT)
    assert row.wav_mse == 0
    with pytest.raises(ValueError):
        evaluate_pair(a, Waveform(b.samples, 16000), TOY_STFT)


def test_report_format():
    rows = [EvalRow("b", 1.0, 2.0, 0.5), EvalRow("a", 3.0, 4.0, 1.5)]
    text = format_report(rows)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(REPORT_HEADER) == "utt_id,wav_mse,si_sdr_db,phase_err_rad"
    assert [l.split(",")[0] for l in lines[1:]] == ["a", "b", "AVERAGE"]
    assert lines[-1] == "AVERAGE,2.0,3.0,1.0"
    avg = corpus_average(rows)
    assert (avg.wav_mse, avg.si_sdr_db, avg.phase_err_rad) == (2.0, 3.0, 1.0)
