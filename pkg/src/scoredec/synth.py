"""Speech-like synthetic test signals: voiced harmonics under moving formants,
syllabic amplitude envelope and short unvoiced bursts."""

from __future__ import annotations

import numpy as np

from scoredec.audio_io import Waveform


def _smooth_walk(rng, n, n_knots, lo, hi):
    knots = rng.uniform(lo, hi, size=n_knots)
    return np.interp(np.linspace(0, n_knots - 1, n), np.arange(n_knots), knots)


def speech_like(duration_s: float = 1.0, sample_rate_hz: int = 8000, seed: int = 0, peak: float = 0.5) -> Waveform:
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    nyq = sample_rate_hz / 2
    knots = max(2, int(duration_s * 4) + 2)
    f0 = _smooth_walk(rng, n, knots, 90.0, 240.0)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate_hz
    formants = [_smooth_walk(rng, n, knots, lo, hi) for lo, hi in ((300, 850), (900, 2200), (2300, 3200))]
    widths = (120.0, 180.0, 250.0)
    voiced = np.zeros(n)
    for h in range(1, int(nyq * 0.95 / 90.0) + 1):
        fh = h * f0
        env = sum(np.exp(-0.5 * ((fh - fc) / bw) ** 2) for fc, bw in zip(formants, widths))
        env = (env + 0.05) / h ** 0.5 * (fh < 0.95 * nyq)
        voiced += env * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    t = np.arange(n) / sample_rate_hz
    syll_rate = rng.uniform(3.0, 5.0)
    envelope = np.clip(np.sin(np.pi * syll_rate * t + rng.uniform(0, np.pi)) ** 2 * 1.2, 0.05, 1.0)
    x = voiced * envelope
    # a couple of fricative-like noise bursts
    for _ in range(2):
        start = int(rng.uniform(0, max(1, n - 0.1 * sample_rate_hz)))
        length = int(0.06 * sample_rate_hz)
        burst = np.diff(rng.standard_normal(length + 1)) * np.hanning(length)
        x[start:start + length] += 0.3 * np.std(voiced) * burst[: n - start]
    x = x * (peak / np.max(np.abs(x)))
    return Waveform(x, sample_rate_hz)


def toy_corpus(n_clips: int, duration_s: float = 1.0, sample_rate_hz: int = 8000, seed: int = 0) -> list[Waveform]:
    return [speech_like(duration_s, sample_rate_hz, seed=seed * 100003 + i) for i in range(n_clips)]
