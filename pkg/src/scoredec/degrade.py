"""Seeded synthetic codec degradation.

Stands in for a first-stage neural codec: band limiting (over-smoothed
spectrum), mu-law quantization noise, a fixed per-frequency phase rotation
(phase distortion) and additive high-band noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin

from scoredec.audio_io import Waveform
from scoredec.spectral import StftConfig, istft, stft

LOWPASS_TAPS = 127
# fine enough to resolve individual partials, so the rotation acts as a true all-pass
PHASE_WARP_STFT = StftConfig(512, 128)


@dataclass(frozen=True)
class DegradeConfig:
    mu_law_levels: int = 256
    lowpass_cutoff_hz: float = 3000.0
    allpass_strength: float = 0.3
    noise_db: float = -30.0
    seed: int = 0

    def __post_init__(self):
        if self.mu_law_levels < 2:
            raise ValueError("mu_law_levels must be >= 2")
        if not self.lowpass_cutoff_hz > 0:
            raise ValueError("lowpass cutoff must be positive")
        if not 0.0 <= self.allpass_strength <= 1.0:
            raise ValueError("allpass_strength must lie in [0, 1]")

    def check_rate(self, sample_rate_hz: int) -> None:
        if self.lowpass_cutoff_hz >= sample_rate_hz / 2:
            raise ValueError(f"cutoff {self.lowpass_cutoff_hz} Hz is not below Nyquist ({sample_rate_hz / 2} Hz)")


def mu_law_quantize(w: Waveform, levels: int) -> Waveform:
    """Mu-law companding with ``mu = levels - 1`` and a mid-tread quantizer.

    Codes are multiples of ``2 / (levels - 1)`` in the compressed domain, so
    zero is always representable and at most ``levels`` values occur.
    """
    x = w.samples
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if np.any(np.abs(x) > 1.0):
        raise ValueError("mu-law quantization needs samples in [-1, 1]")
    mu = levels - 1.0
    c = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    step = 2.0 / (levels - 1)
    half = np.floor(1.0 / step + 1e-9)
    q = np.clip(np.round(c / step), -half, half) * step
    out = np.sign(q) * np.expm1(np.abs(q) * np.log1p(mu)) / mu
    return Waveform(out, w.sample_rate_hz)


def lowpass_taps(cutoff_hz: float, sample_rate_hz: int, numtaps: int = LOWPASS_TAPS) -> np.ndarray:
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {sample_rate_hz / 2}) Hz")
    # firwin normalizes the taps to unit DC gain
    return firwin(numtaps, cutoff_hz, window="blackman", fs=sample_rate_hz)


def _filter_same(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # odd-length linear-phase FIR: 'same' convolution removes the (N-1)/2 delay
    full = np.convolve(x, taps, mode="full")
    d = (taps.size - 1) // 2
    return full[d:d + x.size]


def lowpass(w: Waveform, cutoff_hz: float) -> Waveform:
    return Waveform(_filter_same(w.samples, lowpass_taps(cutoff_hz, w.sample_rate_hz)), w.sample_rate_hz)


def warp_phases(n_bins: int, seed: int) -> np.ndarray:
    """Smooth seeded phase offsets per bin, zero at DC and Nyquist, peak |theta| = pi."""
    rng = np.random.default_rng(seed)
    nu = np.linspace(0.0, 1.0, n_bins)
    amps = rng.normal(size=3)
    phis = rng.uniform(0, 2 * np.pi, size=3)
    curve = sum(a * np.cos(np.pi * (j + 1) * nu + ph) for j, (a, ph) in enumerate(zip(amps, phis)))
    curve = curve * np.sin(np.pi * nu)
    peak = np.max(np.abs(curve))
    return np.pi * curve / peak if peak > 0 else curve


def phase_warp(w: Waveform, strength: float, seed: int, cfg: StftConfig = PHASE_WARP_STFT) -> Waveform:
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must lie in [0, 1]")
    spec = stft(w, cfg)
    theta = strength * warp_phases(cfg.n_bins, seed)
    rotated = spec.__class__(spec.bins * np.exp(1j * theta)[None, :], spec.domain_tag, cfg, w.sample_rate_hz)
    return Waveform(istft(rotated, cfg, len(w)).samples, w.sample_rate_hz)


def highband_noise(n: int, sample_rate_hz: int, cutoff_hz: float, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    if cutoff_hz >= sample_rate_hz / 2:
        return white
    return white - _filter_same(white, lowpass_taps(cutoff_hz, sample_rate_hz))


def degrade_pipeline(w: Waveform, cfg: DegradeConfig, utterance_index: int = 0) -> Waveform:
    """lowpass -> mu-law -> phase warp -> additive high-band noise.

    The phase rotation depends only on ``cfg.seed`` (a fixed codec
    characteristic); the noise stream is seeded by ``(cfg.seed, utterance_index)``.
    """
    cfg.check_rate(w.sample_rate_hz)
    x = lowpass(w, cfg.lowpass_cutoff_hz)
    x = Waveform(np.clip(x.samples, -1.0, 1.0), x.sample_rate_hz)
    x = mu_law_quantize(x, cfg.mu_law_levels)
    x = phase_warp(x, cfg.allpass_strength, cfg.seed)
    rng = np.random.default_rng([cfg.seed, utterance_index])
    noise = highband_noise(len(x), x.sample_rate_hz, cfg.lowpass_cutoff_hz, rng)
    sig_pow = float(np.mean(w.samples ** 2))
    noise_pow = float(np.mean(noise ** 2))
    if sig_pow > 0 and noise_pow > 0:
        noise *= np.sqrt(sig_pow * 10.0 ** (cfg.noise_db / 10.0) / noise_pow)
    else:
        noise[:] = 0.0
    return Waveform(x.samples + noise, x.sample_rate_hz)
