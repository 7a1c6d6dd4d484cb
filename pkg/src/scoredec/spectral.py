"""STFT/iSTFT and power-law amplitude companding of complex spectra."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from scoredec.audio_io import Waveform

RAW = "raw"
COMPANDED = "companded"

SPEC_MAGIC = b"CSPG"
FLAG_COMPANDED = 1


class DomainError(ValueError):
    """Operation applied to a spectrogram in the wrong amplitude domain."""


def hann_periodic(n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


_WINDOWS = {"hann": hann_periodic}


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 510
    hop_size: int = 320
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size <= 0 or self.hop_size <= 0:
            raise ValueError("fft_size and hop_size must be positive")
        if self.hop_size > self.fft_size:
            raise ValueError(f"hop_size {self.hop_size} exceeds fft_size {self.fft_size}")
        if self.window not in _WINDOWS:
            raise ValueError(f"unknown window {self.window!r}")
        floor = self.overlap_floor()
        if floor <= 1e-8:
            raise ValueError(
                f"squared-window overlap-add vanishes (min {floor:.3g}) for fft {self.fft_size} hop {self.hop_size}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def pad(self) -> int:
        return self.fft_size // 2

    def window_array(self) -> np.ndarray:
        return _WINDOWS[self.window](self.fft_size)

    def overlap_floor(self) -> float:
        """Minimum squared-window overlap-add over one steady-state hop period."""
        w2 = self.window_array() ** 2
        n, h = self.fft_size, self.hop_size
        reps = -(-n // h) + 1
        acc = np.zeros(n + reps * h)
        for i in range(reps + 1):
            seg = acc[i * h:i * h + n]
            seg += w2[:seg.shape[0]]
        # samples from n onward are covered by ceil(n/h) frames in steady state
        return float(acc[n:n + h].min())

    def n_frames(self, length: int) -> int:
        span = length + 2 * self.pad - self.fft_size
        return 1 + max(0, -(-span // self.hop_size))


FULLBAND_STFT = StftConfig(510, 320)
TOY_STFT = StftConfig(126, 64)


@dataclass(frozen=True)
class CompandingConfig:
    alpha: float = 0.5
    beta: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    def max_unit_magnitude(self) -> float:
        """Largest raw magnitude whose companded amplitude stays <= 1."""
        return (1.0 / self.beta) ** (1.0 / self.alpha)


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray
    domain_tag: str = RAW
    stft_config: StftConfig = field(default_factory=StftConfig)
    sample_rate_hz: int | None = None

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.complex128)
        if b.ndim != 2:
            raise ValueError(f"spectrogram must be frames x bins, got shape {b.shape}")
        if self.domain_tag not in (RAW, COMPANDED):
            raise ValueError(f"unknown domain tag {self.domain_tag!r}")
        if not np.all(np.isfinite(b)):
            raise ValueError("spectrogram contains non-finite entries")
        object.__setattr__(self, "bins", b)

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]

    @property
    def shape(self):
        return self.bins.shape

    def to_state(self) -> np.ndarray:
        """Real/imaginary parts stacked as two channels, shape (2, frames, bins)."""
        return np.stack([self.bins.real, self.bins.imag])

    @classmethod
    def from_state(cls, state: np.ndarray, domain_tag: str, stft_config: StftConfig,
                   sample_rate_hz: int | None = None) -> "ComplexSpectrogram":
        state = np.asarray(state, dtype=np.float64)
        if state.ndim != 3 or state.shape[0] != 2:
            raise ValueError(f"state must have shape (2, frames, bins), got {state.shape}")
        return cls(state[0] + 1j * state[1], domain_tag, stft_config, sample_rate_hz)


def stft(w: Waveform, cfg: StftConfig = FULLBAND_STFT) -> ComplexSpectrogram:
    x = w.samples
    if x.size == 0:
        raise ValueError("cannot transform an empty waveform")
    n, h = cfg.fft_size, cfg.hop_size
    padded = np.pad(x, cfg.pad, mode="reflect") if x.size > 1 else np.pad(x, cfg.pad, mode="edge")
    n_frames = cfg.n_frames(x.size)
    need = (n_frames - 1) * h + n
    if padded.size < need:
        padded = np.pad(padded, (0, need - padded.size))
    idx = np.arange(n)[None, :] + h * np.arange(n_frames)[:, None]
    frames = padded[idx] * cfg.window_array()
    # pocketfft handles composite lengths such as 510 = 2*3*3*5*17 natively
    return ComplexSpectrogram(np.fft.rfft(frames, n=n, axis=1), RAW, cfg, w.sample_rate_hz)


def istft(s: ComplexSpectrogram, cfg: StftConfig | None = None, length: int | None = None) -> Waveform:
    """Overlap-add inverse of :func:`stft`, normalized by the squared-window sum.

    ``length`` defaults to every sample the frames cover; shorter lengths
    truncate and longer ones zero-pad.  The sample rate is carried over from
    the spectrogram (1 Hz when it was built without one).
    """
    if s.domain_tag != RAW:
        raise DomainError("istft needs a raw spectrogram; expand the companded input first")
    cfg = cfg or s.stft_config
    n, h = cfg.fft_size, cfg.hop_size
    if s.bins.shape[1] != cfg.n_bins:
        raise ValueError(f"spectrogram has {s.bins.shape[1]} bins, config expects {cfg.n_bins}")
    n_frames = s.n_frames
    covered = (n_frames - 1) * h + n - 2 * cfg.pad
    if length is None:
        length = covered
    if length < 1:
        raise ValueError("length must be positive")
    if cfg.n_frames(length) > n_frames:
        raise ValueError(f"{n_frames} frames cannot cover {length} samples")
    win = cfg.window_array()
    frames = np.fft.irfft(s.bins, n=n, axis=1) * win
    total = (n_frames - 1) * h + n
    out = np.zeros(total)
    wsum = np.zeros(total)
    for i in range(n_frames):
        out[i * h:i * h + n] += frames[i]
        wsum[i * h:i * h + n] += win ** 2
    stop = min(cfg.pad + length, total)
    needed = wsum[cfg.pad:stop]
    if needed.size and needed.min() <= 1e-11 * wsum.max():
        raise ValueError("squared-window sum vanishes at a required sample")
    y = out[cfg.pad:stop] / needed
    if y.size < length:
        y = np.pad(y, (0, length - y.size))
    return Waveform(y, s.sample_rate_hz or 1)


def compand(s: ComplexSpectrogram, c: CompandingConfig = CompandingConfig()) -> ComplexSpectrogram:
    if s.domain_tag != RAW:
        raise DomainError("compand expects a raw spectrogram")
    return replace(s, bins=_power_law(s.bins, c.alpha, c.beta), domain_tag=COMPANDED)


def expand(s: ComplexSpectrogram, c: CompandingConfig = CompandingConfig()) -> ComplexSpectrogram:
    if s.domain_tag != COMPANDED:
        raise DomainError("expand expects a companded spectrogram")
    return replace(s, bins=_power_law(s.bins, 1.0 / c.alpha, 1.0 / c.beta ** (1.0 / c.alpha)), domain_tag=RAW)


def _power_law(x: np.ndarray, power: float, gain: float) -> np.ndarray:
    # gain * |x|**power * exp(i angle x); zero bins stay zero (phase taken as 0)
    mag = np.abs(x)
    out = np.zeros_like(x)
    nz = mag > 0
    out[nz] = gain * mag[nz] ** power * np.exp(1j * np.angle(x[nz]))
    return out


def save_spectrogram(s: ComplexSpectrogram, path) -> None:
    frames, nbins = s.bins.shape
    flags = FLAG_COMPANDED if s.domain_tag == COMPANDED else 0
    inter = np.empty((frames, nbins, 2), dtype="<f8")
    inter[..., 0] = s.bins.real
    inter[..., 1] = s.bins.imag
    Path(path).write_bytes(struct.pack("<4sIII", SPEC_MAGIC, frames, nbins, flags) + inter.tobytes())


def load_spectrogram(path, stft_config: StftConfig | None = None) -> ComplexSpectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated spectrogram header")
    magic, frames, nbins, flags = struct.unpack("<4sIII", raw[:16])
    if magic != SPEC_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = frames * nbins * 16
    if len(raw) - 16 != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(raw) - 16}")
    data = np.frombuffer(raw, dtype="<f8", offset=16).reshape(frames, nbins, 2)
    tag = COMPANDED if flags & FLAG_COMPANDED else RAW
    if stft_config is None:
        stft_config = StftConfig(2 * (nbins - 1), min(320, 2 * (nbins - 1)))
    return ComplexSpectrogram(data[..., 0] + 1j * data[..., 1], tag, stft_config)
