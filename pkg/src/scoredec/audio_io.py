"""Mono PCM WAV reading and writing.

Samples are normalized by ``2**(bits - 1)`` so integer codes map onto
``[-1, 1)``.  Only 16- and 24-bit little-endian mono PCM is supported.
"""

from __future__ import annotations

import os
import struct
import tempfile
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SUPPORTED_BIT_DEPTHS = (16, 24)


class WavError(Exception):
    """Base class for WAV reading/writing failures."""


class WavFormatError(WavError):
    """Content is not mono integer PCM at a supported bit depth."""


class WavHeaderError(WavError):
    """RIFF header or chunk layout is truncated or malformed."""


class WavDataLengthError(WavError):
    """Declared data-chunk length disagrees with the bytes present."""


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains NaN or infinite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def _scan_chunks(raw: bytes) -> dict[bytes, tuple[int, int]]:
    """Return ``{chunk_id: (payload_offset, declared_size)}`` for a RIFF/WAVE blob."""
    if len(raw) < 12:
        raise WavHeaderError("truncated RIFF header")
    riff, _, wave_id = struct.unpack("<4sI4s", raw[:12])
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE file")
    chunks = {}
    pos = 12
    while pos + 8 <= len(raw):
        cid, size = struct.unpack("<4sI", raw[pos:pos + 8])
        chunks.setdefault(cid, (pos + 8, size))
        pos += 8 + size + (size & 1)
    return chunks


def read_wav(path) -> Waveform:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    raw = path.read_bytes()
    chunks = _scan_chunks(raw)
    if b"fmt " not in chunks:
        raise WavHeaderError(f"{path}: missing fmt chunk")
    fmt_off, fmt_size = chunks[b"fmt "]
    if fmt_size < 16 or fmt_off + 16 > len(raw):
        raise WavHeaderError(f"{path}: truncated fmt chunk")
    fmt_code, channels, rate, _, _, bits = struct.unpack("<HHIIHH", raw[fmt_off:fmt_off + 16])
    if fmt_code != 1:
        raise WavFormatError(f"{path}: audio format code {fmt_code} is not integer PCM")
    if channels != 1:
        raise WavFormatError(f"{path}: {channels} channels, only mono is supported")
    if bits not in SUPPORTED_BIT_DEPTHS:
        raise WavFormatError(f"{path}: unsupported bit depth {bits}")
    if b"data" not in chunks:
        raise WavHeaderError(f"{path}: missing data chunk")
    data_off, data_size = chunks[b"data"]
    present = len(raw) - data_off
    # trailing chunks after data are legal, so only a shortfall is an error
    if present < data_size:
        raise WavDataLengthError(
            f"{path}: data chunk declares {data_size} bytes but only {present} present")
    width = bits // 8
    if data_size % width:
        raise WavDataLengthError(f"{path}: data size {data_size} not a multiple of {width}")

    # the stdlib reader handles the sample decoding once the layout is validated
    with wave.open(str(path), "rb") as wf:
        frames = wf.readframes(wf.getnframes())
    if len(frames) != data_size:
        raise WavDataLengthError(f"{path}: read {len(frames)} of {data_size} data bytes")
    codes = _decode(frames, width)
    if codes.size == 0:
        raise WavFormatError(f"{path}: empty data chunk")
    return Waveform(codes / float(2 ** (bits - 1)), rate)


def _decode(frames: bytes, width: int) -> np.ndarray:
    if width == 2:
        return np.frombuffer(frames, dtype="<i2").astype(np.float64)
    b = np.frombuffer(frames, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    v = np.where(v >= 1 << 23, v - (1 << 24), v)
    return v.astype(np.float64)


def quantize(samples: np.ndarray, bit_depth: int) -> np.ndarray:
    """Clamp to ``[-1, 1 - LSB]`` and round to integer PCM codes."""
    if bit_depth not in SUPPORTED_BIT_DEPTHS:
        raise ValueError(f"unsupported bit depth {bit_depth}; use one of {SUPPORTED_BIT_DEPTHS}")
    scale = 2 ** (bit_depth - 1)
    codes = np.round(np.clip(samples, -1.0, 1.0) * scale)
    return np.clip(codes, -scale, scale - 1).astype(np.int32)


def write_wav(w: Waveform, path, bit_depth: int = 16) -> None:
    codes = quantize(w.samples, bit_depth)
    if bit_depth == 16:
        payload = codes.astype("<i2").tobytes()
    else:
        u = codes.astype(np.int64) & 0xFFFFFF
        payload = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
    path = Path(path)
    if not path.parent.is_dir():
        raise OSError(f"cannot write {path}: directory does not exist")
    # temp file + rename so readers never observe a half-written file
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            with wave.open(fh, "wb") as wf:
                wf.setnchannels(1)
                wf.setsampwidth(bit_depth // 8)
                wf.setframerate(w.sample_rate_hz)
                wf.writeframes(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
