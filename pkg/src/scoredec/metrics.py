"""Objective waveform and phase metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scoredec.audio_io import Waveform
from scoredec.spectral import StftConfig, stft

SI_SDR_CAP_DB = 120.0
REPORT_HEADER = ("utt_id", "wav_mse", "si_sdr_db", "phase_err_rad")


def _samples(w) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def _check_lengths(ref: np.ndarray, est: np.ndarray):
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")


def wav_mse(ref, est) -> float:
    r, e = _samples(ref), _samples(est)
    _check_lengths(r, e)
    return float(np.mean((r - e) ** 2))


def si_sdr(ref, est) -> float:
    """Scale-invariant SDR in dB, capped at 120 dB by a relative floor."""
    r, e = _samples(ref), _samples(est)
    _check_lengths(r, e)
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0.0:
        raise ValueError("SI-SDR is undefined for an all-zero reference")
    target = (float(np.dot(e, r)) / ref_energy) * r
    t_energy = float(np.dot(target, target))
    if t_energy == 0.0:
        return -SI_SDR_CAP_DB
    resid = e - target
    return 10.0 * math.log10(t_energy / (float(np.dot(resid, resid)) + 1e-12 * t_energy))


def phase_error(p_hat, p) -> np.ndarray:
    """Wrapped absolute phase difference ``min(|d|, 2 pi - |d|)`` in [0, pi]."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if p_hat.shape != p.shape:
        raise ValueError(f"shape mismatch: {p_hat.shape} vs {p.shape}")
    d = np.abs(p_hat - p)
    return np.minimum(d, 2.0 * np.pi - d)


@dataclass(frozen=True)
class EvalRow:
    utt_id: str
    wav_mse: float
    si_sdr_db: float
    phase_err_rad: float


def weighted_phase_error(ref: Waveform, est: Waveform, cfg: StftConfig) -> float:
    """Mean wrapped phase error over STFT bins, weighted by reference magnitude."""
    r, e = stft(ref, cfg).bins, stft(est, cfg).bins
    w = np.abs(r)
    total = float(w.sum())
    if total == 0.0:
        return 0.0
    err = phase_error(np.angle(e), np.angle(r))
    return float((w * err).sum() / total)


def evaluate_pair(ref: Waveform, est: Waveform, cfg: StftConfig, utt_id: str = "") -> EvalRow:
    if ref.sample_rate_hz != est.sample_rate_hz:
        raise ValueError(f"sample-rate mismatch: {ref.sample_rate_hz} vs {est.sample_rate_hz}")
    n = min(len(ref), len(est))
    ref = Waveform(ref.samples[:n], ref.sample_rate_hz)
    est = Waveform(est.samples[:n], est.sample_rate_hz)
    return EvalRow(utt_id, wav_mse(ref, est), si_sdr(ref, est), weighted_phase_error(ref, est, cfg))


def corpus_average(rows: Sequence[EvalRow]) -> EvalRow:
    if not rows:
        raise ValueError("no rows to average")
    return EvalRow(
        "AVERAGE",
        float(np.mean([r.wav_mse for r in rows])),
        float(np.mean([r.si_sdr_db for r in rows])),
        float(np.mean([r.phase_err_rad for r in rows])),
    )


def format_report(rows: Sequence[EvalRow]) -> str:
    """CSV text: header, rows sorted by utterance id, then the AVERAGE row."""
    ordered = sorted(rows, key=lambda r: r.utt_id)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in ordered + [corpus_average(ordered)]:
        writer.writerow([r.utt_id, repr(r.wav_mse), repr(r.si_sdr_db), repr(r.phase_err_rad)])
    return buf.getvalue()
