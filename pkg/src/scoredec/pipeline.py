"""Waveform-level glue: companded training pairs and the post-filter itself."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from scoredec.audio_io import Waveform
from scoredec.sampler import PcSamplerConfig, pc_sample
from scoredec.score_model import GaussianOracleScoreModel, MlpConfig, MlpScoreModel
from scoredec.sde import ConditionPair, OuveParams
from scoredec.spectral import COMPANDED, CompandingConfig, ComplexSpectrogram, StftConfig, compand, expand, istft, stft


def companded(w: Waveform, stft_cfg: StftConfig, comp: CompandingConfig) -> ComplexSpectrogram:
    return compand(stft(w, stft_cfg), comp)


def training_pairs(clean: Sequence[Waveform], degraded: Sequence[Waveform], stft_cfg: StftConfig,
                   comp: CompandingConfig) -> list[ConditionPair]:
    if len(clean) != len(degraded):
        raise ValueError(f"{len(clean)} clean vs {len(degraded)} degraded waveforms")
    pairs = []
    for c, d in zip(clean, degraded):
        n = min(len(c), len(d))
        x0 = companded(Waveform(c.samples[:n], c.sample_rate_hz), stft_cfg, comp).to_state()
        y = companded(Waveform(d.samples[:n], d.sample_rate_hz), stft_cfg, comp).to_state()
        pairs.append(ConditionPair(x0, y))
    return pairs


def spectral_model_config(stft_cfg: StftConfig, **kw) -> MlpConfig:
    return MlpConfig(channels=2, n_bins=stft_cfg.n_bins, **kw)


def enhance(degraded: Waveform, model, sde: OuveParams, stft_cfg: StftConfig, comp: CompandingConfig,
            sampler: PcSamplerConfig, progress=None) -> Waveform:
    """stft -> compand -> predictor-corrector sampling -> expand -> istft."""
    y_spec = companded(degraded, stft_cfg, comp)
    x_spec = pc_sample(y_spec, model, sde, sampler, progress)
    out = istft(expand(x_spec, comp), stft_cfg, len(degraded))
    return Waveform(out.samples, degraded.sample_rate_hz)


def oracle_for(clean: Waveform, degraded: Waveform, sde: OuveParams, stft_cfg: StftConfig,
               comp: CompandingConfig, prior_var: float = 1e-3) -> GaussianOracleScoreModel:
    """Gaussian oracle centred on the clean companded spectrum of ``clean``."""
    n = len(degraded)
    c = np.zeros(n)
    m = min(n, len(clean))
    c[:m] = clean.samples[:m]
    m0 = companded(Waveform(c, clean.sample_rate_hz), stft_cfg, comp).to_state()
    y = companded(degraded, stft_cfg, comp).to_state()
    return GaussianOracleScoreModel(m0, prior_var, y, sde)


def new_model(stft_cfg: StftConfig, sde: OuveParams, **mlp_kw) -> MlpScoreModel:
    return MlpScoreModel(spectral_model_config(stft_cfg, **mlp_kw), sde)
