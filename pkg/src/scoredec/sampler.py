"""Predictor-corrector sampling of the reverse-time OUVE process."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from scoredec.sde import DiffusionState, OuveParams, diffusion_coeff, drift, kernel_std
from scoredec.spectral import COMPANDED, ComplexSpectrogram

ProgressHook = Callable[[int, float, float], None]

# sde_std: eps = 2 (r sigma(t))^2; norm_ratio: eps = 2 (r |z| / |s|)^2
CORRECTOR_RULES = ("sde_std", "norm_ratio")


@dataclass(frozen=True)
class PcSamplerConfig:
    n_steps: int = 30
    n_corrector: int = 1
    snr_r: float = 0.5
    seed: int = 0
    corrector_rule: str = "sde_std"

    def __post_init__(self):
        if self.corrector_rule not in CORRECTOR_RULES:
            raise ValueError(f"unknown corrector rule {self.corrector_rule!r}; choose from {CORRECTOR_RULES}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.n_corrector < 0:
            raise ValueError("n_corrector must be >= 0")
        if not self.snr_r > 0:
            raise ValueError("snr_r must be positive")


def init_state(y, p: OuveParams, rng: np.random.Generator | None, noise: bool = True) -> DiffusionState:
    """Start of the reverse process: ``x_T = y + sigma(T) z``."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("conditioning input is not finite")
    if not noise:
        return DiffusionState(y.copy(), p.T)
    return DiffusionState(y + kernel_std(p.T, p) * rng.standard_normal(y.shape), p.T)


def predictor_step(state: DiffusionState, y, model, p: OuveParams, dt: float,
                   rng: np.random.Generator | None, noise: bool = True) -> DiffusionState:
    """One reverse-time Euler-Maruyama step of ``dx = [f - g^2 s] dt + g dw``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if state.t - dt < p.t_min - 1e-12:
        raise ValueError(f"step to t={state.t - dt} goes below t_min={p.t_min}")
    if dt == 0:
        return state
    x, t = state.x_t, state.t
    g = diffusion_coeff(t, p) if noise else 0.0
    s = np.asarray(model.score(x, y, t), dtype=np.float64) if g else 0.0
    x_new = x - (drift(x, y, p) - g * g * s) * dt
    if noise:
        x_new = x_new + g * math.sqrt(dt) * rng.standard_normal(x.shape)
    return DiffusionState(x_new, t - dt)


def corrector_step(state: DiffusionState, y, model, snr_r: float, rng: np.random.Generator,
                   p: OuveParams | None = None, rule: str = "sde_std") -> DiffusionState:
    """Annealed Langevin update ``x + eps s + sqrt(2 eps) z`` at fixed ``t``.

    ``rule="sde_std"`` sets ``eps = 2 (snr_r sigma(t))^2`` from the kernel
    standard deviation (needs ``p``).  ``rule="norm_ratio"`` sets
    ``eps = 2 (snr_r |z| / |s|)^2`` with global L2 norms and skips the update
    when the score vanishes.
    """
    s = np.asarray(model.score(state.x_t, y, state.t), dtype=np.float64)
    z = rng.standard_normal(state.x_t.shape)
    if rule == "norm_ratio":
        if float(np.linalg.norm(s)) == 0.0:
            return state
        eps = corrector_step_size(z, s, snr_r)
    elif rule == "sde_std":
        if p is None:
            raise ValueError("the sde_std corrector rule needs the OUVE parameters")
        eps = 2.0 * (snr_r * kernel_std(state.t, p)) ** 2
    else:
        raise ValueError(f"unknown corrector rule {rule!r}")
    return DiffusionState(state.x_t + eps * s + math.sqrt(2.0 * eps) * z, state.t)


def corrector_step_size(z: np.ndarray, s: np.ndarray, snr_r: float) -> float:
    return 2.0 * (snr_r * float(np.linalg.norm(z)) / float(np.linalg.norm(s))) ** 2


def time_grid(p: OuveParams, n_steps: int) -> np.ndarray:
    """Evaluation times ``T, T - dt, ..., t_min`` with ``dt = (T - t_min) / n_steps``."""
    return p.T - (p.T - p.t_min) * np.arange(n_steps + 1) / n_steps


def pc_sample_state(y, model, p: OuveParams, cfg: PcSamplerConfig = PcSamplerConfig(),
                    progress: ProgressHook | None = None) -> DiffusionState:
    """Run the full predictor-corrector chain on a real state tensor."""
    rng = np.random.default_rng(cfg.seed)
    state = init_state(y, p, rng)
    grid = time_grid(p, cfg.n_steps)
    for i in range(cfg.n_steps):
        dt = grid[i] - grid[i + 1]
        state = predictor_step(state, y, model, p, dt, rng)
        # snap onto the grid so roundoff never leaves [t_min, T]
        state = DiffusionState(state.x_t, float(grid[i + 1]))
        for _ in range(cfg.n_corrector):
            state = corrector_step(state, y, model, cfg.snr_r, rng, p, cfg.corrector_rule)
        if not np.all(np.isfinite(state.x_t)):
            raise FloatingPointError(f"non-finite state after step {i} (t={state.t:.4f})")
        if progress is not None:
            progress(i, state.t, float(np.linalg.norm(state.x_t)))
    return state


def pc_sample(y_spec: ComplexSpectrogram, model, p: OuveParams, cfg: PcSamplerConfig = PcSamplerConfig(),
              progress: ProgressHook | None = None) -> ComplexSpectrogram:
    if y_spec.domain_tag != COMPANDED:
        raise ValueError("pc_sample expects a companded spectrogram")
    y = y_spec.to_state()
    final = pc_sample_state(y, model, p, cfg, progress)
    if final.x_t.shape != y.shape:
        raise ValueError(f"model returned state of shape {final.x_t.shape}, expected {y.shape}")
    return ComplexSpectrogram.from_state(final.x_t, COMPANDED, y_spec.stft_config, y_spec.sample_rate_hz)
