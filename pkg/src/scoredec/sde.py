"""Ornstein-Uhlenbeck variance-exploding (OUVE) diffusion process.

Forward dynamics ``dx = gamma (y - x) dt + g(t) dw`` with
``g(t) = sigma_min (sigma_max/sigma_min)**t sqrt(2 ln(sigma_max/sigma_min))``.
The perturbation kernel ``x_t | x0, y`` is Gaussian with closed-form mean and
variance; everything here works on real arrays (complex spectra are carried
as separate real/imaginary channels).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_T_EPS = 1e-12


@dataclass(frozen=True)
class OuveParams:
    gamma: float = 1.5
    sigma_min: float = 0.05
    sigma_max: float = 0.5
    t_min: float = 0.03
    T: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError(f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}")
        if not 0 < self.t_min < self.T:
            raise ValueError(f"need 0 < t_min < T, got {self.t_min}, {self.T}")

    @property
    def log_ratio(self) -> float:
        return math.log(self.sigma_max / self.sigma_min)


@dataclass(frozen=True)
class ConditionPair:
    x0: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if x0.shape != y.shape:
            raise ValueError(f"x0 shape {x0.shape} differs from y shape {y.shape}")
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(y))):
            raise ValueError("condition pair contains non-finite entries")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class DiffusionState:
    x_t: np.ndarray
    t: float


def _check_t(t, p: OuveParams, lo: float = 0.0):
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < lo - _T_EPS) or np.any(t_arr > p.T + _T_EPS) or not np.all(np.isfinite(t_arr)):
        raise ValueError(f"diffusion time {t} outside [{lo}, {p.T}]")
    return t_arr


def _same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what}: shape {np.shape(a)} vs {np.shape(b)}")


def drift(x_t, y, p: OuveParams) -> np.ndarray:
    _same_shape(x_t, y, "drift")
    return p.gamma * (np.asarray(y, dtype=np.float64) - np.asarray(x_t, dtype=np.float64))


def diffusion_coeff(t, p: OuveParams):
    t = _check_t(t, p)
    g = p.sigma_min * (p.sigma_max / p.sigma_min) ** t * math.sqrt(2.0 * p.log_ratio)
    return float(g) if g.ndim == 0 else g


def mean_weight(t, p: OuveParams):
    """Weight ``exp(-gamma t)`` that the kernel mean puts on the clean state."""
    return np.exp(-p.gamma * _check_t(t, p))


def kernel_mean(pair: ConditionPair, t, p: OuveParams) -> np.ndarray:
    w = mean_weight(t, p)
    return w * pair.x0 + (1.0 - w) * pair.y


def kernel_var(t, p: OuveParams):
    t = _check_t(t, p)
    lr = p.log_ratio
    ratio = p.sigma_max / p.sigma_min
    v = p.sigma_min ** 2 * (ratio ** (2.0 * t) - np.exp(-2.0 * p.gamma * t)) * lr / (p.gamma + lr)
    v = np.maximum(v, 0.0)
    return float(v) if v.ndim == 0 else v


def kernel_std(t, p: OuveParams):
    v = np.sqrt(kernel_var(t, p))
    return float(v) if np.ndim(v) == 0 else v


def sample_forward(pair: ConditionPair, t: float, p: OuveParams, z) -> DiffusionState:
    z = np.asarray(z, dtype=np.float64)
    _same_shape(z, pair.x0, "sample_forward noise")
    return DiffusionState(kernel_mean(pair, t, p) + kernel_std(t, p) * z, float(t))


def analytic_score(x_t, pair: ConditionPair, t: float, p: OuveParams) -> np.ndarray:
    """Score of the perturbation kernel, ``-(x_t - mean) / sigma(t)**2``."""
    if not t > 0:
        raise ValueError(f"score is singular at t={t}; need t > 0")
    _same_shape(x_t, pair.x0, "analytic_score")
    var = kernel_var(t, p)
    if var <= 0:
        raise ValueError(f"kernel variance vanishes at t={t}")
    return -(np.asarray(x_t, dtype=np.float64) - kernel_mean(pair, t, p)) / var


def simulate_forward(pair: ConditionPair, p: OuveParams, n_steps: int = 1000, seed: int = 0,
                     t_end: float | None = None) -> DiffusionState:
    """Euler-Maruyama integration of the forward SDE from ``t=0`` to ``t_end``.

    Every entry of ``pair.x0`` is an independent path, so an ensemble of
    scalar paths is simulated by passing vectors.  The step is
    ``t_end / n_steps``.
    """
    if n_steps < 100:
        raise ValueError(f"n_steps must be >= 100, got {n_steps}")
    t_end = p.T if t_end is None else float(t_end)
    _check_t(t_end, p)
    rng = np.random.default_rng(seed)
    dt = t_end / n_steps
    sq = math.sqrt(dt)
    x = pair.x0.copy()
    for k in range(n_steps):
        t = k * dt
        x = x + drift(x, pair.y, p) * dt + diffusion_coeff(t, p) * sq * rng.standard_normal(x.shape)
    return DiffusionState(x, t_end)
