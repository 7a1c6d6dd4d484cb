"""Monte-Carlo verification suites for the diffusion process and sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scoredec.sampler import PcSamplerConfig, pc_sample_state
from scoredec.score_model import ZERO_SCORE, FunctionScoreModel, GaussianOracleScoreModel, dsm_loss
from scoredec.sde import (ConditionPair, OuveParams, analytic_score, diffusion_coeff, kernel_mean, kernel_std,
                          kernel_var, sample_forward, simulate_forward)

# closed-form values for gamma=1.5, sigma_min=0.05, sigma_max=0.5
DEFAULT_REFERENCE = {"sigma2_at_1": 0.15130750838553111, "g_at_0": 0.10729830131446737, "g_at_1": 1.0729830131446736}


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    measured: float
    expected: float
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.suite}: {self.name}  measured={self.measured:.6g}  "
                f"expected={self.expected:.6g}  tol={self.tolerance:.3g}")


def _within(suite, name, measured, expected, tol) -> Check:
    return Check(suite, name, bool(abs(measured - expected) <= tol), float(measured), float(expected), float(tol))


def kernel_statistics(p: OuveParams, n_paths: int = 2000, dt: float = 1e-3, times=(0.25, 0.5, 1.0),
                      x0: float = 1.0, y: float = 0.0, seed: int = 1234, n_se: float = 3.0) -> list[Check]:
    """Euler-Maruyama ensemble mean/variance against the closed-form kernel."""
    pair = ConditionPair(np.full(n_paths, x0), np.full(n_paths, y))
    out = []
    for i, t in enumerate(times):
        t = min(t, p.T)
        n_steps = max(100, int(round(t / dt)))
        xs = simulate_forward(pair, p, n_steps, seed + i, t_end=t).x_t
        mu = float(kernel_mean(ConditionPair(np.array(x0), np.array(y)), t, p))
        var = kernel_var(t, p)
        se_mean = math.sqrt(var / n_paths)
        se_var = var * math.sqrt(2.0 / (n_paths - 1))
        out.append(_within("kernel-statistics", f"mean t={t}", xs.mean(), mu, n_se * se_mean))
        out.append(_within("kernel-statistics", f"variance t={t}", xs.var(ddof=1), var, n_se * se_var))
    return out


def reference_values(p: OuveParams) -> list[Check]:
    """Closed forms of the configured process against the published-setting values."""
    return [
        _within("kernel-statistics", "sigma(1)^2 vs reference 0.1513", kernel_var(min(1.0, p.T), p),
                DEFAULT_REFERENCE["sigma2_at_1"], 1e-4),
        _within("kernel-statistics", "g(0) vs reference", diffusion_coeff(0.0, p), DEFAULT_REFERENCE["g_at_0"], 1e-6),
        _within("kernel-statistics", "g(1) vs reference", diffusion_coeff(min(1.0, p.T), p),
                DEFAULT_REFERENCE["g_at_1"], 1e-6),
    ]


def substitution_identity(p: OuveParams, n: int = 1000, seed: int = 7) -> list[Check]:
    """Kernel score at a forward sample equals ``-z / sigma(t)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        shape = (int(rng.integers(1, 5)),)
        pair = ConditionPair(rng.normal(size=shape), rng.normal(size=shape))
        t = float(rng.uniform(p.t_min, p.T))
        z = rng.normal(size=shape)
        s = analytic_score(sample_forward(pair, t, p, z).x_t, pair, t, p)
        target = -z / kernel_std(t, p)
        worst = max(worst, float(np.max(np.abs(s - target) / np.maximum(np.abs(target), 1e-300))))
    return [Check("substitution-identity", f"max relative error over {n} draws", worst <= 1e-10, worst, 0.0, 1e-10)]


def score_matching(p: OuveParams, n_draws: int = 10_000, times=(0.1, 0.5, 1.0), seed: int = 11,
                   n_se: float = 3.0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    worst = 0.0
    for _ in range(100):
        pair = ConditionPair(rng.normal(size=8), rng.normal(size=8))
        t = float(rng.uniform(p.t_min, p.T))
        z = rng.normal(size=8)
        exact = FunctionScoreModel(lambda x_t, y, tt, z=z, t=t: -z / kernel_std(t, p))
        worst = max(worst, dsm_loss(exact, pair, p, t, z))
    out.append(Check("score-matching", "loss of exact -z/sigma model", worst <= 1e-20, worst, 0.0, 1e-20))
    for t in times:
        pair = ConditionPair(np.zeros(1), np.zeros(1))
        losses = np.array([dsm_loss(ZERO_SCORE, pair, p, t, rng.normal(size=1)) for _ in range(n_draws)])
        se = losses.std(ddof=1) / math.sqrt(n_draws)
        out.append(_within("score-matching", f"zero-model loss t={t}", losses.mean(), 1.0 / kernel_var(t, p), n_se * se))
    return out


def gaussian_transport(p: OuveParams, sampler: PcSamplerConfig = PcSamplerConfig(), n_runs: int = 1000,
                       m0: float = 0.3, y: float = 0.5, p0: float = 0.04, n_se: float = 3.0) -> list[Check]:
    """PC sampler with the exact Gaussian score on one complex bin vs the t_min marginal."""
    shape = (2, 1, 1)
    oracle = GaussianOracleScoreModel(np.full(shape, m0), p0, np.full(shape, y), p)
    finals = np.array([
        pc_sample_state(oracle.y, oracle, p, PcSamplerConfig(sampler.n_steps, sampler.n_corrector, sampler.snr_r,
                                                             sampler.seed + k, sampler.corrector_rule)).x_t.ravel()
        for k in range(n_runs)
    ])
    mu = float(np.ravel(oracle.marginal_mean(p.t_min))[0])
    var = float(oracle.marginal_var(p.t_min))
    out = []
    for c, part in enumerate(("real", "imag")):
        a = finals[:, c]
        out.append(_within("gaussian-transport", f"{part} mean", a.mean(), mu, n_se * math.sqrt(var / n_runs)))
        out.append(_within("gaussian-transport", f"{part} variance", a.var(ddof=1), var,
                           n_se * var * math.sqrt(2.0 / (n_runs - 1))))
    return out


def run_all(p: OuveParams, sampler: PcSamplerConfig = PcSamplerConfig(), reference: bool = True) -> list[Check]:
    checks = kernel_statistics(p)
    if reference:
        checks += reference_values(p)
    checks += substitution_identity(p)
    checks += score_matching(p)
    checks += gaussian_transport(p, sampler)
    return checks
