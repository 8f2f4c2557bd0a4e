"""Desk-scale invariant checks, runnable from the command line."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .channel import correlation_from_betas, sample_channel
from .combining import (
    centralized_mmse_baseline,
    centralized_tmmse,
    estimate_team_statistics,
    local_mmse_baseline,
    local_stage,
    s_matrices,
    statistical_tmmse,
    unidirectional_tmmse,
)
from .config import SystemConfig
from .evaluation import accumulate, conditional_mse, finalize, receive_combine
from .geometry import deploy
from .pilot import assign_pilots, mmse_estimate, pilot_observation
from .rng import complex_normal, stream


def _scenario(config: SystemConfig, seed: int, trials: int):
    dep = deploy(config, stream(seed, "deployment", 0), stream(seed, "shadowing", 0))
    corr = correlation_from_betas(dep.betas, config.antennas_per_ap, config.correlation_model)
    assignment = assign_pilots(config, stream(seed, "pilots", 0))
    h = sample_channel(corr, stream(seed, "channel", 0), trials)
    z = pilot_observation(h, assignment, config, stream(seed, "pilot_noise", 0))
    est = mmse_estimate(z, corr, assignment, config)
    return dep, corr, assignment, h, est


def check_centralized_equivalence(seed: int = 1) -> float:
    config = SystemConfig(num_aps=6, num_ues=4, antennas_per_ap=2, pilot_length=2)
    _, _, _, _, est = _scenario(config, seed, 50)
    local = local_stage(est, config)
    a = conditional_mse(centralized_tmmse(local, "block"), est, config)
    b = conditional_mse(centralized_mmse_baseline(est, config), est, config)
    return float(np.max(np.abs(a - b) / b))


def check_identity(seed: int = 2) -> float:
    config = SystemConfig(num_aps=5, num_ues=3, antennas_per_ap=2, pilot_length=2)
    _, corr, assignment, _, est = _scenario(config, seed, 200)
    stats = estimate_team_statistics(corr, config, assignment, 200, stream(seed, "training", 0))
    S, Sbar, _ = s_matrices(local_stage(est, config).Lam, stats.Pi)
    return float(np.max(np.abs(S + stats.Pi @ Sbar - np.eye(3))))


def check_single_ap(seed: int = 3) -> float:
    config = SystemConfig(num_aps=1, num_ues=3, antennas_per_ap=2, pilot_length=3)
    _, corr, assignment, _, est = _scenario(config, seed, 20)
    local = local_stage(est, config)
    stats = estimate_team_statistics(corr, config, assignment, 20, stream(seed, "training", 0))
    ref = local_mmse_baseline(local).V
    others = [unidirectional_tmmse(local, stats).V, centralized_tmmse(local).V, statistical_tmmse(local, stats).V]
    return float(max(np.max(np.abs(v - ref)) / np.max(np.abs(ref)) for v in others))


def check_moment_symbol(seed: int = 4) -> float:
    """Return the moment/symbol MSE discrepancy in units of standard error."""
    config = SystemConfig(num_aps=3, num_ues=2, antennas_per_ap=2, pilot_length=1)
    _, _, _, h, est = _scenario(config, seed, 100)
    comb = local_mmse_baseline(local_stage(est, config))
    report = finalize(accumulate(comb, h, config), config)
    rng = stream(seed, "symbols", 0)
    m = 200
    s = complex_normal(rng, (100, m, 2))
    noise = complex_normal(rng, (100, m, 3, 2), config.noise_power)
    shat = receive_combine(comb, h, s, noise, config.tx_power)
    err = np.abs(s - report.alpha_star * shat) ** 2
    mean = err.mean(axis=(0, 1))
    sem = err.reshape(-1, 2).std(axis=0, ddof=1) / np.sqrt(err.shape[0] * m)
    return float(np.max(np.abs(mean - report.mse) / sem))


CHECKS: list[tuple[str, Callable[[], float], float]] = [
    ("centralized TMMSE equals centralized MMSE (relative MSE gap)", check_centralized_equivalence, 1e-8),
    ("S + Pi Sbar = I (max abs residual)", check_identity, 1e-8),
    ("single AP: all schemes coincide (relative gap)", check_single_ap, 1e-10),
    ("moment vs symbol-level MSE (standard errors)", check_moment_symbol, 3.0),
]


def run_selftest(echo: Callable[[str], None] = print) -> bool:
    ok = True
    for name, fn, tol in CHECKS:
        value = fn()
        passed = bool(value <= tol)
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3e} (tolerance {tol:g})")
    return ok
