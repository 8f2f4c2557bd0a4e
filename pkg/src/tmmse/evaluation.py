"""UatF spectral efficiency from Monte Carlo moments of the effective channel.

For UE k and one channel realization the combined gains are
``g_ki = sum_l v_kl^H h_il``. Symbols and noise are averaged analytically,
so a realization contributes ``g_kk`` to ``E{s_k shat_k^*}^*`` and
``sum_i |g_ki|^2 + (sigma^2/p) sum_l ||v_kl||^2`` to ``E{|shat_k|^2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .combining import CombinerSet
from .config import ConfigurationError, SystemConfig
from .pilot import EstimateSet

MSE_FLOOR = 1e-12
# Relative slack for the population-level inequality |E g|^2 <= E|shat|^2.
CONSISTENCY_SLACK = 1e-9


class MonteCarloInconsistency(RuntimeError):
    """Accumulated moments violate an inequality that must hold."""


@dataclass
class MomentAccumulator:
    """Mergeable per-UE sums of ``x = (Re g_kk, Im g_kk, E|shat_k|^2)``.

    Keeps first and second order sums so the delta-method standard error can
    be recovered after merging.
    """

    num_ues: int
    count: int = 0
    sum_x: np.ndarray = field(default=None)  # type: ignore[assignment]
    sum_xx: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.sum_x is None:
            self.sum_x = np.zeros((self.num_ues, 3))
        if self.sum_xx is None:
            self.sum_xx = np.zeros((self.num_ues, 3, 3))

    def add_samples(self, x: np.ndarray) -> None:
        """Add a (T, K, 3) batch of per-realization moment samples."""
        self.count += x.shape[0]
        self.sum_x += x.sum(axis=0)
        self.sum_xx += np.einsum("tka,tkb->kab", x, x)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.num_ues != self.num_ues:
            raise ConfigurationError("cannot merge accumulators for different UE counts")
        return MomentAccumulator(self.num_ues, self.count + other.count,
                                 self.sum_x + other.sum_x, self.sum_xx + other.sum_xx)

    @property
    def mean_gain(self) -> np.ndarray:
        m = self.sum_x / self.count
        return m[:, 0] + 1j * m[:, 1]

    @property
    def second_moment(self) -> np.ndarray:
        return self.sum_x[:, 2] / self.count

    def team_mse(self) -> np.ndarray:
        """``E{|s_k - shat_k|^2}``, the MSE without the scalar equaliser."""
        return 1.0 - 2.0 * self.mean_gain.real + self.second_moment


def combined_gains(V: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``g[t, k, i] = sum_l v_kl^H h_il`` for V (T, L, N, K) and h (T, L, K, N)."""
    return np.einsum("tlnk,tlin->tki", np.conj(V), h)


def moment_samples(combiners: CombinerSet, h: np.ndarray, config: SystemConfig) -> np.ndarray:
    V = combiners.V
    if V.shape[0] != h.shape[0] or V.shape[1:] != (h.shape[1], h.shape[3], h.shape[2]):
        raise ConfigurationError(f"combiner shape {V.shape} does not match channel shape {h.shape}")
    g = combined_gains(V, h)
    desired = np.diagonal(g, axis1=1, axis2=2)
    power = np.sum(np.abs(g) ** 2, axis=2) + config.noise_to_power * np.sum(np.abs(V) ** 2, axis=(1, 2))
    return np.stack([desired.real, desired.imag, power], axis=-1)


def accumulate(
    combiners: CombinerSet, h: np.ndarray, config: SystemConfig, acc: MomentAccumulator | None = None
) -> MomentAccumulator:
    """Add the realizations in ``h`` to ``acc`` (a new accumulator if None)."""
    acc = acc if acc is not None else MomentAccumulator(h.shape[2])
    acc.add_samples(moment_samples(combiners, h, config))
    return acc


@dataclass(frozen=True)
class SEReport:
    """Per-UE UatF results for one scheme."""

    scheme: str
    se: np.ndarray
    alpha_star: np.ndarray
    mse: np.ndarray
    team_mse: np.ndarray
    standard_error: np.ndarray
    floored: np.ndarray
    trials: int
    prelog: float


def finalize(acc: MomentAccumulator, config: SystemConfig, scheme: str = "") -> SEReport:
    """``alpha* = E{s shat^*} / E{|shat|^2}``, ``MSE = 1 - |E g|^2 / E{|shat|^2}``,
    ``SE = prelog * log2(1 / MSE)``.
    """
    if acc.count < 1:
        raise ValueError("accumulator is empty")
    gain = acc.mean_gain
    power = acc.second_moment
    if np.any(power <= 0):
        # A zero combiner: no information, alpha* = 0 and MSE = 1.
        power = np.where(power <= 0, np.inf, power)
    mse = 1.0 - np.abs(gain) ** 2 / power
    if np.any(mse < -CONSISTENCY_SLACK):
        raise MonteCarloInconsistency(f"negative MSE estimate {mse.min():.3e} for scheme {scheme!r}")
    floored = mse < MSE_FLOOR
    mse = np.maximum(mse, MSE_FLOOR)
    prelog = config.prelog
    se = prelog * np.log2(1.0 / mse)

    n = acc.count
    if n > 1:
        mean = acc.sum_x / n
        cov = (acc.sum_xx / n - mean[:, :, None] * mean[:, None, :]) * n / (n - 1)
        a, b, m = mean[:, 0], mean[:, 1], np.where(mean[:, 2] > 0, mean[:, 2], np.inf)
        grad = np.stack([-2 * a / m, -2 * b / m, (a**2 + b**2) / m**2], axis=-1)
        var_mse = np.einsum("ka,kab,kb->k", grad, cov, grad) / n
        stderr = prelog / math.log(2.0) * np.sqrt(np.maximum(var_mse, 0.0)) / mse
    else:
        stderr = np.full(acc.num_ues, np.nan)
    return SEReport(
        scheme=scheme,
        se=se,
        alpha_star=np.conj(gain) / power,
        mse=mse,
        team_mse=acc.team_mse(),
        standard_error=stderr,
        floored=floored,
        trials=n,
        prelog=prelog,
    )


def receive_combine(
    combiners: CombinerSet, h: np.ndarray, symbols: np.ndarray, noise: np.ndarray, tx_power: float
) -> np.ndarray:
    """Symbol estimates ``shat_k = sum_l v_kl^H y_l / sqrt(p)``.

    ``h`` is (T, L, K, N), ``symbols`` (T, K) or (T, M, K) and ``noise``
    (T, L, N) or (T, M, L, N) for M symbol draws per realization.
    """
    sqrt_p = math.sqrt(tx_power)
    V = combiners.V
    if symbols.ndim == 2:
        y = sqrt_p * np.einsum("tlkn,tk->tln", h, symbols) + noise
        return np.einsum("tlnk,tln->tk", np.conj(V), y) / sqrt_p
    y = sqrt_p * np.einsum("tlkn,tmk->tmln", h, symbols) + noise
    return np.einsum("tlnk,tmln->tmk", np.conj(V), y) / sqrt_p


def conditional_mse(combiners: CombinerSet, estimates: EstimateSet, config: SystemConfig) -> np.ndarray:
    """Per-realization team MSE given the channel estimates, shape (T, K).

    ``sum_i |sum_l hhat_il^H v_kl - delta_ki|^2 + sum_l v_kl^H (sum_i C_il + sigma^2/p I) v_kl``.
    """
    V = combiners.V
    u = combined_gains(V, estimates.hhat)
    k = u.shape[-1]
    n = V.shape[2]
    fit = np.sum(np.abs(u - np.eye(k)) ** 2, axis=2)
    W = estimates.C.sum(axis=1) + config.noise_to_power * np.eye(n)
    penalty = np.einsum("tlnk,lnm,tlmk->tk", np.conj(V), W, V).real
    return fit + penalty


@dataclass(frozen=True)
class CDF:
    values: np.ndarray
    probabilities: np.ndarray
    median: float
    mean: float


def cdf(values) -> CDF:
    """Empirical CDF with probabilities i/n."""
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("cdf of an empty sample")
    return CDF(values=x, probabilities=np.arange(1, x.size + 1) / x.size,
               median=float(np.median(x)), mean=float(np.mean(x)))
