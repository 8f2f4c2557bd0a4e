"""Pilot assignment, de-spread pilot observations and MMSE channel estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CorrelationSet
from .config import ConfigurationError, SystemConfig
from .rng import complex_normal

ASSIGNMENT_RULE = "orthogonal if tau_p >= K, else uniform random with every pilot used"


@dataclass(frozen=True)
class PilotAssignment:
    """Zero-based pilot index per UE."""

    pilots: np.ndarray

    @property
    def num_ues(self) -> int:
        return len(self.pilots)

    def coherence_set(self, k: int) -> np.ndarray:
        """UEs sharing the pilot of UE ``k`` (including ``k``)."""
        return np.flatnonzero(self.pilots == self.pilots[k])

    def sharing_matrix(self) -> np.ndarray:
        """Boolean (K, K) matrix, True where two UEs share a pilot."""
        return self.pilots[:, None] == self.pilots[None, :]


def assign_pilots(config: SystemConfig, rng: np.random.Generator) -> PilotAssignment:
    k, tau_p = config.num_ues, config.pilot_length
    if tau_p >= k:
        return PilotAssignment(rng.permutation(tau_p)[:k])
    # Cover every pilot once, fill the rest uniformly, then shuffle UEs.
    pilots = np.concatenate([np.arange(tau_p), rng.integers(0, tau_p, size=k - tau_p)])
    return PilotAssignment(rng.permutation(pilots))


def pilot_observation(
    h: np.ndarray, assignment: PilotAssignment, config: SystemConfig, rng: np.random.Generator
) -> np.ndarray:
    """De-spread pilot observations z with shape (T, L, tau_p, N).

    ``z[t, l, p] = sum_{i: t_i = p} sqrt(p tau_p) h_il + n``, noise CN(0, sigma^2 I).
    """
    t, l, k, n = h.shape
    tau_p = config.pilot_length
    onehot = np.zeros((tau_p, k))
    onehot[assignment.pilots, np.arange(k)] = 1.0
    z = np.sqrt(config.tx_power * tau_p) * np.einsum("pk,tlkn->tlpn", onehot, h)
    return z + complex_normal(rng, z.shape, config.noise_power)


@dataclass(frozen=True)
class EstimateSet:
    """MMSE estimates ``hhat`` (T, L, K, N) and their scenario statistics.

    ``psi``, ``Q`` and ``C`` have shape (L, K, N, N); ``Q + C = R``.
    """

    hhat: np.ndarray
    psi: np.ndarray
    Q: np.ndarray
    C: np.ndarray

    @property
    def num_realizations(self) -> int:
        return self.hhat.shape[0]

    def subset(self, index) -> "EstimateSet":
        return EstimateSet(self.hhat[index], self.psi, self.Q, self.C)

    def at_aps(self, aps) -> "EstimateSet":
        return EstimateSet(self.hhat[:, aps], self.psi[aps], self.Q[aps], self.C[aps])


@dataclass(frozen=True)
class EstimatorStatistics:
    """Per-drop estimator matrices: ``gain = sqrt(p tau_p) R Psi`` plus psi, Q, C."""

    gain: np.ndarray
    psi: np.ndarray
    Q: np.ndarray
    C: np.ndarray


def estimator_statistics(
    correlation: CorrelationSet, assignment: PilotAssignment, config: SystemConfig
) -> EstimatorStatistics:
    R = correlation.R
    l, k, n = correlation.shape
    ptau = config.tx_power * config.pilot_length
    share = assignment.sharing_matrix().astype(float)
    # Psi_kl^{-1} = sum_{i in P_k} p tau_p R_il + sigma^2 I
    psi_inv = ptau * np.einsum("ki,linm->lknm", share, R) + config.noise_power * np.eye(n)
    if not np.all(np.isfinite(psi_inv)):
        raise ConfigurationError("non-finite pilot observation covariance")
    try:
        psi = np.linalg.inv(psi_inv)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("singular pilot observation covariance") from exc
    if not np.all(np.isfinite(psi)):
        raise ConfigurationError("singular pilot observation covariance")
    r_psi = R @ psi
    Q = ptau * r_psi @ R
    Q = 0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2)))
    return EstimatorStatistics(gain=np.sqrt(ptau) * r_psi, psi=psi, Q=Q, C=R - Q)


def mmse_estimate(
    z: np.ndarray,
    correlation: CorrelationSet,
    assignment: PilotAssignment,
    config: SystemConfig,
    stats: EstimatorStatistics | None = None,
) -> EstimateSet:
    """MMSE estimates ``hhat_kl = sqrt(p tau_p) R_kl Psi_kl z_{t_k l}``."""
    stats = stats or estimator_statistics(correlation, assignment, config)
    zk = z[:, :, assignment.pilots, :]
    hhat = np.einsum("lkmn,tlkn->tlkm", stats.gain, zk)
    return EstimateSet(hhat=hhat, psi=stats.psi, Q=stats.Q, C=stats.C)
