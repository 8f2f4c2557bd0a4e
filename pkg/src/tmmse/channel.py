"""Spatial correlation matrices and correlated Rayleigh fading draws.

Arrays are AP-major throughout the package: ``R[l, k]`` is the N x N
correlation matrix between AP l and UE k, and a batch of channel
realizations has shape (T, L, K, N) with ``h[t, l, k]`` the vector h_kl.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .config import CorrelationModel, SystemConfig
from .rng import complex_normal

EIG_CLIP_TOL = 1e-12


@dataclass(frozen=True)
class CorrelationSet:
    """Correlation matrices ``R`` (L, K, N, N) and factors with ``F F^H = R``."""

    R: np.ndarray
    factors: np.ndarray

    @property
    def betas(self) -> np.ndarray:
        """``tr(R_kl) / N`` as a (K, L) matrix."""
        n = self.R.shape[-1]
        return np.real(np.trace(self.R, axis1=-2, axis2=-1)).T / n

    @property
    def shape(self) -> tuple[int, int, int]:
        l, k, n, _ = self.R.shape
        return l, k, n


def correlation_template(model: CorrelationModel, n: int) -> np.ndarray:
    if model.kind == "identity":
        return np.eye(n, dtype=complex)
    return toeplitz(model.r ** np.arange(n)).astype(complex)


def hermitian_factor(R: np.ndarray) -> np.ndarray:
    """Factor of a batch of Hermitian PSD matrices via eigendecomposition.

    Eigenvalues below ``-1e-12 * ||R||`` are rejected; smaller negative
    round-off is clipped to zero.
    """
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    eigval, eigvec = np.linalg.eigh(R)
    scale = np.max(np.abs(eigval), axis=-1, keepdims=True)
    if np.any(eigval < -EIG_CLIP_TOL * np.maximum(scale, np.finfo(float).tiny)):
        raise ValueError("correlation matrix is not positive semidefinite")
    return eigvec * np.sqrt(np.clip(eigval, 0.0, None))[..., None, :]


def correlation_from_betas(betas: np.ndarray, n: int, model: CorrelationModel | None = None) -> CorrelationSet:
    """Build ``R_kl = beta_kl T`` for a (K, L) matrix of ``beta``."""
    model = model or CorrelationModel()
    betas = np.asarray(betas, dtype=float)
    if np.any(betas < 0):
        raise ValueError("large-scale fading coefficients must be non-negative")
    template = correlation_template(model, n)
    R = betas.T[:, :, None, None] * template
    factors = np.sqrt(betas.T)[:, :, None, None] * hermitian_factor(template)
    return CorrelationSet(R=R, factors=factors)


def build_correlation(config: SystemConfig, deployment) -> CorrelationSet:
    return correlation_from_betas(deployment.betas, config.antennas_per_ap, config.correlation_model)


def sample_channel(correlation: CorrelationSet, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """Draw ``size`` independent realizations; returns shape (size, L, K, N)."""
    l, k, n = correlation.shape
    w = complex_normal(rng, (size, l, k, n))
    return np.einsum("lkmn,tlkn->tlkm", correlation.factors, w)
