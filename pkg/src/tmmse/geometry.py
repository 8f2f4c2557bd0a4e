"""Network drops: AP/UE positions and large-scale fading.

The path loss is the three-slope model for a 2 GHz carrier and the shadowing
is the two-component correlated Gaussian field over (UE, AP) pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

log = logging.getLogger(__name__)

FIRST_BREAK_M = 10.0
SECOND_BREAK_M = 50.0


@dataclass(frozen=True)
class Deployment:
    """One network drop.

    Attributes
    ----------
    ap_positions : (L, 2) array, metres
    ue_positions : (K, 2) array, metres
    shadowing : (K, L) array, dB; only used for pairs at least 50 m apart
    betas : (K, L) array, linear large-scale fading coefficients
    clipped_mass : sum of negative eigenvalues removed from the shadowing
        covariance before factorisation (diagnostic)
    """

    ap_positions: np.ndarray
    ue_positions: np.ndarray
    shadowing: np.ndarray
    betas: np.ndarray
    clipped_mass: float = 0.0

    @property
    def distances(self) -> np.ndarray:
        return pairwise_distances(self.ue_positions, self.ap_positions)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = np.asarray(a, dtype=float)[:, None, :] - np.asarray(b, dtype=float)[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def path_loss_db(d) -> np.ndarray | float:
    """Three-slope path loss (without shadowing), in dB, for distance(s) ``d``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    with np.errstate(divide="ignore"):
        log_d = np.log10(np.maximum(d, FIRST_BREAK_M))
    pl = np.where(
        d < FIRST_BREAK_M,
        -81.2,
        np.where(d < SECOND_BREAK_M, -61.2 - 20.0 * log_d, -35.7 - 35.0 * log_d),
    )
    return float(pl) if pl.ndim == 0 else pl


def shadowing_covariance(
    ue_positions: np.ndarray, ap_positions: np.ndarray, config: SystemConfig
) -> np.ndarray:
    """Covariance of the flattened (K*L,) shadowing vector, row-major in (k, l).

    ``E{F_kl F_ij} = (std^2 / 2) (2^(-delta_ki / d0) + 2^(-upsilon_lj / d0))``.
    """
    d0 = config.shadowing_decorrelation
    ue_kernel = 2.0 ** (-pairwise_distances(ue_positions, ue_positions) / d0)
    ap_kernel = 2.0 ** (-pairwise_distances(ap_positions, ap_positions) / d0)
    k, l = len(ue_positions), len(ap_positions)
    cov = np.kron(ue_kernel, np.ones((l, l))) + np.kron(np.ones((k, k)), ap_kernel)
    return 0.5 * config.shadowing_std**2 * cov


def _psd_factor(cov: np.ndarray) -> tuple[np.ndarray, float]:
    eigval, eigvec = np.linalg.eigh(cov)
    negative = eigval < 0
    clipped = float(-eigval[negative].sum())
    eigval = np.where(negative, 0.0, eigval)
    return eigvec * np.sqrt(eigval), clipped


def shadowing_field(
    ue_positions: np.ndarray,
    ap_positions: np.ndarray,
    config: SystemConfig,
    rng: np.random.Generator,
    size: int | None = None,
) -> tuple[np.ndarray, float]:
    """Draw the correlated shadowing field F (dB).

    Returns ``(F, clipped_mass)`` where F has shape (K, L), or
    (size, K, L) when ``size`` is given.
    """
    k, l = len(ue_positions), len(ap_positions)
    if config.shadowing_std == 0:
        shape = (k, l) if size is None else (size, k, l)
        return np.zeros(shape), 0.0
    factor, clipped = _psd_factor(shadowing_covariance(ue_positions, ap_positions, config))
    if clipped > 0:
        log.debug("shadowing covariance: clipped %.3e of negative eigenvalue mass", clipped)
    n = 1 if size is None else size
    field = rng.standard_normal((n, k * l)) @ factor.T
    field = field.reshape(n, k, l)
    return (field[0] if size is None else field), clipped


def large_scale_fading(distances: np.ndarray, shadowing: np.ndarray) -> np.ndarray:
    """Linear ``beta_kl``; shadowing only enters the third slope."""
    distances = np.asarray(distances, dtype=float)
    pl = path_loss_db(distances)
    pl = np.where(distances >= SECOND_BREAK_M, pl + shadowing, pl)
    return 10.0 ** (pl / 10.0)


def deploy(
    config: SystemConfig,
    rng: np.random.Generator,
    shadowing_rng: np.random.Generator | None = None,
) -> Deployment:
    """Drop L APs and K UEs uniformly in the square and compute ``beta``.

    Positions come from ``rng``; the shadowing field from ``shadowing_rng``
    (defaults to ``rng``).
    """
    side = config.area_side
    ap = rng.uniform(0.0, side, size=(config.num_aps, 2))
    ue = rng.uniform(0.0, side, size=(config.num_ues, 2))
    shadow, clipped = shadowing_field(ue, ap, config, shadowing_rng if shadowing_rng is not None else rng)
    betas = large_scale_fading(pairwise_distances(ue, ap), shadow)
    return Deployment(ap_positions=ap, ue_positions=ue, shadowing=shadow, betas=betas, clipped_mass=clipped)


def deployment_from_positions(
    ue_positions: np.ndarray,
    ap_positions: np.ndarray,
    config: SystemConfig,
    rng: np.random.Generator | None = None,
) -> Deployment:
    """Build a Deployment for given positions (shadowing drawn if ``rng`` is given)."""
    ue = np.atleast_2d(np.asarray(ue_positions, dtype=float))
    ap = np.atleast_2d(np.asarray(ap_positions, dtype=float))
    if rng is None:
        shadow, clipped = np.zeros((len(ue), len(ap))), 0.0
    else:
        shadow, clipped = shadowing_field(ue, ap, config, rng)
    betas = large_scale_fading(pairwise_distances(ue, ap), shadow)
    return Deployment(ap_positions=ap, ue_positions=ue, shadowing=shadow, betas=betas, clipped_mass=clipped)
