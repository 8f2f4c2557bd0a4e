"""Team MMSE receive combining for cell-free uplinks.

Every combiner here has the two-stage form ``v_kl = A_l c_kl``: a local MMSE
stage ``A_l`` computed from the APs own estimates, followed by a K-vector
correction ``c_kl`` that accounts for the other APs according to what AP l
knows about them (nothing but statistics, the estimates of upstream APs on a
serial fronthaul, or everything).

Shapes follow the AP-major convention of :mod:`tmmse.channel`; realization
batches carry a leading axis T. With ``G_l = [hhat_1l, ..., hhat_Kl]``
(N x K), the local stage is ``A_l = B_l^{-1} G_l`` and its effective gain is
``Lambda_l = G_l^H A_l`` (K x K, Hermitian PSD with eigenvalues in [0, 1)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import CorrelationSet, sample_channel
from .config import SystemConfig
from .pilot import EstimateSet, EstimatorStatistics, PilotAssignment, estimator_statistics, mmse_estimate, pilot_observation

log = logging.getLogger(__name__)

SCHEMES = ("uni_tmmse", "cent_tmmse", "stat_tmmse", "cent_mmse", "local_mmse")


class DegenerateSystemError(np.linalg.LinAlgError):
    """A combining system that must be solved exactly turned out singular."""


def hermitian(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


@dataclass(frozen=True)
class LocalStage:
    """Local MMSE stage ``A`` (T, L, N, K) and ``Lam = G^H A`` (T, L, K, K)."""

    A: np.ndarray
    Lam: np.ndarray

    @property
    def num_aps(self) -> int:
        return self.A.shape[1]

    @property
    def num_ues(self) -> int:
        return self.A.shape[-1]


@dataclass(frozen=True)
class TeamStatistics:
    """Long-term matrices of the unidirectional recursion.

    All arrays are (L, K, K) and indexed by *position* along the fronthaul:
    position ``q`` is AP ``order[q]``. ``Pi[-1]`` is zero and
    ``Pi[q] = mean_LS[q + 1] + Pi[q + 1] @ mean_Sbar[q + 1]``.
    """

    order: np.ndarray
    Pi: np.ndarray
    mean_LS: np.ndarray
    mean_Sbar: np.ndarray
    mean_Lam: np.ndarray
    sample_count: int
    discarded: int = 0

    def mean_lambda_by_ap(self) -> np.ndarray:
        """``E{Lambda_l}`` in original AP indexing."""
        out = np.empty_like(self.mean_Lam)
        out[self.order] = self.mean_Lam
        return out


@dataclass(frozen=True)
class CombinerSet:
    """Combining vectors ``V[t, l, :, k] = v_kl`` for a named scheme."""

    scheme: str
    V: np.ndarray
    ap_order: np.ndarray
    flagged: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.flagged is None:
            object.__setattr__(self, "flagged", np.zeros(self.V.shape[0], dtype=bool))


def local_stage(estimates: EstimateSet, config: SystemConfig) -> LocalStage:
    """``A_l = (sum_i (hhat_il hhat_il^H + C_il) + sigma^2/p I)^{-1} G_l``."""
    G = np.swapaxes(estimates.hhat, -1, -2)
    n = G.shape[-2]
    B = G @ hermitian(G) + estimates.C.sum(axis=1) + config.noise_to_power * np.eye(n)
    A = np.linalg.solve(B, G)
    Lam = hermitian(G) @ A
    return LocalStage(A=A, Lam=0.5 * (Lam + hermitian(Lam)))


def s_matrices(Lam: np.ndarray, Pi: np.ndarray, strict: bool = False):
    """Per-realization ``S = (I - Pi Lam)^{-1} (I - Pi)`` and ``Sbar = I - Lam S``.

    ``Lam`` is (..., K, K) and ``Pi`` broadcasts against it. Returns
    ``(S, Sbar, singular)`` where ``singular`` marks realizations where the
    system could not be solved. With ``strict`` those entries are NaN;
    otherwise a pseudo-inverse is used for them.
    """
    k = Lam.shape[-1]
    eye = np.eye(k)
    M = eye - Pi @ Lam
    rhs = np.broadcast_to(eye - Pi, M.shape)
    singular = np.zeros(M.shape[:-2], dtype=bool)
    try:
        S = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        S = np.empty(M.shape, dtype=complex)
        for idx in np.ndindex(*M.shape[:-2]):
            try:
                S[idx] = np.linalg.solve(M[idx], rhs[idx])
            except np.linalg.LinAlgError:
                singular[idx] = True
                S[idx] = np.nan if strict else np.linalg.pinv(M[idx]) @ rhs[idx]
    bad = ~np.all(np.isfinite(S), axis=(-1, -2)) & ~singular
    if np.any(bad):
        singular |= bad
        if not strict:
            for idx in zip(*np.nonzero(bad)):
                S[idx] = np.linalg.pinv(M[idx]) @ rhs[idx]
    Sbar = eye - Lam @ S
    return S, Sbar, singular


def team_statistics_from_samples(lambda_for_position, num_aps: int, order=None) -> TeamStatistics:
    """Run the backward recursion given a sampler of ``Lambda`` per position.

    ``lambda_for_position(q)`` returns a (T, K, K) batch of ``Lambda`` for the
    AP at fronthaul position ``q``; it is called for q = L-1, ..., 0, each
    batch independent of the others. Realizations on which
    ``I - Pi Lambda`` is singular are discarded.
    """
    order = np.arange(num_aps) if order is None else np.asarray(order)
    Pi = mean_LS = mean_Sbar = mean_Lam = None
    discarded = 0
    count = 0
    for q in range(num_aps - 1, -1, -1):
        lam = lambda_for_position(q)
        if Pi is None:
            k = lam.shape[-1]
            Pi = np.zeros((num_aps, k, k), dtype=complex)
            mean_LS, mean_Sbar, mean_Lam = (np.zeros_like(Pi) for _ in range(3))
        S, Sbar, singular = s_matrices(lam, Pi[q], strict=True)
        keep = ~singular
        if not np.any(keep):
            raise DegenerateSystemError(f"all training realizations singular at position {q}")
        if np.any(singular):
            discarded += int(singular.sum())
            log.warning("discarded %d singular training realizations at position %d", singular.sum(), q)
        mean_LS[q] = np.mean(lam[keep] @ S[keep], axis=0)
        mean_Sbar[q] = np.mean(Sbar[keep], axis=0)
        mean_Lam[q] = np.mean(lam, axis=0)
        count = max(count, lam.shape[0])
        if q > 0:
            Pi[q - 1] = mean_LS[q] + Pi[q] @ mean_Sbar[q]
    return TeamStatistics(order=order, Pi=Pi, mean_LS=mean_LS, mean_Sbar=mean_Sbar,
                          mean_Lam=mean_Lam, sample_count=count, discarded=discarded)


def _single_ap(correlation: CorrelationSet, est: EstimatorStatistics, ap: int):
    sl = slice(ap, ap + 1)
    corr = CorrelationSet(R=correlation.R[sl], factors=correlation.factors[sl])
    stats = EstimatorStatistics(gain=est.gain[sl], psi=est.psi[sl], Q=est.Q[sl], C=est.C[sl])
    return corr, stats


def estimate_team_statistics(
    correlation: CorrelationSet,
    config: SystemConfig,
    assignment: PilotAssignment,
    num_samples: int,
    rng: np.random.Generator,
    order=None,
) -> TeamStatistics:
    """Monte Carlo estimate of the recursion statistics for one scenario.

    Each AP gets its own batch of ``num_samples`` channel and pilot-noise
    draws, so the sample means at different positions are independent.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be at least 1")
    num_aps = correlation.shape[0]
    order = np.arange(num_aps) if order is None else np.asarray(order)
    est = estimator_statistics(correlation, assignment, config)

    def draw(q: int) -> np.ndarray:
        corr, stats = _single_ap(correlation, est, int(order[q]))
        h = sample_channel(corr, rng, num_samples)
        z = pilot_observation(h, assignment, config, rng)
        local = local_stage(mmse_estimate(z, corr, assignment, config, stats), config)
        return local.Lam[:, 0]

    return team_statistics_from_samples(draw, num_aps, order)


def unidirectional_tmmse(local: LocalStage, stats: TeamStatistics, scheme: str = "uni_tmmse") -> CombinerSet:
    """Serial-fronthaul TMMSE: ``v_kl = A_l S_l Sbar_{l-1} ... Sbar_1 e_k``.

    The product runs over the APs upstream of l in ``stats.order``; the
    returned combiners are in original AP indexing.
    """
    order = stats.order
    A = local.A[:, order]
    S, Sbar, singular = s_matrices(local.Lam[:, order], stats.Pi)
    t, l, n, k = A.shape
    V = np.empty_like(A)
    P = np.broadcast_to(np.eye(k, dtype=complex), (t, k, k))
    for q in range(l):
        V[:, q] = A[:, q] @ (S[:, q] @ P)
        P = Sbar[:, q] @ P
    out = np.empty_like(V)
    out[:, order] = V
    return CombinerSet(scheme, out, np.asarray(order), flagged=np.any(singular, axis=1))


def _block_system(Lam: np.ndarray) -> np.ndarray:
    """LK x LK matrix with identity diagonal blocks and Lam_j in block column j."""
    l, k, _ = Lam.shape
    row = np.swapaxes(Lam, 0, 1).reshape(k, l * k)
    M = np.tile(row, (l, 1))
    for j in range(l):
        M[j * k:(j + 1) * k, j * k:(j + 1) * k] = np.eye(k)
    return M


def solve_block_system(Lam: np.ndarray) -> np.ndarray:
    """Solve ``a_l + sum_{j != l} Lam_j a_j = I`` for (L, K, K) ``Lam``.

    One LU factorisation serves all K right-hand sides. Returns ``a`` with
    shape (L, K, K); column k of ``a[l]`` is ``a_kl``.
    """
    l, k, _ = Lam.shape
    M = _block_system(Lam)
    rhs = np.tile(np.eye(k, dtype=complex), (l, 1))
    with np.errstate(all="raise"):
        try:
            lu = scipy.linalg.lu_factor(M, check_finite=True)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise DegenerateSystemError("singular block combining system") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise DegenerateSystemError("singular block combining system")
    return scipy.linalg.lu_solve(lu, rhs).reshape(l, k, k)


def solve_reduced_system(Lam: np.ndarray) -> np.ndarray:
    """Same solution as :func:`solve_block_system` via a K x K reduction.

    With ``W = sum_j Lam_j a_j`` each block row gives
    ``a_l = (I - Lam_l)^{-1} (I - W)`` and summing yields
    ``I - W = (I + sum_j Lam_j (I - Lam_j)^{-1})^{-1}``. Requires every
    ``I - Lam_l`` to be invertible, which holds for MMSE local stages.
    Works on batches (..., L, K, K).
    """
    k = Lam.shape[-1]
    eye = np.eye(k)
    resolvent = np.linalg.inv(eye - Lam)
    D = np.sum(Lam @ resolvent, axis=-3)
    outer = np.linalg.inv(eye + D)
    return resolvent @ outer[..., None, :, :]


def centralized_tmmse(local: LocalStage, method: str = "block") -> CombinerSet:
    """Centralized TMMSE, ``v_kl = A_l a_kl`` with the per-realization block system.

    ``method="block"`` factorises the LK x LK system per realization;
    ``method="reduced"`` uses the equivalent K x K reduction (much faster
    for large L).
    """
    A, Lam = local.A, local.Lam
    if method == "block":
        a = np.stack([solve_block_system(Lam[t]) for t in range(Lam.shape[0])])
    elif method == "reduced":
        try:
            a = solve_reduced_system(Lam)
        except np.linalg.LinAlgError as exc:
            raise DegenerateSystemError("singular reduced combining system") from exc
    else:
        raise ValueError(f"unknown method {method!r}")
    return CombinerSet("cent_tmmse", A @ a, np.arange(local.num_aps))


def statistical_tmmse(local: LocalStage, stats: TeamStatistics) -> CombinerSet:
    """Statistical TMMSE: deterministic ``a_kl`` from the mean effective gains."""
    a = solve_block_system(stats.mean_lambda_by_ap())
    return CombinerSet("stat_tmmse", local.A @ a, np.arange(local.num_aps))


def centralized_mmse_baseline(estimates: EstimateSet, config: SystemConfig, chunk: int = 64) -> CombinerSet:
    """Classic centralized MMSE over the stacked LN-dimensional estimates."""
    hhat = estimates.hhat
    t, l, k, n = hhat.shape
    C = estimates.C.sum(axis=1)
    C_block = scipy.linalg.block_diag(*C) + config.noise_to_power * np.eye(l * n)
    V = np.empty((t, l * n, k), dtype=complex)
    for start in range(0, t, chunk):
        G = np.swapaxes(hhat[start:start + chunk], -1, -2).reshape(-1, l * n, k)
        M = G @ hermitian(G) + C_block
        V[start:start + chunk] = np.linalg.solve(M, G)
    return CombinerSet("cent_mmse", V.reshape(t, l, n, k), np.arange(l))


def local_mmse_baseline(local: LocalStage) -> CombinerSet:
    return CombinerSet("local_mmse", local.A.copy(), np.arange(local.num_aps))


def sort_aps(betas: np.ndarray) -> np.ndarray:
    """Fronthaul order by descending total large-scale gain; ties keep index order."""
    totals = np.asarray(betas, dtype=float).sum(axis=0)
    return np.argsort(-totals, kind="stable")


def fixed_point_residual(
    estimates: EstimateSet,
    local: LocalStage,
    stats: TeamStatistics,
    combiners: CombinerSet,
    mean_LS: np.ndarray | None = None,
    mean_Sbar: np.ndarray | None = None,
) -> float:
    """Average relative residual of the TMMSE stationarity condition.

    At position q the condition is
    ``v_q = A_q (I - sum_{j<q} G_j^H v_j - sum_{j>q} E{G_j^H v_j | info_q})``
    where the downstream conditional means are expanded as
    ``E{Lam_j S_j} prod_{q<s<j} E{Sbar_s} Sbar_q P_q``. The means default to
    the ones stored in ``stats``; pass independent estimates to measure how
    far the recursion is from the population fixed point.
    """
    mean_LS = stats.mean_LS if mean_LS is None else mean_LS
    mean_Sbar = stats.mean_Sbar if mean_Sbar is None else mean_Sbar
    order = stats.order
    G = np.swapaxes(estimates.hhat[:, order], -1, -2)
    A = local.A[:, order]
    V = combiners.V[:, order]
    S, Sbar, _ = s_matrices(local.Lam[:, order], stats.Pi)
    t, l, n, k = A.shape
    eye = np.eye(k)
    contrib = hermitian(G) @ V  # G_j^H v_j, known downstream of j
    P = np.broadcast_to(eye.astype(complex), (t, k, k))
    num = den = 0.0
    for q in range(l):
        upstream = contrib[:, :q].sum(axis=1)
        tail = np.zeros((k, k), dtype=complex)
        carry = eye.astype(complex)
        for j in range(q + 1, l):
            tail = tail + mean_LS[j] @ carry
            carry = mean_Sbar[j] @ carry
        downstream = tail @ (Sbar[:, q] @ P)
        target = A[:, q] @ (eye - upstream - downstream)
        num += np.sum(np.abs(V[:, q] - target) ** 2)
        den += np.sum(np.abs(V[:, q]) ** 2)
        P = Sbar[:, q] @ P
    return float(np.sqrt(num / den))
