"""Analysis helpers that need the true model: clipping, surplus, good events."""
from __future__ import annotations

import math

import numpy as np

from .envcore import TabularMdp
from .ledger import CSV_HEADER, RegretLedger, Summary, flatness, summarize
from .oracle import GapReport, canonical_optimal_policy, occupancy, optimal_values, policy_value
from .rl import BonusSpec, EpisodeDataset, GoodEventTrace, PviOutput, bonus_table, pvi

__all__ = [
    "clip",
    "clip_threshold",
    "surplus",
    "bonus_event_held",
    "clipped_suboptimality_bound",
    "GoodEventTrace",
    "RegretLedger",
    "Summary",
    "CSV_HEADER",
    "flatness",
    "summarize",
]


def clip(x, eps):
    """``x`` where ``x >= eps``, else 0.  Works elementwise on arrays."""
    if np.any(np.asarray(eps) < 0):
        raise ValueError("clip threshold must be nonnegative")
    out = np.where(np.asarray(x) >= eps, x, 0.0)
    return float(out) if out.ndim == 0 else out


def clip_threshold(report: GapReport, h: int, pi_star_count: int) -> float:
    """Gap-scaled clip level for horizon ``h``.

    Unique optimal policy: ``delta_min / (2h + 2)``.  Otherwise
    ``d_min * delta_min / (2 S A h)``, which needs ``d_min``.
    """
    gap = report.delta_min
    if not (math.isfinite(gap) and gap > 0):
        raise ValueError("delta_min must be positive and finite")
    if pi_star_count == 1:
        return gap / (2 * h + 2)
    if report.d_min is None:
        raise ValueError("d_min unavailable: optimal-policy enumeration hit its cap")
    S, A, _ = report.dims
    return report.d_min * gap / (2 * S * A * h)


def surplus(mdp: TabularMdp, pvi_out: PviOutput, data: EpisodeDataset | None = None,
            spec: BonusSpec | None = None, delta: float | None = None) -> np.ndarray:
    """``E = r + P V_hat' - Q_hat`` with the true transitions.

    Negative entries mean the bonus failed to cover the estimation error
    there.  The remaining arguments are accepted for symmetry with
    :func:`~tiered_rl.rl.pvi` and are not needed for the computation.
    """
    nxt = np.einsum("hsat,ht->hsa", mdp.transitions, pvi_out.v_hat[1:])
    return mdp.rewards + nxt - pvi_out.q_hat


def bonus_event_held(mdp: TabularMdp, pvi_out: PviOutput, data: EpisodeDataset,
                     spec: BonusSpec, delta: float) -> bool:
    """Whether ``|(P_hat - P) V_hat'| < b`` at every visited cell."""
    b = bonus_table(spec, data, delta)
    dev = np.abs(np.einsum("hsat,ht->hsa", data.p_hat - mdp.transitions, pvi_out.v_hat[1:]))
    return bool(np.all((dev < b) | np.isinf(b)))


def clipped_suboptimality_bound(mdp: TabularMdp, data: EpisodeDataset, spec: BonusSpec,
                                delta: float, report: GapReport) -> tuple[float, float]:
    """Clipped bonus mass along a fixed optimal policy, and the true PVI gap.

    Returns ``(bound, gap)`` with
    ``bound = 2 E_pi* sum_h Clip[min(H, 2 B1 sqrt(log(B2/delta)/N)) | eps]``
    taken over the lowest-index optimal policy and
    ``gap = V* - V^{pi_PVI}`` for PVI run on ``data`` at level ``delta``.
    """
    S, A, H = mdp.S, mdp.A, mdp.H
    eps = clip_threshold(report, H, report.pi_star_count)
    n = data.n_sa
    with np.errstate(divide="ignore"):
        width = 2.0 * spec.b1(S, A, H) * np.sqrt(math.log(spec.b2(S, A, H) / delta) / np.maximum(n, 1))
    terms = np.where(n > 0, np.minimum(H, width), float(H))
    pi_star = canonical_optimal_policy(report)
    d = occupancy(mdp, pi_star).d
    bound = 2.0 * float(np.sum(d * clip(terms, eps)))
    out = pvi(mdp.rewards, data, spec, delta)
    v_star = float(optimal_values(mdp).v[0, mdp.initial_state])
    return bound, v_star - policy_value(mdp, out.policy)
