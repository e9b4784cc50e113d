"""Exact dynamic-programming ground truth for tabular MDPs.

Everything here assumes full knowledge of the model.  The learners never
call into this module; it is used for regret accounting, for diagnostics and
for checking the structural results on small instances.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .envcore import TabularMdp
from .policy import DetPolicy, MixedPolicy

__all__ = [
    "DetPolicy",
    "MixedPolicy",
    "ValueTables",
    "Occupancy",
    "GapReport",
    "EnumerationCapExceeded",
    "GAP_TOL",
    "DEFAULT_CAP",
    "optimal_values",
    "policy_values",
    "policy_value",
    "occupancy",
    "suboptimality",
    "gap_report",
    "enumerate_optimal_policies",
    "canonical_optimal_policy",
    "convert_to_optimal",
    "check_occupancy_bound",
    "OccupancyBoundReport",
    "well_covered_policy",
    "CoverResult",
]

GAP_TOL = 1e-9
DEFAULT_CAP = 10**6


class EnumerationCapExceeded(RuntimeError):
    """Raised when the set of optimal policies is larger than the cap."""


@dataclass(frozen=True)
class ValueTables:
    """``v`` has shape (H+1, S) with ``v[H] == 0``; ``q`` has shape (H, S, A)."""

    v: np.ndarray
    q: np.ndarray

    @property
    def v1(self) -> np.ndarray:
        return self.v[0]


@dataclass(frozen=True)
class Occupancy:
    """State-action visitation probabilities ``d[h, s, a]``."""

    d: np.ndarray

    @property
    def state(self) -> np.ndarray:
        return self.d.sum(axis=-1)

    def support(self) -> np.ndarray:
        return self.d > 0


@dataclass
class GapReport:
    gaps: np.ndarray
    delta_min: float
    d_min: float | None
    opt_action_sets: np.ndarray
    pi_star_count: int | None
    values: ValueTables = field(repr=False)
    note: str = ""

    @property
    def dims(self) -> tuple[int, int, int]:
        H, S, A = self.gaps.shape
        return S, A, H

    def optimal_actions(self, h: int, s: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.opt_action_sets[h, s])]

    def to_json(self) -> dict:
        return {
            "delta_min": None if np.isinf(self.delta_min) else float(self.delta_min),
            "d_min": self.d_min,
            "pi_star_count": self.pi_star_count,
            "v_star": float(self.values.v[0, 0]),
            "note": self.note,
        }


def _check_policy(mdp: TabularMdp, policy) -> None:
    if not isinstance(policy, (DetPolicy, MixedPolicy)):
        raise TypeError(f"expected a DetPolicy or MixedPolicy, got {type(policy).__name__}")
    policy.check(mdp.A, (mdp.H, mdp.S))


def optimal_values(mdp: TabularMdp) -> ValueTables:
    H, S, A = mdp.H, mdp.S, mdp.A
    v = np.zeros((H + 1, S))
    q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        q[h] = mdp.rewards[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = q[h].max(axis=-1)
    return ValueTables(v, q)


def policy_values(mdp: TabularMdp, policy: DetPolicy) -> ValueTables:
    """V^pi and Q^pi tables for a deterministic policy by backward induction."""
    _check_policy(mdp, policy)
    H, S, A = mdp.H, mdp.S, mdp.A
    v = np.zeros((H + 1, S))
    q = np.empty((H, S, A))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        q[h] = mdp.rewards[h] + mdp.transitions[h] @ v[h + 1]
        v[h] = q[h, idx, policy.actions[h]]
    return ValueTables(v, q)


def _det_forward(mdp: TabularMdp, acts: np.ndarray, want_occupancy: bool):
    H, S = mdp.H, mdp.S
    idx = np.arange(S)
    dist = np.zeros(S)
    dist[mdp.initial_state] = 1.0
    total = 0.0
    d = np.zeros((H, S, mdp.A)) if want_occupancy else None
    for h in range(H):
        a = acts[h]
        total += float(dist @ mdp.rewards[h, idx, a])
        if want_occupancy:
            d[h, idx, a] = dist
        if h + 1 < H:
            dist = dist @ mdp.transitions[h, idx, a]
    return total, d


def policy_value(mdp: TabularMdp, policy) -> float:
    """V^pi_1(s_1) by a forward pass over the state distribution."""
    _check_policy(mdp, policy)
    if isinstance(policy, MixedPolicy):
        return float(sum(w * _det_forward(mdp, c.actions, False)[0]
                         for c, w in zip(policy.components, policy.weights)))
    return _det_forward(mdp, policy.actions, False)[0]


def suboptimality(mdp: TabularMdp, policy, gaps: np.ndarray | None = None) -> float:
    """``V* - V^pi`` as the occupancy-weighted sum of gaps.

    With the tie-snapped gap table any optimal policy scores exactly 0,
    which a difference of two separately rounded values does not.
    """
    if gaps is None:
        gaps, _ = _gaps_and_sets(mdp, optimal_values(mdp), GAP_TOL)
    return float(np.sum(occupancy(mdp, policy).d * gaps))


def occupancy(mdp: TabularMdp, policy) -> Occupancy:
    _check_policy(mdp, policy)
    if isinstance(policy, MixedPolicy):
        d = np.zeros((mdp.H, mdp.S, mdp.A))
        for c, w in zip(policy.components, policy.weights):
            d += w * _det_forward(mdp, c.actions, True)[1]
        return Occupancy(d)
    return Occupancy(_det_forward(mdp, policy.actions, True)[1])


def _gaps_and_sets(mdp: TabularMdp, values: ValueTables, tol: float):
    gaps = values.v[:-1, :, None] - values.q
    gaps = np.where(gaps < tol, 0.0, gaps)
    return gaps, gaps == 0.0


def enumerate_optimal_policies(mdp: TabularMdp, cap: int = DEFAULT_CAP,
                               opt_sets: np.ndarray | None = None) -> list[DetPolicy]:
    """All optimal deterministic policies, one per occupancy class.

    Reachability is tracked layer by layer under the partial policy; at
    unreachable states the lowest-index optimal action is used.
    """
    if opt_sets is None:
        _, opt_sets = _gaps_and_sets(mdp, optimal_values(mdp), GAP_TOL)
    H, S = mdp.H, mdp.S
    idx = np.arange(S)
    first_opt = opt_sets.argmax(axis=-1)
    choices = [[np.flatnonzero(opt_sets[h, s]) for s in range(S)] for h in range(H)]
    out: list[DetPolicy] = []
    acts = np.zeros((H, S), dtype=np.int64)

    def recurse(h: int, dist: np.ndarray) -> None:
        if h == H:
            if len(out) >= cap:
                raise EnumerationCapExceeded(
                    f"more than {cap} optimal policies (up to occupancy); "
                    "raise the cap or use a smaller instance")
            out.append(DetPolicy(acts))
            return
        reach = np.flatnonzero(dist > 0)
        acts[h] = first_opt[h]
        for combo in itertools.product(*(choices[h][s] for s in reach)):
            acts[h, reach] = combo
            nxt = dist @ mdp.transitions[h, idx, acts[h]] if h + 1 < H else dist
            recurse(h + 1, nxt)

    start = np.zeros(S)
    start[mdp.initial_state] = 1.0
    recurse(0, start)
    return out


def gap_report(mdp: TabularMdp, cap: int = DEFAULT_CAP, tol: float = GAP_TOL) -> GapReport:
    values = optimal_values(mdp)
    gaps, opt_sets = _gaps_and_sets(mdp, values, tol)
    pos = gaps[gaps > 0]
    delta_min = float(pos.min()) if pos.size else float("inf")
    try:
        pis = enumerate_optimal_policies(mdp, cap, opt_sets)
    except EnumerationCapExceeded as exc:
        return GapReport(gaps, delta_min, None, opt_sets, None, values, note=str(exc))
    d_min = float("inf")
    for pi in pis:
        d = _det_forward(mdp, pi.actions, True)[1]
        nz = d[d > 0]
        d_min = min(d_min, float(nz.min()))
    return GapReport(gaps, delta_min, d_min, opt_sets, len(pis), values)


def canonical_optimal_policy(report: GapReport) -> DetPolicy:
    """Lowest-index optimal action everywhere."""
    return DetPolicy(report.opt_action_sets.argmax(axis=-1))


def convert_to_optimal(mdp: TabularMdp, policy: DetPolicy, report: GapReport) -> DetPolicy:
    """Keep optimal choices, replace the rest by the first optimal action."""
    _check_policy(mdp, policy)
    H, S = policy.actions.shape
    hh, ss = np.meshgrid(np.arange(H), np.arange(S), indexing="ij")
    keep = report.opt_action_sets[hh, ss, policy.actions]
    return DetPolicy(np.where(keep, policy.actions, report.opt_action_sets.argmax(axis=-1)))


@dataclass
class OccupancyBoundReport:
    lhs: np.ndarray
    rhs: np.ndarray
    holds: bool
    regret_sum: float

    @property
    def slack(self) -> np.ndarray:
        return self.lhs - self.rhs


def check_occupancy_bound(mdp: TabularMdp, policies, report: GapReport | None = None,
                          tol: float = 1e-8) -> OccupancyBoundReport:
    """Cumulative occupancy of any policy sequence versus its optimal conversion.

    Checks ``sum_k d^{pi_k} >= sum_k d^{pi*_k} - regret / delta_min`` at every
    cell, where ``pi*_k`` is ``convert_to_optimal(pi_k)``.
    """
    policies = list(policies)
    if not policies:
        raise ValueError("need at least one policy")
    if report is None:
        report = gap_report(mdp)
    if not np.isfinite(report.delta_min) or report.delta_min <= 0:
        raise ValueError("the bound needs a strictly positive minimal gap")
    v_star = report.values.v[0, mdp.initial_state]
    lhs = np.zeros((mdp.H, mdp.S, mdp.A))
    opt = np.zeros_like(lhs)
    regret = 0.0
    for pi in policies:
        value, d = _det_forward(mdp, pi.actions, True)
        lhs += d
        regret += v_star - value
        opt += occupancy(mdp, convert_to_optimal(mdp, pi, report)).d
    rhs = opt - regret / report.delta_min
    return OccupancyBoundReport(lhs, rhs, bool(np.all(lhs - rhs >= -tol)), regret)


@dataclass
class CoverResult:
    mixture: MixedPolicy
    tilde_d: np.ndarray
    holds: bool
    lhs: np.ndarray
    cover_occupancy: np.ndarray
    sufficient: list[int]
    z_div_sizes: np.ndarray
    hit_counts: np.ndarray


def well_covered_policy(mdp: TabularMdp, opt_sequence, report: GapReport | None = None,
                        cap: int = DEFAULT_CAP, tol: float = 1e-9) -> CoverResult:
    """Build the well-covered mixture for a sequence of optimal policies.

    Indices whose policy touches a rarely-hit cell are dropped; the rest are
    mixed uniformly.  ``holds`` reports whether the cumulative occupancy of
    the sequence is at least ``K/2 * tilde_d`` on the mixture's support.
    """
    seq = list(opt_sequence)
    if not seq:
        raise ValueError("need at least one policy")
    if report is None:
        report = gap_report(mdp, cap)
    v_star = report.values.v[0, mdp.initial_state]
    H = mdp.H
    K = len(seq)
    occs = np.empty((K, H, mdp.S, mdp.A))
    for k, pi in enumerate(seq):
        value, occs[k] = _det_forward(mdp, pi.actions, True)
        if abs(value - v_star) > 1e-9:
            raise ValueError(f"policy {k} in the sequence is not optimal (value gap {v_star - value:.3g})")

    reps = enumerate_optimal_policies(mdp, cap, report.opt_action_sets)
    rep_occ = np.stack([_det_forward(mdp, p.actions, True)[1] for p in reps])
    hit_by_rep = rep_occ > 0
    z_star = hit_by_rep.any(axis=0)
    z_div = z_star & ~hit_by_rep.all(axis=0)
    z_div_sizes = z_div.reshape(H, -1).sum(axis=1)
    d_star_min = np.where(hit_by_rep, rep_occ, np.inf).min(axis=0)
    d_star_min = np.where(z_star, d_star_min, 0.0)

    hits = occs > 0
    n_hits = hits.sum(axis=0)
    threshold = K / (2.0 * (z_div_sizes + 1) * H)
    insuff = z_star & (n_hits < threshold[:, None, None])
    dropped = hits[:, insuff].any(axis=1) if insuff.any() else np.zeros(K, dtype=bool)
    sufficient = [k for k in range(K) if not dropped[k]]

    mixture = MixedPolicy.uniform(seq[k] for k in sufficient)
    cover = occs[sufficient].mean(axis=0)
    floor = d_star_min / ((z_div_sizes[:, None, None] + 1) * H)
    tilde_d = np.maximum(floor, cover)
    lhs = occs.sum(axis=0)
    on_support = cover > 0
    holds = bool(np.all(lhs[on_support] >= (K / 2.0) * tilde_d[on_support] - tol))
    return CoverResult(mixture, tilde_d, holds, lhs, cover, sufficient, z_div_sizes, n_hits)
