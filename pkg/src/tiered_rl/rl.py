"""Tiered learning on episodic tabular MDPs.

The exploiter is pessimistic value iteration (PVI) on the explorer's data;
the explorer is optimistic value iteration with the same bonus family.
Rewards are known to both learners; only transitions are estimated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .envcore import TabularMdp, Trajectory, sample_trajectory
from .ledger import RegretLedger
from .oracle import GAP_TOL, GapReport, occupancy, optimal_values
from .policy import DetPolicy

__all__ = [
    "EpisodeDataset",
    "BonusSpec",
    "PviOutput",
    "TieredRunConfig",
    "GoodEventTrace",
    "ScriptedExplorer",
    "HardInstance",
    "bonus",
    "bonus_table",
    "pvi",
    "optimistic_values",
    "optimistic_explorer_step",
    "run_framework1",
    "run_doubling",
    "doubling_schedule",
    "run_mixed_arrival",
    "build_hard_mdp_plus",
    "k_sup_scan",
    "run_adversarial",
    "run_tiered",
]


class EpisodeDataset:
    """Visit counts and the empirical transition model of a set of episodes.

    ``p_hat`` is kept up to date incrementally; rows of never-visited
    ``(h, s, a)`` are all zero.
    """

    def __init__(self, S: int, A: int, H: int):
        self.S, self.A, self.H = S, A, H
        self.n_sa = np.zeros((H, S, A), dtype=np.int64)
        self.n_sas = np.zeros((H, S, A, S), dtype=np.int64)
        self.p_hat = np.zeros((H, S, A, S))
        self.episodes = 0

    @classmethod
    def for_mdp(cls, mdp: TabularMdp) -> "EpisodeDataset":
        return cls(mdp.S, mdp.A, mdp.H)

    def add(self, traj: Trajectory) -> None:
        if len(traj) != self.H:
            raise ValueError(f"trajectory length {len(traj)} does not match horizon {self.H}")
        st, ac = traj.states, traj.actions
        for h in range(self.H):
            s, a = st[h], ac[h]
            self.n_sa[h, s, a] += 1
            self.n_sas[h, s, a, st[h + 1]] += 1
            self.p_hat[h, s, a] = self.n_sas[h, s, a] / self.n_sa[h, s, a]
        self.episodes += 1

    def copy(self) -> "EpisodeDataset":
        new = EpisodeDataset(self.S, self.A, self.H)
        new.n_sa = self.n_sa.copy()
        new.n_sas = self.n_sas.copy()
        new.p_hat = self.p_hat.copy()
        new.episodes = self.episodes
        return new


@dataclass(frozen=True)
class BonusSpec:
    """Hoeffding-type bonus ``scale * H * S * sqrt(log(S*A*H/delta) / n)``.

    ``naive_hoeffding`` always uses scale 1.  The envelope constants are
    ``B1 = scale * H * S`` and ``B2 = S * A * H``.
    """

    kind: str = "scaled_hoeffding"
    scale: float = 0.25

    def __post_init__(self):
        if self.kind not in ("naive_hoeffding", "scaled_hoeffding"):
            raise ValueError(f"unknown bonus kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("bonus scale must be positive")

    @property
    def multiplier(self) -> float:
        return 1.0 if self.kind == "naive_hoeffding" else self.scale

    def b1(self, S: int, A: int, H: int) -> float:
        return self.multiplier * H * S

    def b2(self, S: int, A: int, H: int) -> float:
        return float(S * A * H)


def _check_delta(delta: float) -> None:
    # delta_1 = 1 is allowed: the dataset is empty then and every bonus is infinite.
    if not 0 < delta <= 1:
        raise ValueError(f"confidence level must lie in (0, 1], got {delta}")


def bonus(spec: BonusSpec, mdp_dims, n, delta: float):
    """Bonus for visit count(s) ``n``; ``+inf`` where ``n == 0``."""
    _check_delta(delta)
    S, A, H = mdp_dims
    coef = spec.b1(S, A, H)
    log_term = math.log(spec.b2(S, A, H) / delta)
    n_arr = np.asarray(n)
    with np.errstate(divide="ignore"):
        out = np.where(n_arr > 0, coef * np.sqrt(log_term / np.maximum(n_arr, 1)), np.inf)
    return float(out) if out.ndim == 0 else out


def bonus_table(spec: BonusSpec, data: EpisodeDataset, delta: float) -> np.ndarray:
    return bonus(spec, (data.S, data.A, data.H), data.n_sa, delta)


@dataclass(frozen=True)
class PviOutput:
    q_hat: np.ndarray
    v_hat: np.ndarray
    policy: DetPolicy


def _backward(rewards: np.ndarray, p_hat: np.ndarray, b: np.ndarray, optimistic: bool):
    H, S, A = rewards.shape
    v = np.zeros((H + 1, S))
    q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        target = rewards[h] + p_hat[h] @ v[h + 1]
        if optimistic:
            q[h] = np.minimum(target + b[h], H - h)
        else:
            q[h] = np.maximum(target - b[h], 0.0)
        v[h] = q[h].max(axis=-1)
    return q, v, DetPolicy(q.argmax(axis=-1))


def pvi(mdp_rewards: np.ndarray, data: EpisodeDataset, spec: BonusSpec, delta: float,
        b: np.ndarray | None = None) -> PviOutput:
    """Pessimistic value iteration; ties go to the lowest action index."""
    if b is None:
        b = bonus_table(spec, data, delta)
    return PviOutput(*_backward(np.asarray(mdp_rewards), data.p_hat, b, optimistic=False))


def optimistic_values(mdp_rewards: np.ndarray, data: EpisodeDataset, spec: BonusSpec,
                      delta: float, b: np.ndarray | None = None) -> PviOutput:
    """Optimistic VI with Q clamped to [0, H - h + 1]."""
    if b is None:
        b = bonus_table(spec, data, delta)
    return PviOutput(*_backward(np.asarray(mdp_rewards), data.p_hat, b, optimistic=True))


def optimistic_explorer_step(mdp_rewards: np.ndarray, data: EpisodeDataset, spec: BonusSpec,
                             delta: float) -> DetPolicy:
    return optimistic_values(mdp_rewards, data, spec, delta).policy


@dataclass
class TieredRunConfig:
    k_max: int = 1000
    alpha: float = 1.5
    bonus: BonusSpec = field(default_factory=BonusSpec)
    explorer: str = "optimistic_vi"
    mode: str = "framework1"
    mixed_ratio: float = 1.0
    use_exploit_data: bool = False
    record_rewards: bool = False
    track_events: bool = False
    n_epochs: int | None = None

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError("alpha must be > 1")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.explorer not in ("optimistic_vi", "scripted"):
            raise ValueError(f"unknown explorer {self.explorer!r}")
        if self.mode not in ("framework1", "doubling", "mixed_arrival", "adversarial"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "mixed_arrival" and not self.mixed_ratio > 0:
            raise ValueError("mixed_ratio must be positive")


@dataclass
class GoodEventTrace:
    """Per-episode analysis flags, computed with access to the true model."""

    bonus_event_held: list = field(default_factory=list)
    optimism_event_held: list = field(default_factory=list)
    concentration_event_held: list = field(default_factory=list)
    underestimation_held: list = field(default_factory=list)

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=bool) for k, v in self.__dict__.items()}


class _Runner:
    """Shared state of one tiered run: model, caches and the dataset."""

    def __init__(self, mdp: TabularMdp, cfg: TieredRunConfig, rng: np.random.Generator):
        self.mdp = mdp
        self.cfg = cfg
        self.rng = rng
        vals = optimal_values(mdp)
        self.q_star = vals.q
        self.v_star = float(vals.v[0, mdp.initial_state])
        gaps = vals.v[:-1, :, None] - vals.q
        self.gaps = np.where(gaps < GAP_TOL, 0.0, gaps)
        self.data = EpisodeDataset.for_mdp(mdp)
        self._regrets: dict[bytes, float] = {}
        self._occ: dict[bytes, np.ndarray] = {}
        self.trace = GoodEventTrace() if cfg.track_events else None
        self._cum_occ_O = np.zeros((mdp.H, mdp.S, mdp.A)) if cfg.track_events else None

    def regret(self, pi: DetPolicy) -> float:
        key = pi.key()
        val = self._regrets.get(key)
        if val is None:
            val = self._regrets[key] = float(np.sum(self.occ(pi) * self.gaps))
        return val

    def occ(self, pi: DetPolicy) -> np.ndarray:
        key = pi.key()
        d = self._occ.get(key)
        if d is None:
            d = self._occ[key] = occupancy(self.mdp, pi).d
        return d

    def bonus(self, delta: float) -> np.ndarray:
        return bonus_table(self.cfg.bonus, self.data, delta)

    def exploit(self, delta: float) -> PviOutput:
        return pvi(self.mdp.rewards, self.data, self.cfg.bonus, delta)

    def explore(self, delta: float) -> PviOutput:
        return optimistic_values(self.mdp.rewards, self.data, self.cfg.bonus, delta)

    def record_events(self, k: int, delta: float, exploit: PviOutput, explore_q: np.ndarray | None):
        mdp, data, spec = self.mdp, self.data, self.cfg.bonus
        b = self.bonus(delta)
        S, A, H = mdp.S, mdp.A, mdp.H
        v_next = exploit.v_hat[1:]
        dev = np.abs(np.einsum("hsat,ht->hsa", data.p_hat - mdp.transitions, v_next))
        envelope = spec.b1(S, A, H) * np.sqrt(
            math.log(spec.b2(S, A, H) / delta) / np.maximum(data.n_sa, 1))
        envelope = np.where(data.n_sa > 0, envelope, np.inf)
        held = bool(np.all((dev < b) | np.isinf(b)) and np.all(b <= envelope * (1 + 1e-12)))
        self.trace.bonus_event_held.append(held)
        self.trace.underestimation_held.append(bool(np.all(exploit.q_hat <= self.q_star + 1e-9)))
        if explore_q is None:
            self.trace.optimism_event_held.append(True)
        else:
            self.trace.optimism_event_held.append(bool(np.all(explore_q >= self.q_star - 1e-9)))
        lower = 0.5 * self._cum_occ_O - self.cfg.alpha * math.log(S * A * H * k)
        self.trace.concentration_event_held.append(bool(np.all(data.n_sa >= lower)))

    def sample(self, pi: DetPolicy) -> Trajectory:
        return sample_trajectory(self.mdp, pi, self.rng)

    def finish(self, reg_O, reg_E, rew_O=None, rew_E=None, seed=None, extra=None) -> RegretLedger:
        meta = {"seed": seed, "v_star": self.v_star, "mode": self.cfg.mode, "alpha": self.cfg.alpha,
                "bonus": self.cfg.bonus.kind, "bonus_scale": self.cfg.bonus.multiplier}
        extra = dict(extra or {})
        if self.trace is not None:
            extra["events"] = self.trace.as_arrays()
        return RegretLedger(np.asarray(reg_O), np.asarray(reg_E), rew_O, rew_E, meta, extra)


EpisodeHook = Callable[[int, EpisodeDataset, float, PviOutput], None]


def _framework_loop(mdp: TabularMdp, cfg: TieredRunConfig, rng: np.random.Generator,
                    explorer: Callable[[int, "_Runner", float], PviOutput | DetPolicy],
                    seed, on_episode: EpisodeHook | None) -> RegretLedger:
    run = _Runner(mdp, cfg, rng)
    K = cfg.k_max
    reg_O, reg_E = np.empty(K), np.empty(K)
    keep = cfg.record_rewards
    rew_O = np.empty(K) if keep else None
    rew_E = np.empty(K) if keep else None
    for k in range(1, K + 1):
        delta = k ** (-cfg.alpha)
        ex = run.exploit(delta)
        pi_E = ex.policy
        out_O = explorer(k, run, delta)
        if isinstance(out_O, PviOutput):
            pi_O, q_O = out_O.policy, out_O.q_hat
        else:
            pi_O, q_O = out_O, None
        if on_episode is not None:
            on_episode(k, run.data, delta, ex)
        if run.trace is not None:
            run.record_events(k, delta, ex, q_O)
            run._cum_occ_O += run.occ(pi_O)
        tau_O = run.sample(pi_O)
        tau_E = run.sample(pi_E) if (cfg.use_exploit_data or keep) else None
        run.data.add(tau_O)
        if cfg.use_exploit_data:
            run.data.add(tau_E)
        reg_O[k - 1] = run.regret(pi_O)
        reg_E[k - 1] = run.regret(pi_E)
        if keep:
            rew_O[k - 1] = tau_O.total_reward
            rew_E[k - 1] = tau_E.total_reward
    return run.finish(reg_O, reg_E, rew_O, rew_E, seed)


def run_framework1(mdp: TabularMdp, cfg: TieredRunConfig, rng: np.random.Generator, *,
                   seed: int | None = None, on_episode: EpisodeHook | None = None) -> RegretLedger:
    """One exploring and one exploiting episode per round, confidence ``k^-alpha``.

    ``on_episode(k, data, delta, pvi_out)`` is called before sampling, with
    the dataset the round's policies were computed from.
    """
    return _framework_loop(mdp, cfg, rng, lambda k, run, delta: run.explore(delta), seed, on_episode)


def doubling_schedule(n_epochs: int) -> list[int]:
    """Epoch lengths ``K_n = 2^n`` for ``n = 1..n_epochs``."""
    return [2**n for n in range(1, n_epochs + 1)]


def run_doubling(mdp: TabularMdp, cfg: TieredRunConfig, rng: np.random.Generator, *,
                 seed: int | None = None, record_policies: bool = False) -> RegretLedger:
    """Epoch-restarted explorer with a frozen exploiter in each first half.

    Epoch ``n`` lasts ``K_n = 2^n`` episodes on a fresh dataset and the
    explorer uses the fixed confidence ``K_n^-alpha``.  For ``k <= K_n / 2``
    the exploiter replays the policy it produced at episode
    ``K_{n-1}/2 + ceil(k/2)`` of the previous epoch (the empty-data PVI
    policy during epoch 1); afterwards it runs PVI on the epoch's data with
    confidence ``k^-alpha``.  Without ``cfg.n_epochs`` the run stops after
    ``cfg.k_max`` episodes.
    """
    n_epochs = cfg.n_epochs
    if n_epochs is None:
        n_epochs = max(1, math.ceil(math.log2(cfg.k_max + 2)) - 1)
        limit = cfg.k_max
    else:
        limit = 2 ** (n_epochs + 1) - 2
    run = _Runner(mdp, cfg, rng)
    initial = run.exploit(1.0).policy
    reg_O, reg_E = [], []
    epochs, k_in_epoch, policies_E = [], [], []
    prev_store: dict[int, DetPolicy] = {}
    prev_K = 1
    total = 0
    for n, K_n in enumerate(doubling_schedule(n_epochs), start=1):
        run.data = EpisodeDataset.for_mdp(mdp)
        delta_n = K_n ** (-cfg.alpha)
        store: dict[int, DetPolicy] = {}
        for k in range(1, K_n + 1):
            if total >= limit:
                break
            if k <= K_n // 2:
                pi_E = initial if n == 1 else prev_store[prev_K // 2 + math.ceil(k / 2)]
            else:
                pi_E = run.exploit(k ** (-cfg.alpha)).policy
                store[k] = pi_E
            pi_O = run.explore(delta_n).policy
            tau_O = run.sample(pi_O)
            run.data.add(tau_O)
            if cfg.use_exploit_data:
                run.data.add(run.sample(pi_E))
            reg_O.append(run.regret(pi_O))
            reg_E.append(run.regret(pi_E))
            total += 1
            if record_policies:
                epochs.append(n)
                k_in_epoch.append(k)
                policies_E.append(pi_E)
        prev_store, prev_K = store, K_n
    extra = {}
    if record_policies:
        extra = {"epoch": np.array(epochs), "k_in_epoch": np.array(k_in_epoch),
                 "policies_E": policies_E}
    return run.finish(reg_O, reg_E, seed=seed, extra=extra)


def run_mixed_arrival(mdp: TabularMdp, cfg: TieredRunConfig, rng: np.random.Generator, *,
                      seed: int | None = None) -> RegretLedger:
    """Users arrive one at a time; a fraction ``C/(1+C)`` belongs to the exploit tier.

    Only explorer-tier arrivals add data and refresh both policies.  Each
    ledger row is one arrival; the column of the other tier is zero and
    ``extra["is_exploit"]`` marks which tier the user came from.
    """
    run = _Runner(mdp, cfg, rng)
    K = cfg.k_max
    p_E = cfg.mixed_ratio / (1.0 + cfg.mixed_ratio)
    reg_O, reg_E = np.zeros(K), np.zeros(K)
    is_E = np.zeros(K, dtype=bool)
    pi_O = run.explore(1.0).policy
    pi_E = run.exploit(1.0).policy
    n_O = 0
    for k in range(K):
        if rng.random() < p_E:
            is_E[k] = True
            reg_E[k] = run.regret(pi_E)
            if cfg.use_exploit_data:
                run.data.add(run.sample(pi_E))
        else:
            reg_O[k] = run.regret(pi_O)
            run.data.add(run.sample(pi_O))
            n_O += 1
            delta = (n_O + 1) ** (-cfg.alpha)
            pi_O = run.explore(delta).policy
            pi_E = run.exploit(delta).policy
    return run.finish(reg_O, reg_E, seed=seed, extra={"is_exploit": is_E})


@dataclass(frozen=True)
class ScriptedExplorer:
    """Plays ``pi_before`` for ``k <= k_sup`` and ``pi_after`` afterwards."""

    pi_before: DetPolicy
    pi_after: DetPolicy
    k_sup: int
    d_min: float
    delta_min: float
    absorbing_state: int
    optimal_absorb_actions: tuple
    bad_action: int

    def policy(self, k: int) -> DetPolicy:
        return self.pi_before if k <= self.k_sup else self.pi_after

    @property
    def regret_per_episode(self) -> float:
        return self.d_min * self.delta_min


class HardInstance(NamedTuple):
    mdp: TabularMdp
    scripted: ScriptedExplorer
    k_sup: int


def k_sup_scan(c1: float, c2: float, d_delta: float) -> int:
    """Largest positive integer ``k`` with ``k <= (c1 + c2 log k) / d_delta``; 0 if none.

    ``(c1 + c2 log k)/d_delta - k`` is concave in ``k``, so the feasible set
    is an interval.  The scan starts from the concave peak and gallops
    outward, then bisects the last step.
    """
    if d_delta <= 0:
        raise ValueError("d_min * delta_min must be positive")

    def ok(k: int) -> bool:
        return k <= (c1 + c2 * math.log(k)) / d_delta

    peak = max(1, int(c2 / d_delta))
    start = next((k for k in (peak, peak + 1, 1) if ok(k)), None)
    if start is None:
        return 0
    lo, step = start, 1
    while ok(lo + step):
        lo += step
        step *= 2
    hi = lo + step
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def build_hard_mdp_plus(mdp: TabularMdp, report: GapReport, c1: float | None = None,
                        c2: float | None = None, optimal_absorb_actions=None,
                        bad_action: int | None = None) -> HardInstance:
    """Add an absorbing chain that is entered from the root with probability ``d_min/4``.

    Inside the chain only one action per layer pays ``delta_min``.  The
    scripted explorer is optimal except that it plays ``bad_action`` at the
    last absorbing state until ``k_sup``.
    """
    d_min, gap = report.d_min, report.delta_min
    if d_min is None:
        raise ValueError("d_min is unavailable (optimal-policy enumeration was capped)")
    if not (np.isfinite(gap) and gap > 0) or not d_min > 0:
        raise ValueError("the construction needs positive delta_min and d_min")
    S, A, H = mdp.S, mdp.A, mdp.H
    if A < 2:
        raise ValueError("need at least two actions")
    if c1 is None:
        c1 = H * S * A / gap
    if c2 is None:
        c2 = H * S * A / gap
    if bad_action is None:
        bad_action = A - 1
    if optimal_absorb_actions is None:
        optimal_absorb_actions = [0 if bad_action != 0 else 1] * H
    optimal_absorb_actions = tuple(int(a) for a in optimal_absorb_actions)
    if len(optimal_absorb_actions) != H:
        raise ValueError("one optimal absorbing action per layer")
    if optimal_absorb_actions[H - 1] == bad_action:
        raise ValueError("the planted bad action must differ from the optimal one at the last layer")

    s0, ab = mdp.initial_state, S
    q = d_min / 4.0
    P = np.zeros((H, S + 1, A, S + 1))
    r = np.zeros((H, S + 1, A))
    P[:, :S, :, :S] = mdp.transitions
    r[:, :S, :] = mdp.rewards
    P[:, ab, :, ab] = 1.0
    P[0, s0, :, :S] = (1.0 - q) * mdp.transitions[0, s0]
    P[0, s0, :, ab] = q
    r[0, s0, :] = (1.0 - q) * mdp.rewards[0, s0]
    for h in range(1, H):
        r[h, ab, optimal_absorb_actions[h]] = gap
    plus = TabularMdp(P, r, s0)

    vals = optimal_values(plus)
    gaps = vals.v[:-1, :, None] - vals.q
    opt = gaps < 1e-9
    pi_star = DetPolicy(opt.argmax(axis=-1))
    acts = pi_star.actions.copy()
    acts[H - 1, ab] = bad_action
    d_plus = q
    k_sup = k_sup_scan(c1, c2, d_plus * gap)
    scripted = ScriptedExplorer(DetPolicy(acts), pi_star, k_sup, d_plus, gap, ab,
                                optimal_absorb_actions, bad_action)
    return HardInstance(plus, scripted, k_sup)


def run_adversarial(mdp_plus: TabularMdp, scripted: ScriptedExplorer, cfg: TieredRunConfig,
                    rng: np.random.Generator, *, seed: int | None = None,
                    on_episode: EpisodeHook | None = None) -> RegretLedger:
    """Tiered loop with the scripted explorer in place of optimistic VI."""
    ledger = _framework_loop(mdp_plus, cfg, rng, lambda k, run, delta: scripted.policy(k),
                             seed, on_episode)
    ledger.metadata.update(k_sup=scripted.k_sup, d_min=scripted.d_min, delta_min=scripted.delta_min)
    return ledger


def run_tiered(mdp: TabularMdp, cfg: TieredRunConfig, rng: np.random.Generator, *,
               seed: int | None = None, scripted: ScriptedExplorer | None = None) -> RegretLedger:
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "framework1":
        return run_framework1(mdp, cfg, rng, seed=seed)
    if cfg.mode == "doubling":
        return run_doubling(mdp, cfg, rng, seed=seed)
    if cfg.mode == "mixed_arrival":
        return run_mixed_arrival(mdp, cfg, rng, seed=seed)
    if scripted is None:
        raise ValueError("adversarial mode needs the scripted explorer from build_hard_mdp_plus")
    return run_adversarial(mdp, scripted, cfg, rng, seed=seed)
