"""Environment instances: stochastic bandits and episodic tabular MDPs.

Indices are 0-based in memory.  The JSON format stores dense nested arrays
(``transitions[h][s][a][s']``, ``rewards[h][s][a]``) in row-major order, so
the first element of every list is index 1 in the file's 1-based reading.

Randomness always comes from :func:`make_rng`, a numpy ``Generator`` backed
by PCG64.  Identical seeds give identical streams on every platform numpy
supports.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .policy import MixedPolicy

__all__ = [
    "BanditInstance",
    "TabularMdp",
    "Trajectory",
    "make_rng",
    "generate_random_mdp",
    "sample_trajectory",
    "pull_arm",
    "mdp_to_json",
    "mdp_from_json",
    "save_mdp",
    "load_mdp",
]

ROW_SUM_TOL = 1e-12


def make_rng(seed: int | None) -> np.random.Generator:
    """PCG64 generator; the single source of randomness for the package."""
    return np.random.Generator(np.random.PCG64(seed))


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """Arm means in [0, 1] with Bernoulli or bounded-uniform rewards.

    The ``uniform`` kind draws from ``U[mu - w, mu + w]`` with
    ``w = min(mu, 1 - mu)``, so rewards never leave [0, 1].
    """

    means: np.ndarray
    reward_kind: str = "bernoulli"

    def __post_init__(self):
        means = _frozen(self.means)
        if means.ndim != 1:
            raise ValueError("means must be a vector")
        if means.size < 1:
            raise ValueError("need at least one arm")
        if np.any(means < 0.0) or np.any(means > 1.0):
            raise ValueError("arm means must lie in [0, 1]")
        if self.reward_kind not in ("bernoulli", "uniform"):
            raise ValueError(f"unknown reward kind {self.reward_kind!r}")
        object.__setattr__(self, "means", means)

    @property
    def n_arms(self) -> int:
        return int(self.means.size)

    @property
    def gaps(self) -> np.ndarray:
        return self.means.max() - self.means

    @property
    def delta_min(self) -> float:
        pos = self.gaps[self.gaps > 0]
        return float(pos.min()) if pos.size else float("inf")

    def reward_from_uniform(self, arm: int, u: float) -> float:
        """Inverse-CDF draw of one reward for ``arm`` from a uniform ``u``."""
        mu = self.means[arm]
        if self.reward_kind == "bernoulli":
            return 1.0 if u < mu else 0.0
        w = min(mu, 1.0 - mu)
        return float(mu + w * (2.0 * u - 1.0))

    @classmethod
    def from_gaps(cls, gaps, reward_kind: str = "bernoulli") -> "BanditInstance":
        """Means ``top - gap`` with ``top = max(0.5, max(gaps))``."""
        gaps = np.asarray(gaps, dtype=float)
        if np.any(gaps < 0):
            raise ValueError("gaps must be nonnegative")
        if not np.any(gaps == 0):
            raise ValueError("at least one arm must have zero gap")
        top = max(0.5, float(gaps.max()))
        if top > 1.0:
            raise ValueError("gaps larger than 1 cannot be realised in [0, 1]")
        return cls(top - gaps, reward_kind)


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Episodic MDP with time-indexed transitions and deterministic rewards.

    ``transitions`` has shape ``(H, S, A, S)`` and ``rewards`` has shape
    ``(H, S, A)``.  Episodes start in ``initial_state``.  The row
    ``transitions[H-1]`` only feeds the terminal sink and never affects values.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    initial_state: int = 0
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = _frozen(self.transitions)
        r = _frozen(self.rewards)
        if P.ndim != 4 or P.shape[1] != P.shape[3]:
            raise ValueError("transitions must have shape (H, S, A, S)")
        H, S, A, _ = P.shape
        if H < 1 or S < 1 or A < 1:
            raise ValueError("H, S and A must all be at least 1")
        if r.shape != (H, S, A):
            raise ValueError(f"rewards must have shape {(H, S, A)}, got {r.shape}")
        if np.any(P < 0):
            raise ValueError("transition probabilities must be nonnegative")
        if np.max(np.abs(P.sum(axis=-1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("every transition row must sum to 1")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if not 0 <= self.initial_state < S:
            raise ValueError("initial state out of range")
        cum = np.cumsum(P, axis=-1)
        cum = cum / cum[..., -1:]
        cum.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "_cum", cum)

    @property
    def H(self) -> int:
        return self.transitions.shape[0]

    @property
    def S(self) -> int:
        return self.transitions.shape[1]

    @property
    def A(self) -> int:
        return self.transitions.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.S, self.A, self.H

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (
            self.initial_state == other.initial_state
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.rewards, other.rewards)
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode: ``states`` has length H+1, the rest length H."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return len(self.actions)

    @property
    def steps(self) -> list[tuple[int, int, float, int]]:
        return [
            (int(self.states[h]), int(self.actions[h]), float(self.rewards[h]), int(self.states[h + 1]))
            for h in range(len(self.actions))
        ]

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


def generate_random_mdp(s: int, a: int, h: int, rng: np.random.Generator) -> TabularMdp:
    """Random MDP: rows are normalised integer draws from {1..10}, rewards xi/10."""
    if min(s, a, h) < 1:
        raise ValueError("S, A and H must all be at least 1")
    weights = rng.integers(1, 11, size=(h, s, a, s)).astype(float)
    P = weights / weights.sum(axis=-1, keepdims=True)
    r = rng.integers(1, 11, size=(h, s, a)) / 10.0
    return TabularMdp(P, r)


def sample_trajectory(mdp: TabularMdp, policy, rng: np.random.Generator) -> Trajectory:
    """Roll out one episode.

    A ``MixedPolicy`` first draws a whole-episode component, then acts
    deterministically with it.
    """
    if isinstance(policy, MixedPolicy):
        policy = policy.sample_component(rng)
    acts_table = policy.actions
    if acts_table.shape != (mdp.H, mdp.S):
        raise ValueError(f"policy shape {acts_table.shape} does not match MDP {(mdp.H, mdp.S)}")
    H = mdp.H
    u = rng.random(H)
    states = np.empty(H + 1, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    cum = mdp._cum
    s = mdp.initial_state
    for h in range(H):
        a = acts_table[h, s]
        states[h] = s
        actions[h] = a
        rewards[h] = mdp.rewards[h, s, a]
        s = int(np.searchsorted(cum[h, s, a], u[h], side="right"))
    states[H] = s
    return Trajectory(states, actions, rewards)


def pull_arm(inst: BanditInstance, arm: int, rng: np.random.Generator) -> float:
    if not 0 <= arm < inst.n_arms:
        raise IndexError(f"arm {arm} out of range for {inst.n_arms} arms")
    return inst.reward_from_uniform(arm, rng.random())


def mdp_to_json(mdp: TabularMdp) -> dict:
    return {
        "S": mdp.S,
        "A": mdp.A,
        "H": mdp.H,
        "transitions": mdp.transitions.tolist(),
        "rewards": mdp.rewards.tolist(),
    }


def mdp_from_json(obj: dict) -> TabularMdp:
    P = np.asarray(obj["transitions"], dtype=float)
    r = np.asarray(obj["rewards"], dtype=float)
    expect = (obj["H"], obj["S"], obj["A"])
    if P.shape[:3] != expect or r.shape != expect:
        raise ValueError(f"array shapes do not match declared (H, S, A) = {expect}")
    return TabularMdp(P, r)


def save_mdp(mdp: TabularMdp, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(mdp_to_json(mdp)) + "\n")


def load_mdp(path: Union[str, Path]) -> TabularMdp:
    return mdp_from_json(json.loads(Path(path).read_text()))
