"""Deterministic time-dependent policies and whole-episode mixtures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["DetPolicy", "MixedPolicy"]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DetPolicy:
    """``actions[h, s]`` is the action taken in state ``s`` at step ``h``."""

    actions: np.ndarray

    def __post_init__(self):
        acts = np.array(self.actions, dtype=np.int64, copy=True)
        if acts.ndim != 2:
            raise ValueError("a deterministic policy is an (H, S) action table")
        if np.any(acts < 0):
            raise ValueError("actions must be nonnegative indices")
        acts.setflags(write=False)
        object.__setattr__(self, "actions", acts)

    @property
    def H(self) -> int:
        return self.actions.shape[0]

    @property
    def S(self) -> int:
        return self.actions.shape[1]

    def key(self) -> bytes:
        return self.actions.tobytes()

    def check(self, n_actions: int, shape: tuple[int, int] | None = None) -> None:
        if shape is not None and self.actions.shape != shape:
            raise ValueError(f"policy shape {self.actions.shape} does not match {shape}")
        if self.actions.size and self.actions.max() >= n_actions:
            raise ValueError(f"policy uses an action outside 0..{n_actions - 1}")

    def __eq__(self, other):
        if not isinstance(other, DetPolicy):
            return NotImplemented
        return np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash((self.actions.shape, self.key()))

    def __repr__(self):
        return f"DetPolicy({self.actions.tolist()})"

    @classmethod
    def constant(cls, H: int, S: int, action: int = 0) -> "DetPolicy":
        return cls(np.full((H, S), action, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class MixedPolicy:
    """Mixture over whole-episode deterministic policies.

    One component is drawn at the start of an episode and followed
    throughout; this is not per-step randomisation.
    """

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.array(self.weights, dtype=float, copy=True)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if w.shape != (len(comps),):
            raise ValueError("one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        shape = comps[0].actions.shape
        if any(c.actions.shape != shape for c in comps):
            raise ValueError("all components must share the same (H, S) shape")
        w.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @property
    def H(self) -> int:
        return self.components[0].H

    @property
    def S(self) -> int:
        return self.components[0].S

    def check(self, n_actions: int, shape: tuple[int, int] | None = None) -> None:
        for c in self.components:
            c.check(n_actions, shape)

    def sample_component(self, rng: np.random.Generator) -> DetPolicy:
        if len(self.components) == 1:
            return self.components[0]
        idx = int(np.searchsorted(np.cumsum(self.weights), rng.random(), side="right"))
        return self.components[min(idx, len(self.components) - 1)]

    @classmethod
    def uniform(cls, policies) -> "MixedPolicy":
        """Uniform mixture over ``policies``; repeated entries pool their weight."""
        counts: dict[DetPolicy, int] = {}
        for p in policies:
            counts[p] = counts.get(p, 0) + 1
        total = sum(counts.values())
        comps = tuple(counts)
        return cls(comps, np.array([counts[c] / total for c in comps]))
