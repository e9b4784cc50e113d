"""Per-episode pseudo-regret records and cross-seed summaries."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RegretLedger", "CSV_HEADER", "flatness", "summarize", "Summary"]

CSV_HEADER = "k,inst_regret_O,inst_regret_E,cum_regret_O,cum_regret_E"
NEG_TOL = 1e-9


@dataclass
class RegretLedger:
    """Instantaneous pseudo-regret of both tiers, one entry per episode.

    Cumulative columns are derived with a sequential running sum, so they are
    exact prefix sums of the instantaneous columns.
    """

    inst_O: np.ndarray
    inst_E: np.ndarray
    rewards_O: np.ndarray | None = None
    rewards_E: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inst_O = np.asarray(self.inst_O, dtype=float)
        self.inst_E = np.asarray(self.inst_E, dtype=float)
        if self.inst_O.shape != self.inst_E.shape or self.inst_O.ndim != 1:
            raise ValueError("instantaneous regret columns must be equal-length vectors")
        low = min(self.inst_O.min(initial=0.0), self.inst_E.min(initial=0.0))
        if low < -NEG_TOL:
            raise ValueError(f"negative instantaneous regret {low:.3g}")

    def __len__(self):
        return len(self.inst_O)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def cum_O(self) -> np.ndarray:
        return np.add.accumulate(self.inst_O)

    @property
    def cum_E(self) -> np.ndarray:
        return np.add.accumulate(self.inst_E)

    @property
    def final_O(self) -> float:
        return float(self.cum_O[-1]) if len(self) else 0.0

    @property
    def final_E(self) -> float:
        return float(self.cum_E[-1]) if len(self) else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for row in zip(self.k, self.inst_O, self.inst_E, self.cum_O, self.cum_E):
            buf.write(f"{row[0]},{row[1]:.12g},{row[2]:.12g},{row[3]:.12g},{row[4]:.12g}\n")
        return buf.getvalue()

    @classmethod
    def concat(cls, ledgers, metadata: dict | None = None) -> "RegretLedger":
        ledgers = list(ledgers)
        return cls(np.concatenate([l.inst_O for l in ledgers]),
                   np.concatenate([l.inst_E for l in ledgers]),
                   metadata=dict(metadata or {}))


def flatness(cum: np.ndarray) -> float:
    """Share of the final cumulative value accrued in the last quarter."""
    cum = np.asarray(cum, dtype=float)
    K = len(cum)
    if K == 0:
        return 0.0
    i = (3 * K) // 4
    at_three_quarters = cum[i - 1] if i >= 1 else 0.0
    return float((cum[-1] - at_three_quarters) / max(cum[-1], 1e-12))


@dataclass
class Summary:
    mean_O: np.ndarray
    mean_E: np.ndarray
    stderr_O: np.ndarray
    stderr_E: np.ndarray
    final_O: np.ndarray
    final_E: np.ndarray
    flatness_O: float
    flatness_E: float

    def to_json(self) -> dict:
        def band(x):
            se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
            return {"mean": float(x.mean()), "two_stderr": 2.0 * se}

        return {
            "final_regret_O": band(self.final_O),
            "final_regret_E": band(self.final_E),
            "per_seed_final_O": self.final_O.tolist(),
            "per_seed_final_E": self.final_E.tolist(),
            "flatness_O": self.flatness_O,
            "flatness_E": self.flatness_E,
        }


def summarize(ledgers) -> Summary:
    """Pointwise mean and standard error of the cumulative curves across seeds."""
    ledgers = list(ledgers)
    if not ledgers:
        raise ValueError("nothing to summarise")
    K = len(ledgers[0])
    if any(len(l) != K for l in ledgers):
        raise ValueError("ledgers have mismatched lengths")
    cum_O = np.stack([l.cum_O for l in ledgers])
    cum_E = np.stack([l.cum_E for l in ledgers])
    n = len(ledgers)

    def se(x):
        if n == 1:
            return np.zeros(x.shape[1])
        return x.std(axis=0, ddof=1) / math.sqrt(n)

    mean_O, mean_E = cum_O.mean(axis=0), cum_E.mean(axis=0)
    return Summary(mean_O, mean_E, se(cum_O), se(cum_E), cum_O[:, -1], cum_E[:, -1],
                   flatness(mean_O), flatness(mean_E))
