# %% [markdown]
# Two learners share one stream of bandit data. The explorer pulls the arm with
# the highest upper confidence index and pays log-growing regret. The exploiter
# never pulls anything itself: it just picks the arm with the highest lower index
# from the explorer's data, and its regret stops growing after a burn-in.

# %%
import time

import numpy as np

from tiered_rl import BanditInstance, make_rng, run_bandit_tiered, summarize

inst = BanditInstance([0.5, 0.5, 0.4, 0.4, 0.3])
K, SEEDS = 100_000, 20
print("gaps", inst.gaps, "delta_min", inst.delta_min)

# %%
t0 = time.perf_counter()
ledgers = [run_bandit_tiered(inst, K, 1.5, make_rng(s)) for s in range(SEEDS)]
print(f"{SEEDS} runs of {K} episodes in {time.perf_counter() - t0:.1f}s")

s = summarize(ledgers)
for k in (100, 1000, 10_000, 50_000, K):
    print(f"k={k:>6}  explorer {s.mean_O[k - 1]:8.1f}  exploiter {s.mean_E[k - 1]:6.1f}")

# %% [markdown]
# Flatness is the share of the final cumulative regret added in the last
# quarter of the run. Linear growth gives 0.25 and a flat curve gives 0.

# %%
print(f"flatness  explorer {s.flatness_O:.3f}  exploiter {s.flatness_E:.4f}")

# a log curve c*log(k) has last-quarter share 1 - log(3K/4)/log(K)
print(f"pure log reference {1 - np.log(0.75 * K) / np.log(K):.3f}")
