# %% [markdown]
# A hard instance for the exploiter. We take a small chain MDP, bolt on an
# absorbing state that is reached with small probability, and let a scripted
# explorer play the wrong action there until a switch-over episode k_sup.
# The exploiter never sees the right action at that state, so it keeps losing a
# fixed amount per episode until then. k_sup grows roughly like C log C.

# %%
from tiered_rl import TabularMdp, TieredRunConfig, build_hard_mdp_plus, gap_report, make_rng, run_adversarial
import numpy as np

P = np.zeros((2, 2, 2, 2))
P[:, :, 0, 0] = 1.0
P[:, :, 1, 1] = 1.0
R = np.array([[[0.5, 0.0], [0.5, 0.0]], [[1.0, 0.5], [0.5, 0.0]]])
base = TabularMdp(P, R)
rep = gap_report(base)
print("delta_min", rep.delta_min, "d_min", rep.d_min)

# %%
for c in (10.0, 100.0, 1000.0):
    hard = build_hard_mdp_plus(base, rep, c, c, bad_action=0)
    cfg = TieredRunConfig(k_max=hard.k_sup + 50, mode="adversarial", explorer="scripted")
    led = run_adversarial(hard.mdp, hard.scripted, cfg, make_rng(0))
    k = hard.k_sup
    print(f"C={c:>6g}  k_sup={k:>7}  explorer {led.cum_O[k - 1]:8.2f}  exploiter {led.cum_E[k - 1]:9.2f}"
          f"  exploiter/k_sup {led.cum_E[k - 1] / k:.4f}")
