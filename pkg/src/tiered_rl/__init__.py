"""Tiered reinforcement learning: an exploring tier feeds data to a pessimistic exploiting tier."""

__version__ = "0.1.0"

from .envcore import (BanditInstance, TabularMdp, Trajectory, generate_random_mdp, load_mdp,
                      make_rng, pull_arm, sample_trajectory, save_mdp)
from .policy import DetPolicy, MixedPolicy
from .oracle import (GapReport, gap_report, occupancy, optimal_values, policy_value,
                     check_occupancy_bound, well_covered_policy)
from .ledger import RegretLedger, flatness, summarize
from .bandit import run_bandit_tiered
from .rl import (BonusSpec, EpisodeDataset, TieredRunConfig, bonus, build_hard_mdp_plus, pvi,
                 run_adversarial, run_doubling, run_framework1, run_mixed_arrival)
