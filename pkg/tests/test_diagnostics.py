import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tiered_rl.diagnostics import (CSV_HEADER, RegretLedger, bonus_event_held, clip, clip_threshold,
                                   clipped_suboptimality_bound, flatness, summarize, surplus)
from tiered_rl.envcore import generate_random_mdp, make_rng
from tiered_rl.oracle import GapReport, gap_report, optimal_values
from tiered_rl.rl import BonusSpec, EpisodeDataset, TieredRunConfig, bonus_table, pvi, run_framework1

from instances import det_chain_mdp

NAIVE = BonusSpec("naive_hoeffding")


def test_clip_examples():
    assert clip(0.5, 0.3) == 0.5
    assert clip(0.2, 0.3) == 0
    assert clip(0.3, 0.3) == 0.3
    with pytest.raises(ValueError):
        clip(1.0, -0.1)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 5))
def test_clip_properties(x, y, eps):
    lo, hi = min(x, y), max(x, y)
    if lo >= 0:
        assert clip(lo, eps) <= clip(hi, eps)
        assert clip(hi, eps) <= hi
    assert clip(clip(x, eps), eps) == clip(x, eps)


def _report(H, S, A, delta_min, d_min, count):
    z = np.zeros((H, S, A))
    return GapReport(z, delta_min, d_min, z > 0, count, None)


def test_clip_threshold_examples():
    assert clip_threshold(_report(2, 2, 2, 0.3, 1.0, 1), 2, 1) == pytest.approx(0.05)
    assert clip_threshold(_report(2, 2, 2, 0.3, 0.1, 3), 2, 3) == pytest.approx(0.001875)
    with pytest.raises(ValueError):
        clip_threshold(_report(2, 2, 2, 0.3, None, None), 2, 5)
    with pytest.raises(ValueError):
        clip_threshold(_report(2, 2, 2, math.inf, 1.0, 1), 2, 1)


def test_clip_threshold_from_random_report():
    m = generate_random_mdp(3, 3, 3, make_rng(12))
    rep = gap_report(m)
    got = clip_threshold(rep, 3, rep.pi_star_count)
    if rep.pi_star_count == 1:
        assert got == rep.delta_min / 8
    else:
        assert got == rep.d_min * rep.delta_min / 54


def _converged(mdp, n):
    d = EpisodeDataset.for_mdp(mdp)
    d.n_sa[:] = n
    d.n_sas[:] = np.rint(mdp.transitions * n).astype(np.int64)
    d.p_hat[:] = d.n_sas / n
    return d


def test_surplus_equals_bonus_when_model_is_exact():
    m = det_chain_mdp()
    data = _converged(m, 10**5)
    out = pvi(m.rewards, data, NAIVE, 0.1)
    b = bonus_table(NAIVE, data, 0.1)
    E = surplus(m, out, data, NAIVE, 0.1)
    unclamped = out.q_hat > 0
    assert unclamped.any()
    assert np.allclose(E[unclamped], b[unclamped])
    nxt = np.einsum("hsat,ht->hsa", m.transitions, out.v_hat[1:])
    assert np.array_equal(E[~unclamped], (m.rewards + nxt)[~unclamped])


def test_surplus_on_empty_data_is_reward_plus_zero():
    m = generate_random_mdp(2, 2, 3, make_rng(0))
    out = pvi(m.rewards, EpisodeDataset.for_mdp(m), NAIVE, 0.5)
    assert np.array_equal(surplus(m, out), m.rewards)


def _snapshots(m, cfg, seed, every):
    shots = []

    def hook(k, data, delta, out):
        if k % every == 0:
            shots.append((k, data.copy(), delta, out))

    run_framework1(m, cfg, make_rng(seed), on_episode=hook)
    return shots


@pytest.mark.parametrize("seed", range(3))
def test_surplus_bounds_on_bonus_event(seed):
    m = generate_random_mdp(3, 3, 3, make_rng(30 + seed))
    cfg = TieredRunConfig(k_max=1500, bonus=NAIVE)
    H = m.H
    held = 0
    for k, data, delta, out in _snapshots(m, cfg, seed, 50):
        if not bonus_event_held(m, out, data, NAIVE, delta):
            continue
        held += 1
        E = surplus(m, out, data, NAIVE, delta)
        b = bonus_table(NAIVE, data, delta)
        cap = (H - np.arange(H))[:, None, None]
        visited = data.n_sa > 0
        assert np.all(E >= -1e-9)
        assert np.all(E[visited] <= np.minimum(cap, 2 * b)[visited] + 1e-9)
    assert held > 0


def test_bound_on_empty_dataset():
    # every N = 0: min{H, inf} = H survives the clip, so 2 * sum_h H = 2 H^2
    m = generate_random_mdp(3, 2, 4, make_rng(3))
    rep = gap_report(m)
    bound, gap = clipped_suboptimality_bound(m, EpisodeDataset.for_mdp(m), BonusSpec(), 0.5, rep)
    assert bound == pytest.approx(2 * m.H**2)
    assert bound >= gap


def test_bound_vanishes_with_enough_data():
    m = det_chain_mdp()
    rep = gap_report(m)
    spec, delta = NAIVE, 0.1
    eps = clip_threshold(rep, m.H, rep.pi_star_count)
    B1, B2 = spec.b1(m.S, m.A, m.H), spec.b2(m.S, m.A, m.H)
    n = math.floor((2 * B1 / eps) ** 2 * math.log(B2 / delta)) + 1
    bound, gap = clipped_suboptimality_bound(m, _converged(m, n), spec, delta, rep)
    assert bound == 0.0 and gap == pytest.approx(0.0, abs=1e-12)
    bound, _ = clipped_suboptimality_bound(m, _converged(m, n // 4), spec, delta, rep)
    assert bound > 0


@pytest.mark.parametrize("seed", range(3))
def test_bound_dominates_gap_on_bonus_event(seed):
    m = generate_random_mdp(3, 3, 3, make_rng(40 + seed))
    rep = gap_report(m)
    spec = BonusSpec()
    checked = 0
    for k, data, delta, out in _snapshots(m, TieredRunConfig(k_max=2000), seed, 100):
        if bonus_event_held(m, out, data, spec, delta):
            bound, gap = clipped_suboptimality_bound(m, data, spec, delta, rep)
            assert bound >= gap - 1e-8
            checked += 1
    assert checked > 0


# -- ledger and summaries --------------------------------------------------------

def test_ledger_prefix_sums_exact():
    x = make_rng(0).random(1000) * 0.1
    led = RegretLedger(x, x[::-1])
    assert np.array_equal(led.cum_O, np.cumsum(x))
    acc = 0.0
    for i, v in enumerate(x[::-1]):
        acc += v
        assert led.cum_E[i] == acc


def test_ledger_rejects_negative_regret():
    RegretLedger([0.0, -1e-10], [0.0, 0.0])
    with pytest.raises(ValueError):
        RegretLedger([0.0, -1e-6], [0.0, 0.0])
    with pytest.raises(ValueError):
        RegretLedger([0.0], [0.0, 0.0])


def test_csv_format():
    led = RegretLedger([0.1, 1 / 3], [0.0, 2.0])
    text = led.to_csv()
    lines = text.split("\n")
    assert lines[0] == CSV_HEADER
    assert lines[1] == "1,0.1,0,0.1,0"
    assert lines[2] == "2,0.333333333333,2,0.433333333333,2"
    assert text.endswith("\n") and "\r" not in text and len(lines) == 4


def test_summarize_single_and_identical():
    led = RegretLedger(np.full(10, 0.5), np.zeros(10))
    s = summarize([led])
    assert np.all(s.stderr_O == 0) and np.all(s.stderr_E == 0)
    s2 = summarize([led, RegretLedger(np.full(10, 0.5), np.zeros(10))])
    assert np.array_equal(s2.mean_O, led.cum_O) and np.all(s2.stderr_O == 0)
    with pytest.raises(ValueError):
        summarize([led, RegretLedger(np.zeros(5), np.zeros(5))])


def test_flatness_constant_increments():
    assert flatness(np.cumsum(np.full(100, 0.7))) == pytest.approx(0.25)
    assert flatness(np.zeros(10)) == 0.0
    led = RegretLedger(np.full(100, 0.1), np.r_[np.ones(10), np.zeros(90)])
    s = summarize([led])
    assert s.flatness_O == pytest.approx(0.25) and s.flatness_E == 0.0


def test_summary_json_bands():
    leds = [RegretLedger(np.full(4, v), np.zeros(4)) for v in (0.1, 0.2, 0.3)]
    js = summarize(leds).to_json()
    finals = np.array([0.4, 0.8, 1.2])
    assert js["final_regret_O"]["mean"] == pytest.approx(finals.mean())
    assert js["final_regret_O"]["two_stderr"] == pytest.approx(2 * finals.std(ddof=1) / math.sqrt(3))
    assert js["per_seed_final_O"] == pytest.approx(finals.tolist())
