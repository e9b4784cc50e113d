import json
import os
import subprocess
import sys

import pytest

from tiered_rl.cli import (ConfigError, SeedSearchExhausted, filter_seeds_by_gap, main,
                           parse_config, parse_seeds, run_experiment)
from tiered_rl.envcore import generate_random_mdp, make_rng, save_mdp
from tiered_rl.ledger import CSV_HEADER
from tiered_rl.oracle import gap_report


def test_seed_syntax():
    assert parse_seeds("0..9") == list(range(10))
    assert parse_seeds("3") == [3]
    assert parse_seeds("0..2,7") == [0, 1, 2, 7]
    with pytest.raises(ConfigError):
        parse_seeds("5..2")


def test_long_run_flags():
    cfg = parse_config("--mode mdp --states 5 --actions 5 --horizon 5 --episodes 20000 --seeds 0..9".split())
    assert (cfg.states, cfg.actions, cfg.horizon, cfg.episodes) == (5, 5, 5, 20000)
    assert cfg.seeds == list(range(10))


def test_defaults_and_stable_digest():
    a, b = parse_config([]), parse_config([])
    assert a.alpha == 1.5 and a.bonus == "scaled_hoeffding" and a.bonus_scale == 0.25
    assert a.seeds == list(range(10))
    assert a.digest() == b.digest()
    # jobs and output location do not change what is computed
    assert parse_config(["--jobs", "3", "--out-dir", "x"]).digest() == a.digest()
    assert parse_config(["--episodes", "7"]).digest() != a.digest()


def test_digest_ignores_field_order(tmp_path):
    fields = {"mode": "bandit", "episodes": 50, "seeds": [1, 2]}
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    p1.write_text(json.dumps(fields))
    p2.write_text(json.dumps(dict(reversed(list(fields.items())))))
    assert parse_config(["--config", str(p1)]).digest() == parse_config(["--config", str(p2)]).digest()
    assert parse_config(["--config", str(p1), "--episodes", "9"]).episodes == 9


def test_rejections(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(["--alpha", "1.0"])
    with pytest.raises(ConfigError):
        parse_config(["--mdp-seed", "1", "--mdp-file", "m.json"])
    with pytest.raises(ConfigError):
        parse_config(["--episodes", "0"])
    with pytest.raises(ConfigError):
        parse_config(["--mode", "bandit", "--arms", "3", "--gaps", "0,0.1"])
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"colour": 1}))
    with pytest.raises(ConfigError):
        parse_config(["--config", str(bad)])
    with pytest.raises(SystemExit):
        parse_config(["--no-such-flag"])
    assert main(["--alpha", "1.0"]) == 2


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv("TIERED_RL_JOBS", "3")
    assert parse_config([]).jobs == 3
    assert parse_config(["--jobs", "2"]).jobs == 2


def test_bandit_csv_rows(tmp_path):
    cfg = parse_config(["--mode", "bandit", "--episodes", "10", "--seeds", "0", "--out-dir", str(tmp_path)])
    manifest, files = run_experiment(cfg)
    raw = (tmp_path / "seed_0.csv").read_bytes()
    lines = raw.decode().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 12 and lines[-1] == ""
    assert b"\r" not in raw
    assert manifest["files"] == ["seed_0.csv"]
    summary = json.loads((tmp_path / "summary.json").read_text())
    for key in ("config_digest", "per_seed_final_O", "final_regret_E", "flatness_E", "instance"):
        assert key in summary
    assert summary["instance"]["delta_min"] == pytest.approx(0.1)


def test_runs_are_byte_identical(tmp_path):
    args = ["--mode", "mdp", "--episodes", "200", "--seeds", "0..1", "--use-exploit-data"]
    run_experiment(parse_config(args + ["--out-dir", str(tmp_path / "a")]))
    run_experiment(parse_config(args + ["--out-dir", str(tmp_path / "b"), "--jobs", "2"]))
    for name in ("seed_0.csv", "seed_1.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("mode", ["doubling", "mixed", "adversarial"])
def test_other_modes_run(tmp_path, mode):
    args = ["--mode", mode, "--episodes", "60", "--seeds", "0", "--out-dir", str(tmp_path),
            "--states", "2", "--actions", "2", "--horizon", "2"]
    assert main(args) == 0
    text = (tmp_path / "seed_0.csv").read_text()
    assert len(text.splitlines()) == 61
    summary = json.loads((tmp_path / "summary.json").read_text())
    if mode == "adversarial":
        assert summary["instance"]["k_sup"] >= 1


def test_mdp_file_round_trip(tmp_path):
    m = generate_random_mdp(2, 3, 2, make_rng(4))
    save_mdp(m, tmp_path / "m.json")
    out = tmp_path / "out"
    assert main(["--mdp-file", str(tmp_path / "m.json"), "--episodes", "20", "--seeds", "0",
                 "--out-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["instance"]["delta_min"] == pytest.approx(gap_report(m).delta_min)


def test_larger_gap_gives_smaller_exploiter_regret(tmp_path):
    seeds = filter_seeds_by_gap(5, 5, 5, [0.009, 0.0015], tolerance=0.2, budget=20_000)
    finals = {}
    for ms in seeds:
        out = tmp_path / str(ms)
        run_experiment(parse_config([
            "--mode", "mdp", "--states", "5", "--actions", "5", "--horizon", "5",
            "--episodes", "3000", "--seeds", "0..2", "--use-exploit-data", "--bonus-scale", "0.02",
            "--mdp-seed", str(ms), "--out-dir", str(out)]))
        s = json.loads((out / "summary.json").read_text())
        finals[s["instance"]["delta_min"]] = s["final_regret_E"]["mean"]
    (big, r_big), (small, r_small) = sorted(finals.items(), reverse=True)
    assert big == pytest.approx(0.009, rel=0.2) and small == pytest.approx(0.0015, rel=0.2)
    assert r_big < r_small


def test_seed_filter_self_match():
    dm = gap_report(generate_random_mdp(3, 3, 3, make_rng(17))).delta_min
    assert filter_seeds_by_gap(3, 3, 3, [dm], tolerance=0.0, budget=100) == [17]


def test_seed_filter_exhausted():
    with pytest.raises(SeedSearchExhausted) as info:
        filter_seeds_by_gap(2, 2, 2, [10.0], tolerance=0.1, budget=20)
    assert info.value.nearest[10.0] is not None
    with pytest.raises(ValueError):
        filter_seeds_by_gap(2, 2, 2, [0.1], budget=0)


def test_three_gap_targets_found():
    seeds = filter_seeds_by_gap(5, 5, 5, [0.0015, 0.003, 0.009], tolerance=0.5, budget=10_000)
    for t, s in zip([0.0015, 0.003, 0.009], seeds):
        assert abs(gap_report(generate_random_mdp(5, 5, 5, make_rng(s))).delta_min - t) <= 0.5 * t


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "tiered_rl.cli", "--mode", "bandit", "--episodes", "5",
                           "--seeds", "0..1", "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert sorted(os.listdir(tmp_path)) == ["manifest.json", "seed_0.csv", "seed_1.csv", "summary.json"]
