"""Command-line experiment runner.

Each seed's run is written to ``seed_<n>.csv``; ``summary.json`` and
``manifest.json`` describe the whole experiment.  Example::

    tiered-rl --mode mdp --states 5 --actions 5 --horizon 5 \\
        --episodes 20000 --seeds 0..9 --use-exploit-data --out-dir runs/m1
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bandit import run_bandit_tiered
from .envcore import BanditInstance, generate_random_mdp, load_mdp, make_rng
from .ledger import RegretLedger, summarize
from .oracle import DEFAULT_CAP, gap_report
from .rl import (BonusSpec, TieredRunConfig, build_hard_mdp_plus, run_adversarial, run_doubling,
                 run_framework1, run_mixed_arrival)

log = logging.getLogger("tiered_rl")

MODES = ("bandit", "mdp", "doubling", "mixed", "adversarial")
DEFAULT_MEANS = (0.5, 0.5, 0.4, 0.4, 0.3)


class ConfigError(ValueError):
    pass


class SeedSearchExhausted(RuntimeError):
    def __init__(self, msg, nearest):
        super().__init__(msg)
        self.nearest = nearest


@dataclass
class ExperimentConfig:
    mode: str = "mdp"
    states: int = 3
    actions: int = 3
    horizon: int = 3
    arms: int | None = None
    gaps: list | None = None
    means: list | None = None
    episodes: int = 2000
    alpha: float = 1.5
    bonus: str = "scaled_hoeffding"
    bonus_scale: float = 0.25
    seeds: list = field(default_factory=lambda: list(range(10)))
    use_exploit_data: bool = False
    mixed_ratio: float = 1.0
    mdp_seed: int | None = None
    mdp_file: str | None = None
    c1: float | None = None
    c2: float | None = None
    cap: int = DEFAULT_CAP
    record_rewards: bool = False
    jobs: int = 1
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not self.alpha > 1:
            raise ConfigError("alpha must be > 1")
        if self.episodes < 1:
            raise ConfigError("episodes must be at least 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if min(self.states, self.actions, self.horizon) < 1:
            raise ConfigError("states, actions and horizon must be positive")
        if self.mdp_seed is not None and self.mdp_file is not None:
            raise ConfigError("--mdp-seed and --mdp-file are conflicting instance sources")
        if self.gaps is not None and self.means is not None:
            raise ConfigError("--gaps and --means are conflicting instance sources")
        if self.bonus not in ("naive_hoeffding", "scaled_hoeffding"):
            raise ConfigError(f"unknown bonus {self.bonus!r}")
        if not self.bonus_scale > 0:
            raise ConfigError("bonus scale must be positive")
        if self.mode == "mixed" and not self.mixed_ratio > 0:
            raise ConfigError("mixed ratio must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.mode == "bandit":
            n = len(self.bandit_means())
            if self.arms is not None and self.arms != n:
                raise ConfigError(f"--arms {self.arms} disagrees with {n} given means/gaps")
        return self

    def bandit_means(self) -> list:
        if self.means is not None:
            return list(self.means)
        if self.gaps is not None:
            return BanditInstance.from_gaps(self.gaps).means.tolist()
        if self.arms is not None and self.arms != len(DEFAULT_MEANS):
            raise ConfigError("give --gaps or --means for a non-default number of arms")
        return list(DEFAULT_MEANS)

    def digest_fields(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("jobs")
        d.pop("out_dir")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.digest_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_seeds(text: str) -> list[int]:
    """``"0..9"``, ``"3"``, ``"0..3,7"`` (ranges are inclusive)."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ConfigError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tiered-rl", description="Tiered explorer/exploiter experiments")
    p.add_argument("--config", help="JSON file with config fields; explicit flags override it")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--states", type=int)
    p.add_argument("--actions", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--arms", type=int)
    p.add_argument("--gaps", type=_floats, help="comma-separated arm gaps (bandit mode)")
    p.add_argument("--means", type=_floats, help="comma-separated arm means (bandit mode)")
    p.add_argument("--episodes", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bonus", choices=("naive_hoeffding", "scaled_hoeffding"))
    p.add_argument("--bonus-scale", type=float)
    p.add_argument("--seeds", type=parse_seeds, help="e.g. 0..9 or 0..3,7")
    p.add_argument("--use-exploit-data", action="store_true", default=None)
    p.add_argument("--mixed-ratio", type=float)
    p.add_argument("--mdp-seed", type=int)
    p.add_argument("--mdp-file")
    p.add_argument("--c1", type=float, help="adversarial mode constant (default H*S*A/gap)")
    p.add_argument("--c2", type=float)
    p.add_argument("--cap", type=int, help="limit on enumerated optimal policies")
    p.add_argument("--record-rewards", action="store_true", default=None)
    p.add_argument("--jobs", type=int, help="worker processes (env TIERED_RL_JOBS)")
    p.add_argument("--out-dir")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        with open(args.config) as fh:
            values.update(json.load(fh))
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if isinstance(values.get("seeds"), str):
            values["seeds"] = parse_seeds(values["seeds"])
    for name, val in vars(args).items():
        if name in ("config", "verbose") or val is None:
            continue
        values[name] = val
    if "jobs" not in values and os.environ.get("TIERED_RL_JOBS"):
        values["jobs"] = int(os.environ["TIERED_RL_JOBS"])
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_instance(cfg: ExperimentConfig):
    if cfg.mode == "bandit":
        return BanditInstance(cfg.bandit_means())
    if cfg.mdp_file is not None:
        return load_mdp(cfg.mdp_file)
    mdp_seed = 0 if cfg.mdp_seed is None else cfg.mdp_seed
    return generate_random_mdp(cfg.states, cfg.actions, cfg.horizon, make_rng(mdp_seed))


def _prepare(cfg: ExperimentConfig):
    """Instance, optional scripted explorer and diagnostics for ``cfg``."""
    inst = load_instance(cfg)
    if cfg.mode == "bandit":
        diag = {"delta_min": inst.delta_min, "n_arms": inst.n_arms, "means": inst.means.tolist()}
        return inst, None, diag
    report = gap_report(inst, cap=cfg.cap)
    diag = report.to_json()
    if cfg.mode != "adversarial":
        return inst, None, diag
    hard = build_hard_mdp_plus(inst, report, cfg.c1, cfg.c2)
    diag = {"base": diag, "k_sup": hard.k_sup, "d_plus_min": hard.scripted.d_min,
            "delta_min": hard.scripted.delta_min}
    return hard.mdp, hard.scripted, diag


def _run_config(cfg: ExperimentConfig) -> TieredRunConfig:
    mode = {"mdp": "framework1", "doubling": "doubling", "mixed": "mixed_arrival",
            "adversarial": "adversarial"}[cfg.mode]
    return TieredRunConfig(
        k_max=cfg.episodes, alpha=cfg.alpha, bonus=BonusSpec(cfg.bonus, cfg.bonus_scale),
        explorer="scripted" if mode == "adversarial" else "optimistic_vi", mode=mode,
        mixed_ratio=cfg.mixed_ratio, use_exploit_data=cfg.use_exploit_data,
        record_rewards=cfg.record_rewards)


def run_seed(cfg: ExperimentConfig, seed: int, prepared=None) -> RegretLedger:
    inst, scripted, _ = prepared if prepared is not None else _prepare(cfg)
    rng = make_rng(seed)
    if cfg.mode == "bandit":
        return run_bandit_tiered(inst, cfg.episodes, cfg.alpha, rng,
                                 record_rewards=cfg.record_rewards, seed=seed)
    rc = _run_config(cfg)
    if cfg.mode == "mdp":
        return run_framework1(inst, rc, rng, seed=seed)
    if cfg.mode == "doubling":
        return run_doubling(inst, rc, rng, seed=seed)
    if cfg.mode == "mixed":
        return run_mixed_arrival(inst, rc, rng, seed=seed)
    return run_adversarial(inst, scripted, rc, rng, seed=seed)


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _worker(cfg: ExperimentConfig, seed: int, out_dir: str):
    ledger = run_seed(cfg, seed)
    path = Path(out_dir) / f"seed_{seed}.csv"
    atomic_write(path, ledger.to_csv())
    return seed, path.name, ledger.inst_O, ledger.inst_E


def run_experiment(cfg: ExperimentConfig) -> tuple[dict, list[Path]]:
    """Run every seed, write CSVs plus ``summary.json`` and ``manifest.json``."""
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, _, diag = _prepare(cfg)
    results = []
    failures = {}
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = {s: pool.submit(_worker, cfg, s, str(out)) for s in cfg.seeds}
            for s, fut in futs.items():
                try:
                    results.append(fut.result())
                except Exception as exc:  # keep going; reported in the manifest
                    failures[s] = repr(exc)
    else:
        for s in cfg.seeds:
            try:
                results.append(_worker(cfg, s, str(out)))
            except Exception as exc:
                log.error("seed %s failed: %r", s, exc)
                failures[s] = repr(exc)
    results.sort(key=lambda r: cfg.seeds.index(r[0]))
    ledgers = [RegretLedger(r[2], r[3]) for r in results]
    digest = cfg.digest()
    summary = {"config_digest": digest, "config": cfg.digest_fields(), "seeds": [r[0] for r in results],
               "instance": diag}
    if ledgers:
        summary.update(summarize(ledgers).to_json())
    files = [out / r[1] for r in results]
    atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest = {"config_digest": digest, "version": __version__,
                "files": [f.name for f in files], "instance": diag, "failed_seeds": failures}
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest, files + [out / "summary.json", out / "manifest.json"]


def filter_seeds_by_gap(s: int, a: int, h: int, targets, tolerance: float = 0.5,
                        budget: int = 10_000, start: int = 0) -> list[int]:
    """First MDP seed whose ``delta_min`` is within ``tolerance * target`` of each target.

    Raises :class:`SeedSearchExhausted` carrying the nearest seed per target
    when some target has no match within ``budget`` seeds.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    targets = list(targets)
    found: dict[int, int] = {}
    nearest = {i: (None, np.inf) for i in range(len(targets))}
    for seed in range(start, start + budget):
        dm = gap_report(generate_random_mdp(s, a, h, make_rng(seed)), cap=1000).delta_min
        for i, t in enumerate(targets):
            if i in found:
                continue
            err = abs(dm - t)
            if err < nearest[i][1]:
                nearest[i] = (seed, err)
            if err <= tolerance * t:
                found[i] = seed
        if len(found) == len(targets):
            return [found[i] for i in range(len(targets))]
    missing = [targets[i] for i in range(len(targets)) if i not in found]
    raise SeedSearchExhausted(
        f"no seed within tolerance for targets {missing} after {budget} seeds; "
        f"nearest: {[nearest[i] for i in range(len(targets)) if i not in found]}",
        {targets[i]: nearest[i][0] for i in range(len(targets))})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    verbose = "-v" in argv or "--verbose" in argv
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(argv)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"tiered-rl: error: {exc}", file=sys.stderr)
        return 2
    manifest, _ = run_experiment(cfg)
    if manifest["failed_seeds"]:
        print(f"tiered-rl: {len(manifest['failed_seeds'])} seed(s) failed", file=sys.stderr)
        return 1
    log.info("wrote %d seed files to %s", len(manifest["files"]), cfg.out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
