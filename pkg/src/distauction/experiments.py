"""Seeded Monte Carlo experiments.

Each experiment is a per-trial function (one independent instance per
trial, seeded from the master seed) plus a summary that reduces the trial
rows in index order. Checks come in two kinds: *hard* ones, which hold on
every trial or at a 3-sigma level and fail the run, and *reported* ones,
which are recorded but never fail.

A run directory holds ``config.json``, ``trials.csv`` and ``summary.json``.
The first line of ``trials.csv`` is a ``#`` comment carrying the config hash
and master seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .auction import (
    AuctionConfig,
    centralized_auction,
    distributed_auction,
    iteration_bounds,
    truncate_rewards,
    truncated_auction,
    truncation_keep,
)
from .bounds import greedy_expected_sum, high_snr_constant_exact, optimal_upper_bound, randomized_greedy
from .channels import GENERATOR_ID, ChannelModel, make_rng, sample_rate_matrix, snr_db_to_lambda
from .core import hungarian_optimal

DISTRIBUTIONS = ("rayleigh-rate", "uniform01", "exp1")
SEED_SCHEME = "sha256(f'{master_seed}:{experiment}:{trial}')[:8], little-endian"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Run parameters; fields an experiment does not use are ignored by it."""

    experiment: str
    trials: int = 100
    master_seed: int = 20120101
    n_users: int = 10
    n_channels: int | None = None
    distribution: str = "rayleigh-rate"
    snr_db: float = 20.0
    eps_grid: list = field(default_factory=lambda: [0.5, 0.2, 0.1, 0.05, 0.02, 0.01])
    alpha: float = 2.0
    n_grid: list = field(default_factory=list)
    snr_grid: list = field(default_factory=list)
    objective: str = "min"
    tolerance: float | None = None
    auction_max_n: int = 16
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.objective not in ("min", "max"):
            raise ConfigError("objective must be 'min' or 'max'")
        if any(e <= 0 for e in self.eps_grid):
            raise ConfigError("eps values must be positive")
        if self.n_channels is None:
            self.n_channels = self.n_users

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}")
        params = dict(DEFAULTS.get(experiment, {}))
        params.update(overrides)
        return cls(experiment=experiment, **params)

    @classmethod
    def from_dict(cls, d: dict, experiment: str | None = None) -> "ExperimentConfig":
        d = dict(d)
        exp = experiment or d.pop("experiment", None)
        d.pop("experiment", None)
        if exp is None:
            raise ConfigError("config does not name an experiment")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls.for_experiment(exp, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("jobs")  # execution detail, not part of the experiment identity
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def trial_seed(master_seed: int, experiment: str, trial: int) -> int:
    digest = hashlib.sha256(f"{master_seed}:{experiment}:{trial}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def sample_instance(distribution: str, n: int, k: int, rng, snr_db: float = 20.0) -> np.ndarray:
    if distribution == "uniform01":
        return rng.random((n, k))
    if distribution == "exp1":
        return rng.exponential(size=(n, k))
    return sample_rate_matrix(ChannelModel.from_snr_db(n, k, snr_db), rng)


@dataclass
class Check:
    name: str
    passed: bool
    hard: bool
    detail: str = ""


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    columns: list
    rows: list
    summary: dict
    checks: list

    @property
    def hard_failures(self) -> list:
        return [c for c in self.checks if c.hard and not c.passed]

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def provenance(self) -> dict:
        return {
            "master_seed": self.config.master_seed,
            "seed_scheme": SEED_SCHEME,
            "generator": GENERATOR_ID,
            "config_hash": self.config.config_hash(),
            "version": __version__,
        }

    def trials_csv(self) -> str:
        buf = io.StringIO()
        prov = self.provenance()
        buf.write(f"# experiment={self.config.experiment} config_hash={prov['config_hash']} "
                  f"master_seed={prov['master_seed']} generator={prov['generator']}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def summary_dict(self) -> dict:
        return {
            "experiment": self.config.experiment,
            "config": self.config.to_dict(),
            "provenance": self.provenance(),
            "summary": self.summary,
            "checks": [asdict(c) for c in self.checks],
            "ok": self.ok,
        }

    def write(self, out_dir, force: bool = False) -> Path:
        """Persist the run; refuses to overwrite a run with a different config unless ``force``."""
        out = Path(out_dir)
        cfg_path = out / "config.json"
        if cfg_path.exists() and not force:
            try:
                old = json.loads(cfg_path.read_text()).get("provenance", {}).get("config_hash")
            except json.JSONDecodeError:
                old = None
            if old != self.config.config_hash():
                raise ConfigError(f"{out} holds results for a different config; use force to overwrite")
        out.mkdir(parents=True, exist_ok=True)
        cfg_path.write_text(json.dumps({"config": self.config.to_dict(), "provenance": self.provenance()},
                                       indent=2, sort_keys=True) + "\n")
        (out / "trials.csv").write_text(self.trials_csv())
        (out / "summary.json").write_text(json.dumps(_jsonable(self.summary_dict()), indent=2) + "\n")
        return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size < 2:
        return float(xs.mean()), 0.0
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(xs.size))


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


# ---------------------------------------------------------------- per-trial work

def _trial_optimality(cfg: ExperimentConfig, rng) -> list:
    R = sample_instance(cfg.distribution, cfg.n_users, cfg.n_channels, rng, cfg.snr_db)
    opt = hungarian_optimal(R)[1]
    rows = [{"eps": 0.0, "variant": "greedy", "value": randomized_greedy(R, rng).value,
             "optimal": opt, "iterations": 1, "bids": cfg.n_users}]
    for eps in cfg.eps_grid:
        for variant, solver in (("central", centralized_auction), ("distributed", distributed_auction)):
            res = solver(R, AuctionConfig(eps=eps))
            rows.append({"eps": eps, "variant": variant, "value": res.assignment.value, "optimal": opt,
                         "iterations": res.trace.iterations, "bids": res.trace.total_bids})
    for r in rows:
        r["gap"] = r["optimal"] - r["value"]
    return rows


def _trial_iterations(cfg: ExperimentConfig, rng) -> list:
    R = sample_instance(cfg.distribution, cfg.n_users, cfg.n_channels, rng, cfg.snr_db)
    rows = []
    for eps in cfg.eps_grid:
        bound = float(iteration_bounds(R, eps).sum())
        ac = AuctionConfig(eps=eps)
        for variant, run in (("central", lambda: centralized_auction(R, ac)),
                             ("distributed", lambda: distributed_auction(R, ac)),
                             ("truncated", lambda: truncated_auction(R, cfg.alpha, ac))):
            res = run()
            rows.append({"eps": eps, "variant": variant, "value": res.assignment.value,
                         "iterations": res.trace.iterations, "bids": res.trace.total_bids,
                         "iteration_bound": bound})
    return rows


def assigned_ranks(X: np.ndarray, cols: np.ndarray, objective: str) -> np.ndarray:
    """Rank (1 = best) of each user's assigned entry within his own row."""
    picked = X[np.arange(X.shape[0]), cols][:, None]
    if objective == "min":
        return (X < picked).sum(axis=1) + 1
    return (X > picked).sum(axis=1) + 1


def _trial_outage(cfg: ExperimentConfig, rng) -> list:
    rows = []
    for n in cfg.n_grid:
        R = sample_instance(cfg.distribution, n, n, rng, cfg.snr_db)
        _, cols = linear_sum_assignment(R, maximize=True)
        opt = float(R[np.arange(n), cols].sum())
        keep = truncation_keep(n, cfg.alpha)
        outage = bool(np.any(assigned_ranks(R, cols, "max") > keep))
        trunc_opt = hungarian_optimal(truncate_rewards(R, cfg.alpha))[1]
        row = {"n": n, "keep": keep, "outage": outage, "optimal": opt, "truncated_optimal": trunc_opt,
               "auction_value": float("nan"), "auction_match": "", "auction_rounds": ""}
        if n <= cfg.auction_max_n:
            eps = cfg.eps_grid[-1] / n
            res = truncated_auction(R, cfg.alpha, AuctionConfig(eps=eps))
            row["auction_value"] = res.assignment.value
            row["auction_match"] = bool(res.assignment.value >= opt - n * eps - 1e-9)
            row["auction_rounds"] = res.trace.iterations
        rows.append(row)
    return rows


RANK_BINS = 8


def _trial_ranks(cfg: ExperimentConfig, rng) -> list:
    n = cfg.n_users
    X = sample_instance(cfg.distribution, n, n, rng, cfg.snr_db)
    _, cols = linear_sum_assignment(X, maximize=cfg.objective == "max")
    ranks = assigned_ranks(X, cols, cfg.objective)
    row = {f"rank_{k}": int(np.sum(ranks == k)) for k in range(1, RANK_BINS + 1)}
    row["rank_more"] = int(np.sum(ranks > RANK_BINS))
    row["users"] = n
    return [row]


def _trial_mezard_parisi(cfg: ExperimentConfig, rng) -> list:
    rows = []
    for n in cfg.n_grid:
        X = rng.exponential(size=(n, n))
        r, c = linear_sum_assignment(X)
        rows.append({"n": n, "value": float(X[r, c].sum())})
    return rows


def _trial_greedy_bounds(cfg: ExperimentConfig, rng) -> list:
    rows = []
    for snr in cfg.snr_grid:
        R = sample_rate_matrix(ChannelModel.from_snr_db(cfg.n_users, cfg.n_channels, snr), rng)
        rows.append({"snr_db": snr, "greedy": randomized_greedy(R, rng).value,
                     "optimal": hungarian_optimal(R)[1]})
    return rows


# ---------------------------------------------------------------- summaries

def _summ_optimality(cfg, rows):
    summary, checks = {}, []
    n = cfg.n_users
    worst = max(r["gap"] - n * r["eps"] for r in rows if r["variant"] != "greedy")
    checks.append(Check("gap <= N*eps on every trial", worst <= 1e-9, True, f"max(gap - N eps) = {worst:.3g}"))
    for variant in ("central", "distributed"):
        for eps in cfg.eps_grid:
            gaps = [r["gap"] for r in rows if r["variant"] == variant and r["eps"] == eps]
            its = [r["iterations"] for r in rows if r["variant"] == variant and r["eps"] == eps]
            m, se = _mean_se(gaps)
            summary[f"{variant}/eps={eps}"] = {"mean_gap": m, "se_gap": se, "mean_iterations": float(np.mean(its))}
    g, gse = _mean_se([r["gap"] for r in rows if r["variant"] == "greedy"])
    summary["greedy"] = {"mean_gap": g, "se_gap": gse}
    big = max(cfg.eps_grid)
    dgap = summary[f"distributed/eps={big}"]["mean_gap"]
    cgap = summary[f"central/eps={big}"]["mean_gap"]
    checks.append(Check("distributed degrades faster at the largest eps", dgap >= cgap, False,
                        f"distributed {dgap:.4g} vs central {cgap:.4g} at eps={big}"))
    small = min(cfg.eps_grid)
    checks.append(Check("gap shrinks with eps", all(
        summary[f"{v}/eps={small}"]["mean_gap"] <= summary[f"{v}/eps={big}"]["mean_gap"] + 1e-12
        for v in ("central", "distributed")), False, f"eps {small} vs {big}"))
    return summary, checks


def _summ_iterations(cfg, rows):
    summary, checks = {}, []
    over = [r for r in rows if r["bids" if r["variant"] == "central" else "iterations"] > r["iteration_bound"]]
    checks.append(Check("iterations within the per-user bound sum", not over, True, f"{len(over)} violations"))
    for variant in ("central", "distributed", "truncated"):
        for eps in cfg.eps_grid:
            sel = [r for r in rows if r["variant"] == variant and r["eps"] == eps]
            summary[f"{variant}/eps={eps}"] = {
                "mean_value": float(np.mean([r["value"] for r in sel])),
                "mean_iterations": float(np.mean([r["iterations"] for r in sel])),
                "mean_bids": float(np.mean([r["bids"] for r in sel])),
            }
    grid = sorted(cfg.eps_grid)
    mono = all(summary[f"distributed/eps={a}"]["mean_iterations"] >= summary[f"distributed/eps={b}"]["mean_iterations"]
               for a, b in zip(grid[:-1], grid[1:]))
    checks.append(Check("larger eps, fewer mean rounds", mono, False))
    ratios = {eps: summary[f"truncated/eps={eps}"]["mean_iterations"] / summary[f"distributed/eps={eps}"]["mean_iterations"]
              for eps in cfg.eps_grid}
    summary["truncated_over_full_rounds"] = ratios
    checks.append(Check("truncated and full rounds comparable", all(0.5 <= r <= 2.0 for r in ratios.values()),
                        False, json.dumps(ratios)))
    return summary, checks


def _summ_outage(cfg, rows):
    summary, checks = {}, []
    for n in cfg.n_grid:
        sel = [r for r in rows if r["n"] == n]
        p = float(np.mean([r["outage"] for r in sel]))
        se = _binomial_se(p, len(sel))
        same = float(np.mean([abs(r["truncated_optimal"] - r["optimal"]) <= 1e-9 for r in sel]))
        entry = {"outage": p, "se": se, "limit": 1.0 / n, "truncated_optimum_matches": same}
        checks.append(Check(f"outage(N={n}) <= 1/N + 3se", p <= 1.0 / n + 3 * se, True,
                            f"{p:.4f} vs {1.0 / n:.4f} + 3*{se:.4f}"))
        runs = [r for r in sel if r["auction_match"] != ""]
        if runs:
            q = float(np.mean([r["auction_match"] for r in runs]))
            qse = _binomial_se(q, len(runs))
            entry.update(auction_match=q, auction_match_se=qse,
                         auction_mean_rounds=float(np.mean([r["auction_rounds"] for r in runs])))
            target = 1.0 - 1.0 / n ** (cfg.alpha - 1)
            checks.append(Check(f"truncated auction optimal (N={n}) >= 1 - N^(1-alpha) - 3se",
                                q >= target - 3 * qse, True, f"{q:.4f} vs {target:.4f}"))
        summary[f"N={n}"] = entry
    return summary, checks


def _summ_ranks(cfg, rows):
    tol = 0.02 if cfg.tolerance is None else cfg.tolerance
    total = sum(r["users"] for r in rows)
    freq = {k: sum(r[f"rank_{k}"] for r in rows) / total for k in range(1, RANK_BINS + 1)}
    freq_more = sum(r["rank_more"] for r in rows) / total
    summary = {"frequency": freq, "frequency_beyond": freq_more, "law": {k: 2.0**-k for k in freq}}
    checks = [Check(f"P(rank={k}) within {tol} of 2^-{k}", abs(freq[k] - 2.0**-k) <= tol, True,
                    f"{freq[k]:.4f} vs {2.0**-k:.4f}") for k in range(1, 5)]
    checks.append(Check("frequencies sum to 1", abs(sum(freq.values()) + freq_more - 1) < 1e-12, True))
    return summary, checks


def _summ_mezard_parisi(cfg, rows):
    tol = 0.05 if cfg.tolerance is None else cfg.tolerance
    limit = math.pi**2 / 6
    summary, checks = {"limit": limit}, []
    means = []
    for n in cfg.n_grid:
        m, se = _mean_se([r["value"] for r in rows if r["n"] == n])
        means.append(m)
        summary[f"N={n}"] = {"mean": m, "se": se, "deviation": m - limit,
                             "finite_n_sum_inverse_squares": math.fsum(1 / k**2 for k in range(1, n + 1))}
    nmax = max(cfg.n_grid)
    m = summary[f"N={nmax}"]["mean"]
    checks.append(Check(f"|mean(N={nmax}) - pi^2/6| <= {tol}", abs(m - limit) <= tol, True, f"{m:.4f}"))
    order = np.argsort(cfg.n_grid)
    # E[min assignment] = sum_{k<=N} 1/k^2 grows toward the limit from below
    checks.append(Check("mean increases toward the limit with N",
                        all(np.diff(np.asarray(means)[order]) >= 0), False))
    return summary, checks


def _summ_greedy_bounds(cfg, rows):
    summary, checks = {}, []
    n, k = cfg.n_users, cfg.n_channels
    c = high_snr_constant_exact(n) if n >= 2 else 0.0
    rel = []
    for snr in cfg.snr_grid:
        sel = [r for r in rows if r["snr_db"] == snr]
        lam = snr_db_to_lambda(snr)
        L, U = greedy_expected_sum(n, k, lam), optimal_upper_bound(n, k, lam)
        g, gse = _mean_se([r["greedy"] for r in sel])
        o, ose = _mean_se([r["optimal"] for r in sel])
        summary[f"snr={snr}"] = {"L": L, "U": U, "mean_greedy": g, "se_greedy": gse,
                                 "mean_optimal": o, "se_optimal": ose, "U_minus_L": U - L,
                                 "rel_gap": (U - L) / U, "greedy_over_U": g / U}
        rel.append((U - L) / U)
        checks.append(Check(f"L <= mean optimal <= U at {snr} dB", L - 3 * ose <= o <= U + 3 * ose, True,
                            f"L={L:.4f} opt={o:.4f}+-{ose:.4f} U={U:.4f}"))
        checks.append(Check(f"mean greedy matches L at {snr} dB", abs(g - L) <= 3 * gse + 1e-12, True,
                            f"greedy={g:.4f}+-{gse:.4f} L={L:.4f}"))
    top = max(cfg.snr_grid)
    ul = summary[f"snr={top}"]["U_minus_L"]
    summary["high_snr_constant"] = c
    checks.append(Check(f"U-L at {top} dB within 5% of the high-SNR constant", abs(ul - c) <= 0.05 * c, False,
                        f"{ul:.4f} vs {c:.4f}"))
    order = np.argsort(cfg.snr_grid)
    checks.append(Check("(U-L)/U decreasing in SNR", all(np.diff(np.asarray(rel)[order]) < 0), False))
    at30 = [snr for snr in cfg.snr_grid if snr == 30]
    if at30:
        ratio = summary[f"snr={at30[0]}"]["greedy_over_U"]
        checks.append(Check("mean greedy >= 0.95 U at 30 dB", ratio >= 0.95, False, f"{ratio:.4f}"))
    return summary, checks


EXPERIMENTS = {
    "optimality_vs_eps": (_trial_optimality, _summ_optimality,
                          ["trial", "eps", "variant", "value", "optimal", "gap", "iterations", "bids"]),
    "iterations": (_trial_iterations, _summ_iterations,
                   ["trial", "eps", "variant", "value", "iterations", "bids", "iteration_bound"]),
    "truncation_outage": (_trial_outage, _summ_outage,
                          ["trial", "n", "keep", "outage", "optimal", "truncated_optimal",
                           "auction_value", "auction_match", "auction_rounds"]),
    "rank_distribution": (_trial_ranks, _summ_ranks,
                          ["trial", "users"] + [f"rank_{k}" for k in range(1, RANK_BINS + 1)] + ["rank_more"]),
    "mezard_parisi": (_trial_mezard_parisi, _summ_mezard_parisi, ["trial", "n", "value"]),
    "greedy_vs_bounds": (_trial_greedy_bounds, _summ_greedy_bounds, ["trial", "snr_db", "greedy", "optimal"]),
}

DEFAULTS = {
    "optimality_vs_eps": {"trials": 100, "n_users": 10, "snr_db": 20.0},
    "iterations": {"trials": 100, "n_users": 10, "snr_db": 20.0, "eps_grid": [0.5, 0.2, 0.1, 0.05, 0.02]},
    "truncation_outage": {"trials": 500, "distribution": "uniform01", "n_grid": [8, 16, 32, 64],
                          "eps_grid": [0.1]},
    "rank_distribution": {"trials": 100, "n_users": 200, "distribution": "exp1"},
    "mezard_parisi": {"trials": 100, "distribution": "exp1", "n_grid": [1, 10, 100, 300]},
    "greedy_vs_bounds": {"trials": 500, "n_users": 10,
                         "snr_grid": [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]},
}


def _run_trial(args):
    cfg, i = args
    trial_fn = EXPERIMENTS[cfg.experiment][0]
    rows = trial_fn(cfg, make_rng(trial_seed(cfg.master_seed, cfg.experiment, i)))
    for r in rows:
        r["trial"] = i
    return rows


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every trial (in worker processes when ``cfg.jobs > 1``) and summarize."""
    _, summ_fn, columns = EXPERIMENTS[cfg.experiment]
    work = [(cfg, i) for i in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            per_trial = list(pool.map(_run_trial, work, chunksize=max(1, cfg.trials // (4 * cfg.jobs))))
    else:
        per_trial = [_run_trial(w) for w in work]
    rows = [r for trial_rows in per_trial for r in trial_rows]
    summary, checks = summ_fn(cfg, rows)
    return ExperimentResult(cfg, columns, rows, summary, checks)
