"""Sequential model-based optimization: random init, Tree-structured Parzen
Estimator suggestions, early-stopped trials, JSONL persistence."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GAMMA = 0.25          # good/bad split quantile
N_CANDIDATES = 24     # candidates drawn from l(x) per suggestion
MIN_BANDWIDTH = 0.1   # fraction of the parameter range; keeps exploration alive
PRIOR_WEIGHT = 1.0    # uniform pseudo-observation mixed into each density


@dataclass
class ParamSpec:
    name: str
    kind: str  # "uniform_float" | "int_range" | "choice"
    lo: float | None = None
    hi: float | None = None
    values: list | None = None

    def __post_init__(self):
        if self.kind in ("uniform_float", "int_range"):
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError(f"{self.name}: need lo < hi")
        elif self.kind == "choice":
            if not self.values:
                raise ValueError(f"{self.name}: choice values must be non-empty")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")


@dataclass
class SearchSpace:
    params: list[ParamSpec]

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")

    @classmethod
    def from_json(cls, path) -> "SearchSpace":
        records = json.loads(Path(path).read_text())
        return cls([ParamSpec(**rec) for rec in records])

    def to_json(self, path) -> None:
        recs = []
        for p in self.params:
            rec = {"name": p.name, "kind": p.kind}
            if p.kind == "choice":
                rec["values"] = p.values
            else:
                rec["lo"], rec["hi"] = p.lo, p.hi
            recs.append(rec)
        Path(path).write_text(json.dumps(recs, indent=1))


def default_search_space() -> SearchSpace:
    """The full 13-parameter augmentation search space."""
    return SearchSpace([
        ParamSpec("p_eda", "uniform_float", 0.0, 1.0),
        ParamSpec("p_syn", "uniform_float", 0.0, 0.3),
        ParamSpec("p_swp", "uniform_float", 0.0, 0.3),
        ParamSpec("p_ins", "uniform_float", 0.0, 0.3),
        ParamSpec("p_del", "uniform_float", 0.0, 0.3),
        ParamSpec("p_bt", "uniform_float", 0.0, 1.0),
        ParamSpec("n_f", "choice", values=[0, 1]),
        ParamSpec("w_f", "int_range", 1, 32),
        ParamSpec("n_t", "int_range", 0, 8),
        ParamSpec("w_t", "int_range", 1, 64),
        ParamSpec("g_max", "int_range", 0, 6),
        ParamSpec("p_ms", "uniform_float", 0.0, 1.0),
        ParamSpec("alpha", "uniform_float", 0.0, 1.0),
    ])


@dataclass
class TrialRecord:
    trial_id: int
    config: dict
    objective: float | None
    status: str  # "completed" | "pruned" | "failed"
    epochs_run: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "schema": 1,
            "trial_id": self.trial_id,
            "config": self.config,
            "objective": self.objective,
            "status": self.status,
            "epochs_run": self.epochs_run,
        })

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        rec = json.loads(line)
        if rec.pop("schema", 1) != 1:
            raise ValueError("unsupported trial record schema")
        return cls(**rec)


def sample_random(space: SearchSpace, rng: np.random.Generator) -> dict:
    """One configuration with every parameter drawn independently."""
    cfg = {}
    for p in space.params:
        if p.kind == "uniform_float":
            cfg[p.name] = float(rng.uniform(p.lo, p.hi))
        elif p.kind == "int_range":
            cfg[p.name] = int(rng.integers(int(p.lo), int(p.hi) + 1))
        else:
            cfg[p.name] = p.values[int(rng.integers(len(p.values)))]
    return cfg


def _kde_bandwidth(obs: np.ndarray, rng_width: float) -> float:
    # Silverman's rule on the observed spread, floored to 1% of the range so
    # degenerate observation sets still yield a proper density
    bw = 1.06 * float(np.std(obs)) * len(obs) ** (-1.0 / 5.0)
    return max(bw, rng_width * MIN_BANDWIDTH)


def _kde_density(x: float, mus: np.ndarray, bw: float, lo: float, hi: float) -> float:
    """Truncated-Gaussian kernel mixture plus a uniform prior component."""
    from scipy.stats import norm

    dens = norm.pdf(x, loc=mus, scale=bw)
    mass = norm.cdf(hi, loc=mus, scale=bw) - norm.cdf(lo, loc=mus, scale=bw)
    kernels = float((dens / np.maximum(mass, 1e-12)).sum())
    prior = PRIOR_WEIGHT / (hi - lo)
    return (kernels + prior) / (len(mus) + PRIOR_WEIGHT)


def _sample_kde(mus: np.ndarray, bw: float, lo: float, hi: float, rng) -> float:
    if rng.uniform() < PRIOR_WEIGHT / (len(mus) + PRIOR_WEIGHT):
        return float(rng.uniform(lo, hi))
    mu = mus[int(rng.integers(len(mus)))]
    for _ in range(100):
        x = rng.normal(mu, bw)
        if lo <= x <= hi:
            return float(x)
    return float(np.clip(rng.normal(mu, bw), lo, hi))


def tpe_suggest(
    history: list[TrialRecord], space: SearchSpace, rng: np.random.Generator, n_init: int = 10
) -> dict:
    """Suggest a configuration maximizing the good/bad density ratio.

    History is split at the GAMMA quantile of the objective (higher is
    better); numeric dimensions get Gaussian KDEs truncated to their range,
    categorical ones add-one-smoothed counts. Falls back to random sampling
    with fewer than ``n_init`` scored trials.
    """
    scored = [t for t in history if t.status != "failed" and t.objective is not None]
    if len(scored) < n_init:
        return sample_random(space, rng)

    scored = sorted(scored, key=lambda t: -t.objective)
    n_good = max(1, math.ceil(GAMMA * len(scored)))
    good, bad = scored[:n_good], scored[n_good:]
    if not bad:
        bad = scored  # degenerate split: everything informs g(x)

    candidates = []
    scores = []
    for _ in range(N_CANDIDATES):
        cfg = {}
        log_ratio = 0.0
        for p in space.params:
            if p.kind == "choice":
                g_counts = np.ones(len(p.values))
                b_counts = np.ones(len(p.values))
                for t in good:
                    g_counts[p.values.index(t.config[p.name])] += 1
                for t in bad:
                    b_counts[p.values.index(t.config[p.name])] += 1
                g_prob = g_counts / g_counts.sum()
                b_prob = b_counts / b_counts.sum()
                k = int(rng.choice(len(p.values), p=g_prob))
                cfg[p.name] = p.values[k]
                log_ratio += math.log(g_prob[k] / b_prob[k])
            else:
                lo, hi = float(p.lo), float(p.hi)
                width = hi - lo
                g_obs = np.array([float(t.config[p.name]) for t in good])
                b_obs = np.array([float(t.config[p.name]) for t in bad])
                g_bw = _kde_bandwidth(g_obs, width)
                b_bw = _kde_bandwidth(b_obs, width)
                x = _sample_kde(g_obs, g_bw, lo, hi, rng)
                if p.kind == "int_range":
                    x = float(np.clip(round(x), int(p.lo), int(p.hi)))
                l_dens = _kde_density(x, g_obs, g_bw, lo, hi)
                g_dens = _kde_density(x, b_obs, b_bw, lo, hi)
                cfg[p.name] = int(x) if p.kind == "int_range" else x
                log_ratio += math.log(max(l_dens, 1e-300)) - math.log(max(g_dens, 1e-300))
        candidates.append(cfg)
        scores.append(log_ratio)
    return candidates[int(np.argmax(scores))]


def load_trials(log_path) -> list[TrialRecord]:
    log_path = Path(log_path)
    if not log_path.exists():
        return []
    trials = []
    for line in log_path.read_text().splitlines():
        if line.strip():
            trials.append(TrialRecord.from_json(line))
    return trials


def run_search(
    objective,
    space: SearchSpace,
    n_init: int = 10,
    n_trials: int = 100,
    seed: int = 0,
    log_path=None,
    resume: bool = False,
) -> tuple[list[TrialRecord], dict | None]:
    """Random-then-TPE search over ``space``, maximizing ``objective``.

    ``objective(config, trial_id, seed) -> (value, status, epochs_run)``;
    pruned trials report their best value before pruning. Each trial's RNG
    is derived from (seed, trial_id), so resuming from the JSONL log yields
    the same sequence as an uninterrupted run.
    """
    trials = load_trials(log_path) if (resume and log_path) else []
    if len(trials) > n_trials:
        raise ValueError("trials log already exceeds n_trials")
    log_fh = open(log_path, "a") if log_path else None
    try:
        if log_fh and not resume and log_fh.tell() > 0:
            raise ValueError(f"trials log {log_path} exists; pass resume to continue")
        for trial_id in range(len(trials), n_trials):
            rng = np.random.default_rng(np.random.SeedSequence([seed, trial_id]))
            if trial_id < n_init:
                cfg = sample_random(space, rng)
            else:
                cfg = tpe_suggest(trials, space, rng, n_init=n_init)
            try:
                value, status, epochs_run = objective(cfg, trial_id, seed)
                record = TrialRecord(trial_id, cfg, float(value), status, epochs_run)
            except Exception:
                record = TrialRecord(trial_id, cfg, None, "failed", 0)
            trials.append(record)
            if log_fh:
                log_fh.write(record.to_json() + "\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()
    scored = [t for t in trials if t.objective is not None]
    best = max(scored, key=lambda t: t.objective).config if scored else None
    return trials, best
