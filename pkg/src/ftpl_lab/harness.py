"""Experiment runner: seeded trials, aggregation into regret curves, overlays and output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
import multiprocessing as mp

import numpy as np

from . import _bandit as B
from .environments import Environment, EnvKind, Trace
from .policies import (PolicyConfig, PolicyKind, exact_weight_select_update, kind_code, new_state,
                       perturbation_scale, rate_code)

CSV_HEADER = ("policy", "t", "mean_regret", "std_regret", "overlay_name", "overlay_value")
_MASK64 = (1 << 64) - 1
_ENV_STREAM = 0x5EED_E4F


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class TrialError(RuntimeError):
    def __init__(self, policy: str, trial: int, cause: BaseException):
        super().__init__(f"trial {trial} of policy {policy!r} failed: {cause}")
        self.policy = policy
        self.trial = trial


# ---------------------------------------------------------------------------
# seeding


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(*parts: int) -> int:
    """Fold 64-bit integers through SplitMix64 into one seed."""
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def policy_generator(master_seed: int, trial: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix_seed(master_seed, trial, label_key(label))))


def env_generator(master_seed: int, trial: int) -> np.random.Generator:
    # shared by all policies of a trial so comparisons are paired
    return np.random.Generator(np.random.PCG64(mix_seed(master_seed, trial, _ENV_STREAM)))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    env: Environment
    policies: tuple
    horizon: int
    trials: int = 1
    master_seed: int = 0
    record_every: int = 0
    output_path: str = "results.csv"
    overlays: bool = True

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.record_every < 0:
            raise ConfigError("record_every must be >= 0")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ConfigError("policy labels must be unique")
        if not 0 <= self.master_seed <= _MASK64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "policies", tuple(self.policies))

    def to_dict(self) -> dict:
        return {"env": self.env.to_dict(), "policies": [p.to_dict() for p in self.policies],
                "horizon": self.horizon, "trials": self.trials, "master_seed": self.master_seed,
                "record_every": self.record_every, "output_path": self.output_path, "overlays": self.overlays}

    @classmethod
    def from_dict(cls, obj: dict, base_dir=None) -> "ExperimentConfig":
        try:
            known = {"env", "policies", "horizon", "trials", "master_seed", "record_every", "output_path", "overlays"}
            extra = set(obj) - known
            if extra:
                raise ConfigError(f"unknown experiment fields: {sorted(extra)}")
            env = Environment.from_dict(obj["env"], base_dir)
            pols = tuple(PolicyConfig.from_dict(p) for p in obj["policies"])
            return cls(env, pols, int(obj["horizon"]), int(obj.get("trials", 1)), int(obj.get("master_seed", 0)),
                       int(obj.get("record_every", 0)), str(obj.get("output_path", "results.csv")),
                       bool(obj.get("overlays", True)))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError, OSError) as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(obj, base_dir=path.parent)


def checkpoints(horizon: int, record_every: int = 0) -> np.ndarray:
    """Powers of two up to T, multiples of ``record_every`` and T itself."""
    if horizon <= 0:
        return np.zeros(0, dtype=np.int64)
    pts = {1 << j for j in range(horizon.bit_length()) if (1 << j) <= horizon}
    if record_every > 0:
        pts.update(range(record_every, horizon + 1, record_every))
    pts.add(horizon)
    return np.array(sorted(pts), dtype=np.int64)


# ---------------------------------------------------------------------------
# trials


def _run_exact(policy: PolicyConfig, env: Environment, horizon: int, pol_gen, env_gen) -> tuple:
    code, means, matrix, delta, best, parity = env.kernel_args(horizon)
    state = new_state(policy, env.K, pol_gen)
    arms = np.empty(horizon, dtype=np.int64)
    observed = np.empty(horizon)
    counts = np.empty(horizon)
    regret = np.empty(horizon)
    best_loss = np.empty(horizon)
    losses = np.empty(env.K)
    mt = np.empty(env.K)
    for t in range(1, horizon + 1):
        box = {}

        def loss_fn(arm):
            box["cmp"] = B.env_losses(code, t, means, matrix, delta, best, parity, env_gen, losses, mt)
            return losses[arm]

        out = exact_weight_select_update(state, loss_fn)
        arms[t - 1] = out.arm
        observed[t - 1] = out.loss_observed
        counts[t - 1] = out.resample_count
        best_loss[t - 1] = losses[best]
        if env.kind is EnvKind.ADVERSARIAL:
            regret[t - 1] = out.loss_observed - losses[best]
        else:
            regret[t - 1] = mt[out.arm] - box["cmp"]
    return arms, observed, counts, np.zeros(horizon, dtype=bool), regret, best_loss


def simulate(policy: PolicyConfig, env: Environment, horizon: int,
             pol_gen: np.random.Generator, env_gen: np.random.Generator) -> Trace:
    """Play ``horizon`` rounds of ``policy`` against ``env`` with the given generators."""
    if horizon == 0:
        return Trace.empty()
    if policy.kind is PolicyKind.FTPL_EXACT:
        out = _run_exact(policy, env, horizon, pol_gen, env_gen)
    else:
        code, means, matrix, delta, best, parity = env.kernel_args(horizon)
        spec_packed = policy.spec.packed if policy.spec is not None else np.zeros(6)
        out = B.run_trial_kernel(kind_code(policy), spec_packed, env.K, horizon, float(policy.c), float(policy.alpha),
                                 rate_code(policy), perturbation_scale(policy, env.K), policy.gr_repeats,
                                 policy.resample_cap, code, means, matrix, delta, best, parity, pol_gen, env_gen)
    arms, observed, counts, capped, regret, best_loss = out
    return Trace(arms, observed, counts, capped, regret, best_loss, env.best_arm(horizon))


def run_trial(config: ExperimentConfig, policy: PolicyConfig, trial_index: int) -> Trace:
    """Deterministic trace for (master_seed, trial_index, policy label)."""
    return simulate(policy, config.env, config.horizon,
                    policy_generator(config.master_seed, trial_index, policy.label),
                    env_generator(config.master_seed, trial_index))


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class RegretCurve:
    policy_label: str
    checkpoints: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    stderr: np.ndarray
    trials: int
    capped_rounds: int = 0
    overlays: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_label,
            "trials": self.trials,
            "capped_rounds": self.capped_rounds,
            "t": [int(t) for t in self.checkpoints],
            "mean_regret": [float(v) for v in self.mean],
            "std_regret": [float(v) for v in self.std],
            "stderr_regret": [float(v) for v in self.stderr],
            "overlays": {k: [float(v) for v in vals] for k, vals in sorted(self.overlays.items())},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RegretCurve":
        return cls(obj["policy"], np.asarray(obj["t"], dtype=np.int64), np.asarray(obj["mean_regret"], dtype=float),
                   np.asarray(obj["std_regret"], dtype=float), np.asarray(obj["stderr_regret"], dtype=float),
                   int(obj["trials"]), int(obj.get("capped_rounds", 0)),
                   {k: np.asarray(v, dtype=float) for k, v in obj.get("overlays", {}).items()})


def aggregate(label: str, cps: np.ndarray, rows: np.ndarray, capped: int = 0) -> RegretCurve:
    """Mean and across-trial spread of a (trials x checkpoints) regret array."""
    n = rows.shape[0]
    mean = rows.mean(axis=0) if rows.size else np.zeros(cps.size)
    std = rows.std(axis=0, ddof=1) if n > 1 else np.zeros(cps.size)
    return RegretCurve(label, cps, mean, std, std / math.sqrt(n), n, capped)


def _trial_task(args):
    config, p_index, trial = args
    policy = config.policies[p_index]
    try:
        trace = run_trial(config, policy, trial)
    except Exception as exc:  # reported with the trial index
        raise TrialError(policy.label, trial, exc) from exc
    cps = checkpoints(config.horizon, config.record_every)
    cum = np.cumsum(trace.regret_increments)
    return p_index, trial, cum[cps - 1] if cps.size else np.zeros(0), trace.capped_rounds


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("FTPL_LAB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    return threads


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> list[RegretCurve]:
    """Run every (policy, trial) pair and aggregate per policy.

    Results are sorted by (policy, trial) before aggregation, so the output does
    not depend on the number of workers or their completion order.
    """
    threads = resolve_threads(threads)
    tasks = [(config, p, r) for p in range(len(config.policies)) for r in range(config.trials)]
    if threads == 1:
        results = [_trial_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads, mp_context=mp.get_context("fork")) as pool:
            results = list(pool.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    results.sort(key=lambda r: (r[0], r[1]))
    cps = checkpoints(config.horizon, config.record_every)
    curves = []
    for p, policy in enumerate(config.policies):
        mine = [r for r in results if r[0] == p]
        rows = np.vstack([r[2] for r in mine]) if cps.size else np.zeros((len(mine), 0))
        curve = aggregate(policy.label, cps, rows, sum(r[3] for r in mine))
        if config.overlays and cps.size:
            overlay_bounds(curve, config.env, policy)
        curves.append(curve)
    return curves


# ---------------------------------------------------------------------------
# overlays and slopes


def theorem3_exponent(alpha: float) -> float | None:
    """Growth exponent of the stochastic bound for the adversarial schedule; None means log t."""
    if alpha == 2:
        return None
    if alpha > 2:
        return (alpha - 2) / (2 * (alpha - 1))
    return 1 - alpha / 2


def overlay_shapes(t: np.ndarray, K: int, gaps=None, alpha: float | None = None) -> dict:
    """Unscaled bound shapes at rounds ``t``."""
    t = np.asarray(t, dtype=float)
    shapes = {"sqrt_Kt": np.sqrt(K * t)}
    if gaps is not None:
        g = np.asarray(gaps, dtype=float)
        g = g[g > 0]
        if g.size:
            shapes["log_over_gap"] = np.log(t) * np.sum(1.0 / g)
            if alpha is not None:
                p = theorem3_exponent(alpha)
                if p is None:
                    shapes["power_law"] = np.log(t) * np.sum(1.0 / g)
                else:
                    shapes["power_law"] = t ** p * np.sum(g ** (-1.0 / (alpha - 1))) / K ** p
    return shapes


def fit_scale(t: np.ndarray, y: np.ndarray, shape: np.ndarray) -> float:
    """Least-squares multiplier of ``shape`` against ``y`` over the final third of the rounds."""
    sel = t >= (2.0 / 3.0) * t.max()
    den = float(np.dot(shape[sel], shape[sel]))
    return float(np.dot(shape[sel], y[sel]) / den) if den > 0 else 0.0


def overlay_bounds(curve: RegretCurve, env: Environment, policy: PolicyConfig | None = None) -> RegretCurve:
    """Attach scaled bound shapes to ``curve`` (in place) and return it."""
    gaps = None if env.kind is EnvKind.ADVERSARIAL else env.gaps()
    alpha = policy.alpha if policy is not None and policy.spec is not None else None
    t = curve.checkpoints.astype(float)
    for name, shape in overlay_shapes(t, env.K, gaps, alpha).items():
        curve.overlays[name] = fit_scale(t, curve.mean, shape) * shape
    return curve


def slope_fit(curve, window: float = 0.5, values=None) -> float:
    """OLS slope of ln(regret) against ln(t) over rounds t >= (1 - window) * t_max.

    Accepts a RegretCurve or an array of rounds together with ``values``.
    """
    if isinstance(curve, RegretCurve):
        t, y = curve.checkpoints.astype(float), curve.mean
    else:
        t, y = np.asarray(curve, dtype=float), np.asarray(values, dtype=float)
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    sel = t >= (1.0 - window) * t.max()
    if sel.sum() < 2:
        raise ValueError("fewer than two points in the slope window")
    if np.any(y[sel] <= 0):
        raise ValueError("regret must be positive on the slope window")
    return float(np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)[0])


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return repr(float(x))


def render_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in curves:
        for j, t in enumerate(c.checkpoints):
            w.writerow([c.policy_label, int(t), _fmt(c.mean[j]), _fmt(c.std[j]), "", ""])
        for name in sorted(c.overlays):
            vals = c.overlays[name]
            for j, t in enumerate(c.checkpoints):
                w.writerow([c.policy_label, int(t), _fmt(c.mean[j]), _fmt(c.std[j]), name, _fmt(vals[j])])
    return buf.getvalue()


def render_json(curves) -> str:
    return json.dumps({"curves": [c.to_dict() for c in curves]}, indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> list[RegretCurve]:
    return [RegretCurve.from_dict(c) for c in json.loads(text)["curves"]]


def emit(curves, path, format: str = "csv") -> Path:
    if format not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    text = render_csv(curves) if format == "csv" else render_json(curves)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
