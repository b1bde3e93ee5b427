"""Loss generators (stochastic, oblivious adversarial, stochastically constrained) and regret accounting."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _bandit as B


class EnvKind(str, enum.Enum):
    STOCHASTIC = "stochastic"
    ADVERSARIAL = "adversarial"
    STOCH_CONSTRAINED = "stoch_constrained"


_ENV_CODES = {EnvKind.STOCHASTIC: B.ENV_STOCHASTIC, EnvKind.ADVERSARIAL: B.ENV_ADVERSARIAL,
              EnvKind.STOCH_CONSTRAINED: B.ENV_CONSTRAINED}


class ExhaustedError(RuntimeError):
    """The adversarial loss matrix has fewer rows than requested rounds."""


@dataclass(frozen=True)
class Environment:
    kind: EnvKind
    K: int
    means: tuple = ()
    delta: float = 0.0
    phase_growth: float = 1.6
    best: int = 0
    file: str | None = None
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        kind = EnvKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is EnvKind.STOCHASTIC:
            means = tuple(float(m) for m in self.means)
            if len(means) < 2 or any(not 0.0 <= m <= 1.0 for m in means):
                raise ValueError("stochastic means must be at least two values in [0, 1]")
            lo = min(means)
            if sum(m == lo for m in means) != 1:
                raise ValueError("stochastic means need a unique minimiser")
            object.__setattr__(self, "means", means)
            object.__setattr__(self, "K", len(means))
            object.__setattr__(self, "best", means.index(lo))
        elif kind is EnvKind.STOCH_CONSTRAINED:
            if self.K < 2:
                raise ValueError("K must be at least 2")
            if not 0.0 < self.delta < 1.0:
                raise ValueError("delta must lie in (0, 1)")
            if not self.phase_growth > 1.0:
                raise ValueError("phase_growth must exceed 1")
            if not 0 <= self.best < self.K:
                raise ValueError("best arm out of range")
        else:
            m = self.matrix
            if m is None:
                if self.file is None:
                    raise ValueError("adversarial environment needs a loss matrix or file")
                m = load_loss_matrix(self.file)
            m = np.ascontiguousarray(np.atleast_2d(np.asarray(m, dtype=float)))
            if m.shape[1] < 2:
                raise ValueError("loss matrix needs at least two columns")
            if np.any(~np.isfinite(m)) or np.any((m < 0) | (m > 1)):
                raise ValueError("adversarial losses must lie in [0, 1]")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
            object.__setattr__(self, "K", m.shape[1])

    # -- construction ----------------------------------------------------------

    @classmethod
    def stochastic(cls, means) -> "Environment":
        return cls(EnvKind.STOCHASTIC, len(means), means=tuple(means))

    @classmethod
    def constrained(cls, K: int, delta: float, phase_growth: float = 1.6, best: int = 0) -> "Environment":
        return cls(EnvKind.STOCH_CONSTRAINED, K, delta=delta, phase_growth=phase_growth, best=best)

    @classmethod
    def adversarial(cls, matrix=None, file: str | None = None) -> "Environment":
        return cls(EnvKind.ADVERSARIAL, 0, file=file, matrix=matrix)

    def to_dict(self) -> dict:
        if self.kind is EnvKind.STOCHASTIC:
            return {"kind": self.kind.value, "means": list(self.means)}
        if self.kind is EnvKind.STOCH_CONSTRAINED:
            return {"kind": self.kind.value, "K": self.K, "delta": self.delta,
                    "phase_growth": self.phase_growth, "best": self.best}
        if self.file is not None:
            return {"kind": self.kind.value, "file": self.file}
        return {"kind": self.kind.value, "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, obj: dict, base_dir: str | Path | None = None) -> "Environment":
        kind = EnvKind(obj["kind"])
        if kind is EnvKind.STOCHASTIC:
            return cls.stochastic(obj["means"])
        if kind is EnvKind.STOCH_CONSTRAINED:
            return cls.constrained(int(obj["K"]), float(obj["delta"]), float(obj.get("phase_growth", 1.6)),
                                   int(obj.get("best", 0)))
        if "matrix" in obj:
            return cls.adversarial(matrix=obj["matrix"])
        path = Path(obj["file"])
        matrix = load_loss_matrix(path if path.is_absolute() or base_dir is None else Path(base_dir) / path)
        return cls(EnvKind.ADVERSARIAL, 0, file=str(obj["file"]), matrix=matrix)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    # -- per-horizon data -------------------------------------------------------

    @property
    def code(self) -> int:
        return _ENV_CODES[self.kind]

    def gaps(self) -> np.ndarray:
        """Per-arm expected suboptimality (zero for the best arm)."""
        if self.kind is EnvKind.STOCHASTIC:
            m = np.asarray(self.means)
            return m - m.min()
        if self.kind is EnvKind.STOCH_CONSTRAINED:
            g = np.full(self.K, self.delta)
            g[self.best] = 0.0
            return g
        raise ValueError("gaps are not defined for an oblivious adversary")

    def best_arm(self, horizon: int) -> int:
        """Optimal arm; for adversarial sequences the best fixed arm over ``horizon`` rounds."""
        if self.kind is EnvKind.ADVERSARIAL:
            self._check_rows(horizon)
            return int(np.argmin(self.matrix[:horizon].sum(axis=0))) if horizon > 0 else 0
        return self.best

    def _check_rows(self, horizon: int):
        if horizon > self.matrix.shape[0]:
            raise ExhaustedError(f"loss matrix has {self.matrix.shape[0]} rows, {horizon} rounds requested")

    def parity(self, horizon: int) -> np.ndarray:
        """Regime index (0 or 1) of each round for the constrained adversary.

        Phase j lasts max(1, floor(phase_growth^j)) rounds; regimes alternate.
        """
        out = np.zeros(max(horizon, 1), dtype=np.int64)
        if self.kind is not EnvKind.STOCH_CONSTRAINED:
            return out
        t, j = 0, 0
        while t < horizon:
            length = max(1, math.floor(self.phase_growth ** j))
            out[t:t + length] = j % 2
            t += length
            j += 1
        return out

    def kernel_args(self, horizon: int) -> tuple:
        means = np.ascontiguousarray(self.means if self.kind is EnvKind.STOCHASTIC else np.zeros(self.K), dtype=float)
        if self.kind is EnvKind.ADVERSARIAL:
            self._check_rows(horizon)
            matrix = self.matrix
        else:
            matrix = np.zeros((1, self.K))
        return (self.code, means, matrix, float(self.delta), self.best_arm(horizon), self.parity(horizon))


def load_loss_matrix(path) -> np.ndarray:
    """Row-major CSV, one round per row, one arm per column."""
    m = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    return m


def mean_vector(env: Environment, t: int, parity: np.ndarray | None = None) -> np.ndarray:
    """Expected loss vector of round ``t`` (the realised row for adversarial sequences)."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    if env.kind is EnvKind.STOCHASTIC:
        return np.asarray(env.means, dtype=float)
    if env.kind is EnvKind.ADVERSARIAL:
        env._check_rows(t)
        return env.matrix[t - 1].copy()
    par = env.parity(t) if parity is None else parity
    if par[t - 1] == 0:
        m = np.full(env.K, 0.5 + 0.5 * env.delta)
        m[env.best] = 0.5 - 0.5 * env.delta
    else:
        m = np.full(env.K, env.delta)
        m[env.best] = 0.0
    return m


def loss_vector(env: Environment, t: int, gen: np.random.Generator, parity: np.ndarray | None = None) -> np.ndarray:
    """Realised loss vector of round ``t``; Bernoulli draws consume K uniforms from ``gen``."""
    if t < 1:
        raise ValueError("rounds are numbered from 1")
    if env.kind is EnvKind.ADVERSARIAL:
        env._check_rows(t)
    code, means, matrix, delta, best, _ = env.kernel_args(0)
    par = env.parity(t) if parity is None else parity
    losses = np.empty(env.K)
    mt = np.empty(env.K)
    B.env_losses(code, t, means, matrix, delta, best if env.kind is not EnvKind.ADVERSARIAL else 0,
                 par, gen, losses, mt)
    return losses


@dataclass
class Trace:
    arms: np.ndarray
    observed: np.ndarray
    resample_counts: np.ndarray
    capped: np.ndarray
    regret_increments: np.ndarray
    best_losses: np.ndarray
    best_arm: int = 0

    def __len__(self) -> int:
        return int(self.arms.size)

    @property
    def cumulative_loss(self) -> np.ndarray:
        return np.cumsum(self.observed)

    @property
    def cumulative_optimal_loss(self) -> np.ndarray:
        return np.cumsum(self.best_losses)

    @property
    def capped_rounds(self) -> int:
        return int(np.count_nonzero(self.capped))

    @classmethod
    def empty(cls) -> "Trace":
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int64), z, z.copy(), np.zeros(0, dtype=bool), z.copy(), z.copy())


def pseudo_regret(trace: Trace, env: Environment) -> np.ndarray:
    """Cumulative regret: sum of gaps of the played arms, or realised loss minus the
    best fixed arm's realised loss for adversarial sequences."""
    if len(trace) == 0:
        return np.zeros(0)
    if env.kind is EnvKind.ADVERSARIAL:
        T = len(trace)
        best = env.best_arm(T)
        return np.cumsum(trace.observed - env.matrix[:T, best])
    return np.cumsum(env.gaps()[trace.arms])
