"""Bandit policies: FTPL with geometric resampling, an exact-weight ablation,
Tsallis-INF and a uniform control.

The per-round primitives are compiled in ``_bandit``; this module holds the
configuration objects and a step-by-step Python interface over them. The
harness runs whole trials through the compiled loop, which consumes the policy
generator in the same order as the functions here.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _bandit as B
from .distributions import DistributionSpec, as_spec, tail_quantile_a_k
from .oracle import phi
from .quadrature import QuadratureConfig


class PolicyKind(str, enum.Enum):
    FTPL = "ftpl"
    FTPL_EXACT = "ftpl_exact"
    TSALLIS_INF = "tsallis_inf"
    UNIFORM = "uniform"


class RateMode(str, enum.Enum):
    ADVERSARIAL = "adversarial"
    STOCHASTIC = "stochastic"


_KIND_CODES = {PolicyKind.FTPL: B.FTPL, PolicyKind.FTPL_EXACT: B.EXACT,
               PolicyKind.TSALLIS_INF: B.TSALLIS, PolicyKind.UNIFORM: B.UNIFORM}
_RATE_CODES = {RateMode.ADVERSARIAL: B.ADVERSARIAL_RATE, RateMode.STOCHASTIC: B.STOCHASTIC_RATE}

MAX_EXACT_ARMS = 8


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.FTPL
    spec: DistributionSpec | None = None
    c: float = 1.0
    rate_mode: RateMode = RateMode.ADVERSARIAL
    denormalize: bool = False
    gr_repeats: int = 1
    resample_cap: int = 10**6
    label: str = ""

    def __post_init__(self):
        kind = PolicyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "rate_mode", RateMode(self.rate_mode))
        if self.spec is not None:
            object.__setattr__(self, "spec", as_spec(self.spec))
        if kind in (PolicyKind.FTPL, PolicyKind.FTPL_EXACT):
            if self.spec is None:
                raise ValueError(f"{kind.value} needs a perturbation spec")
            if self.spec.tail_index <= 1:
                raise ValueError("FTPL needs a perturbation with tail index > 1")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("c must be positive")
        if int(self.gr_repeats) != self.gr_repeats or self.gr_repeats < 1:
            raise ValueError("gr_repeats must be an integer >= 1")
        if int(self.resample_cap) != self.resample_cap or self.resample_cap < 1000:
            raise ValueError("resample_cap must be an integer >= 1000")
        object.__setattr__(self, "gr_repeats", int(self.gr_repeats))
        object.__setattr__(self, "resample_cap", int(self.resample_cap))
        if not self.label:
            object.__setattr__(self, "label", self.default_label())

    def default_label(self) -> str:
        if self.kind in (PolicyKind.FTPL, PolicyKind.FTPL_EXACT):
            parts = [self.kind.value, self.spec.label, f"c={self.c:g}", self.rate_mode.value]
            if self.denormalize:
                parts.append("denorm")
            if self.kind is PolicyKind.FTPL and self.gr_repeats > 1:
                parts.append(f"gr{self.gr_repeats}")
            return ":".join(parts)
        return self.kind.value

    @property
    def alpha(self) -> float:
        return self.spec.tail_index if self.spec is not None else 2.0

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "label": self.label, "c": self.c, "rate_mode": self.rate_mode.value,
               "denormalize": self.denormalize, "gr_repeats": self.gr_repeats, "resample_cap": self.resample_cap}
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "PolicyConfig":
        known = {"kind", "spec", "c", "rate_mode", "denormalize", "gr_repeats", "resample_cap", "label"}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown policy fields: {sorted(extra)}")
        args = dict(obj)
        if "spec" in args and args["spec"] is not None:
            args["spec"] = as_spec(args["spec"])
        return cls(**args)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PolicyConfig":
        return cls.from_dict(json.loads(text))


def learning_rate(t: int, c: float, K: int, alpha: float, mode=RateMode.ADVERSARIAL) -> float:
    """eta_t = c K^(1/alpha - 1/2) / sqrt(t) (adversarial) or c / sqrt(t) (stochastic)."""
    if t < 1 or c <= 0 or K < 1 or alpha <= 1:
        raise ValueError("need t >= 1, c > 0, K >= 1 and alpha > 1")
    return B.learning_rate(float(t), float(c), float(K), float(alpha), _RATE_CODES[RateMode(mode)])


def perturbation_scale(config: PolicyConfig, K: int) -> float:
    """Multiplier applied to every perturbation: 1 / a_K when denormalised, else 1.

    Dividing by a_K puts the maximum of K draws on the common Frechet scale for
    every law of the same index, so denormalised runs with scale c match plain
    runs with scale c * a_K.
    """
    if config.denormalize and config.spec is not None:
        return 1.0 / float(tail_quantile_a_k(config.spec, K))
    return 1.0


@dataclass
class RoundOutcome:
    arm: int
    resample_count: float
    loss_observed: float
    capped: bool = False


@dataclass
class PolicyState:
    config: PolicyConfig
    K: int
    gen: np.random.Generator
    cum_loss_est: np.ndarray = None
    round: int = 1
    scale: float = None
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least two arms")
        if self.cum_loss_est is None:
            self.cum_loss_est = np.zeros(self.K)
        else:
            self.cum_loss_est = np.ascontiguousarray(self.cum_loss_est, dtype=float)
        if self.scale is None:
            self.scale = perturbation_scale(self.config, self.K)

    @property
    def eta(self) -> float:
        return learning_rate(self.round, self.config.c, self.K, self.config.alpha, self.config.rate_mode)

    @property
    def inv_rate(self) -> float:
        """Perturbation multiplier scale / eta_t."""
        return self.scale / self.eta


def new_state(config: PolicyConfig, K: int, gen: np.random.Generator) -> PolicyState:
    return PolicyState(config, K, gen)


def _check_loss(loss: float) -> float:
    loss = float(loss)
    if not 0.0 <= loss <= 1.0:
        raise ValueError(f"loss {loss} outside [0, 1]")
    return loss


# ---------------------------------------------------------------------------
# FTPL with geometric resampling


def ftpl_select(state: PolicyState) -> int:
    return int(B.perturbed_leader(state.config.spec.packed, state.cum_loss_est, state.inv_rate, state.gen))


def geometric_resample(state: PolicyState, arm: int, loss: float) -> RoundOutcome:
    """Mean of ``gr_repeats`` redraw counts until ``arm`` leads again."""
    loss = _check_loss(loss)
    cfg = state.config
    m, capped = B.resample_mean(cfg.spec.packed, state.cum_loss_est, state.inv_rate, int(arm),
                                cfg.gr_repeats, cfg.resample_cap, state.gen)
    return RoundOutcome(int(arm), float(m), loss, bool(capped))


def ftpl_update(state: PolicyState, outcome: RoundOutcome) -> PolicyState:
    state.cum_loss_est[outcome.arm] += outcome.loss_observed * outcome.resample_count
    state.round += 1
    return state


def ftpl_step(state: PolicyState, loss_fn: Callable[[int], float]) -> RoundOutcome:
    arm = ftpl_select(state)
    outcome = geometric_resample(state, arm, loss_fn(arm))
    ftpl_update(state, outcome)
    return outcome


# ---------------------------------------------------------------------------
# exact-weight ablation


def exact_weights(state: PolicyState, quad: QuadratureConfig = QuadratureConfig(rel_tol=1e-9)) -> np.ndarray:
    """Selection probabilities of the current perturbed leader, from the quadrature oracle."""
    gaps = state.cum_loss_est - state.cum_loss_est.min()
    w = phi(state.config.spec, gaps / state.inv_rate, quad).values
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def exact_weight_select_update(state: PolicyState, loss_fn: Callable[[int], float]) -> RoundOutcome:
    """Sample from the exact selection law and update with loss / w (no resampling noise)."""
    if state.K > MAX_EXACT_ARMS:
        raise ValueError(f"exact-weight FTPL supports at most {MAX_EXACT_ARMS} arms")
    w = exact_weights(state)
    state.weights = w
    arm = int(B.sample_categorical(w, state.gen))
    loss = _check_loss(loss_fn(arm))
    inv_w = 1.0 / w[arm]
    state.cum_loss_est[arm] += loss * inv_w
    state.round += 1
    return RoundOutcome(arm, float(inv_w), loss, False)


# ---------------------------------------------------------------------------
# Tsallis-INF


class NormalisationError(RuntimeError):
    pass


def tsallis_weights(cum_loss_est, eta: float) -> tuple[np.ndarray, float]:
    """Weights 4 / (eta (L_i - x))^2 with x chosen so they sum to one."""
    L = np.ascontiguousarray(cum_loss_est, dtype=float)
    w = np.empty_like(L)
    x, status = B.tsallis_weights(L, float(eta), w)
    if status == 2:
        raise NormalisationError("Newton and bisection both failed to normalise the weights")
    return w, float(x)


def tsallis_inf_step(state: PolicyState, loss_fn: Callable[[int], float]) -> RoundOutcome:
    eta = 2.0 / math.sqrt(state.round)
    w, _ = tsallis_weights(state.cum_loss_est, eta)
    state.weights = w
    arm = int(B.sample_categorical(w, state.gen))
    loss = _check_loss(loss_fn(arm))
    state.cum_loss_est[arm] += loss / w[arm]
    state.round += 1
    return RoundOutcome(arm, float(1.0 / w[arm]), loss, False)


# ---------------------------------------------------------------------------
# uniform control


def uniform_step(state: PolicyState, loss_fn: Callable[[int], float]) -> RoundOutcome:
    arm = min(int(state.gen.random() * state.K), state.K - 1)
    loss = _check_loss(loss_fn(arm))
    state.round += 1
    return RoundOutcome(arm, 1.0, loss, False)


_STEPS = {
    PolicyKind.FTPL: ftpl_step,
    PolicyKind.FTPL_EXACT: exact_weight_select_update,
    PolicyKind.TSALLIS_INF: tsallis_inf_step,
    PolicyKind.UNIFORM: uniform_step,
}


def step(state: PolicyState, loss_fn: Callable[[int], float]) -> RoundOutcome:
    """One round of whichever policy ``state`` is configured for."""
    return _STEPS[state.config.kind](state, loss_fn)


def kind_code(config: PolicyConfig) -> int:
    return _KIND_CODES[config.kind]


def rate_code(config: PolicyConfig) -> int:
    return _RATE_CODES[config.rate_mode]
