"""Frechet-type perturbation laws and their tail analytics."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _kernels as K


class DomainError(ValueError):
    """Argument outside the domain of a distribution operation."""


class NotAvailableError(LookupError):
    """No closed form exists for the requested family."""


class Family(str, enum.Enum):
    FRECHET = "frechet"
    PARETO = "pareto"
    GENERALIZED_PARETO = "generalized_pareto"
    STUDENT_T = "student_t"
    SNEDECOR_F = "snedecor_f"


class Wrapper(str, enum.Enum):
    NONE = "none"
    TRUNC_SHIFT = "trunc_shift"


_PARAM_NAMES = {
    Family.FRECHET: ("alpha",),
    Family.PARETO: ("alpha",),
    Family.GENERALIZED_PARETO: ("alpha", "beta"),
    Family.STUDENT_T: ("n",),
    Family.SNEDECOR_F: ("m", "n"),
}

_CODES = {
    Family.FRECHET: K.FRECHET,
    Family.PARETO: K.PARETO,
    Family.GENERALIZED_PARETO: K.GEN_PARETO,
    Family.STUDENT_T: K.STUDENT_T,
    Family.SNEDECOR_F: K.SNEDECOR_F,
}

_ALIASES = {
    "gp": Family.GENERALIZED_PARETO,
    "generalizedpareto": Family.GENERALIZED_PARETO,
    "t": Family.STUDENT_T,
    "studentt": Family.STUDENT_T,
    "f": Family.SNEDECOR_F,
    "snedecorf": Family.SNEDECOR_F,
}

# tail evaluations refuse to go past this survival level
UNDERFLOW_SF = 1e-300


def _as_family(value) -> Family:
    if isinstance(value, Family):
        return value
    key = str(value).lower()
    if key in _ALIASES:
        return _ALIASES[key]
    return Family(key)


@dataclass(frozen=True)
class DistributionSpec:
    """A perturbation law from the Frechet domain, optionally truncated to [1, inf).

    ``params`` holds the family parameters by name: ``alpha`` (Frechet, Pareto),
    ``alpha``/``beta`` (generalized Pareto), ``n`` (Student-t), ``m``/``n``
    (Snedecor F). The ``trunc_shift`` wrapper replaces F by
    ``(F(x) - F(1)) / (1 - F(1))`` on ``x >= 1``.
    """

    family: Family
    params: dict = field(default_factory=dict)
    wrapper: Wrapper = Wrapper.NONE
    packed: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        fam = _as_family(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "wrapper", Wrapper(self.wrapper))
        names = _PARAM_NAMES[fam]
        if set(self.params) != set(names):
            raise ValueError(f"{fam.value} expects parameters {names}, got {sorted(self.params)}")
        values = tuple(float(self.params[n]) for n in names)
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise ValueError(f"parameters must be finite and positive: {self.params}")
        object.__setattr__(self, "params", dict(zip(names, values)))

        d = np.zeros(6)
        d[0] = _CODES[fam]
        d[1] = values[0]
        d[2] = values[1] if len(values) > 1 else 0.0
        if fam is Family.STUDENT_T:
            n = values[0]
            d[5] = -0.5 * math.log(n) - K.lbeta(0.5 * n, 0.5)
        elif fam is Family.SNEDECOR_F:
            m, n = values
            d[5] = 0.5 * m * math.log(m / n) - K.lbeta(0.5 * m, 0.5 * n)
        if self.wrapper is Wrapper.TRUNC_SHIFT:
            d[3] = 1.0
            d[4] = K.base_sf(d, 1.0)
        d.setflags(write=False)
        object.__setattr__(self, "packed", d)

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items())), self.wrapper))

    # -- construction helpers -------------------------------------------------

    @classmethod
    def frechet(cls, alpha: float, wrapper: str = "none") -> "DistributionSpec":
        return cls(Family.FRECHET, {"alpha": alpha}, Wrapper(wrapper))

    @classmethod
    def pareto(cls, alpha: float, wrapper: str = "none") -> "DistributionSpec":
        return cls(Family.PARETO, {"alpha": alpha}, Wrapper(wrapper))

    @classmethod
    def generalized_pareto(cls, alpha: float, beta: float, wrapper: str = "none") -> "DistributionSpec":
        return cls(Family.GENERALIZED_PARETO, {"alpha": alpha, "beta": beta}, Wrapper(wrapper))

    @classmethod
    def student_t(cls, n: float, wrapper: str = "none") -> "DistributionSpec":
        return cls(Family.STUDENT_T, {"n": n}, Wrapper(wrapper))

    @classmethod
    def snedecor_f(cls, m: float, n: float, wrapper: str = "none") -> "DistributionSpec":
        return cls(Family.SNEDECOR_F, {"m": m, "n": n}, Wrapper(wrapper))

    def truncated(self) -> "DistributionSpec":
        return DistributionSpec(self.family, dict(self.params), Wrapper.TRUNC_SHIFT)

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family.value, "params": dict(self.params), "wrapper": self.wrapper.value}

    @classmethod
    def from_dict(cls, obj: dict) -> "DistributionSpec":
        return cls(obj["family"], dict(obj.get("params", {})), Wrapper(obj.get("wrapper", "none")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DistributionSpec":
        return cls.from_dict(json.loads(text))

    @property
    def label(self) -> str:
        args = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        tag = "+trunc" if self.wrapper is Wrapper.TRUNC_SHIFT else ""
        return f"{self.family.value}({args}){tag}"

    # -- basic quantities -----------------------------------------------------

    @property
    def tail_index(self) -> float:
        if self.family is Family.STUDENT_T:
            return self.params["n"]
        if self.family is Family.SNEDECOR_F:
            return self.params["n"] / 2.0
        return self.params["alpha"]

    @property
    def nu(self) -> float:
        """Left endpoint of the support."""
        return float(K.nu(self.packed))

    def cdf(self, x):
        return _apply(K.cdf_arr, self.packed, x)

    def sf(self, x):
        """Survival function 1 - F(x), computed without cancellation."""
        return _apply(K.sf_arr, self.packed, x)

    def logpdf(self, x):
        return _apply(K.logpdf_arr, self.packed, x)

    def pdf(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < self.nu):
            raise DomainError(f"pdf evaluated below the left endpoint {self.nu}")
        return _finish(np.exp(K.logpdf_arr(self.packed, arr.ravel())).reshape(arr.shape), x)

    def logcdf(self, x):
        return _apply(K.logcdf_arr, self.packed, x)

    def dlogpdf(self, x):
        """Derivative of log f, i.e. f'(x)/f(x)."""
        return _apply(K.dlogpdf_arr, self.packed, x)

    def quantile(self, p):
        """Left-continuous inverse of the cdf on [0, 1); ``quantile(0)`` is the left endpoint."""
        arr = np.asarray(p, dtype=float)
        if np.any((arr < 0) | (arr >= 1)) or np.any(np.isnan(arr)):
            raise DomainError("quantile probability must lie in [0, 1)")
        return _finish(K.ppf_arr(self.packed, arr.ravel()).reshape(arr.shape), p)

    def isf(self, q):
        """Inverse survival function, x with 1 - F(x) = q for q in (0, 1]."""
        arr = np.asarray(q, dtype=float)
        if np.any((arr <= 0) | (arr > 1)) or np.any(np.isnan(arr)):
            raise DomainError("survival level must lie in (0, 1]")
        return _finish(K.isf_arr(self.packed, arr.ravel()).reshape(arr.shape), q)

    def sample(self, gen: np.random.Generator, count: int) -> np.ndarray:
        """``count`` i.i.d. draws by inverse-cdf transform of ``gen`` uniforms."""
        if count < 0:
            raise ValueError("count must be nonnegative")
        return K.draw_arr(self.packed, gen, int(count))

    def mean(self) -> float:
        """Mean by quadrature of the quantile function (finite only for tail_index > 1)."""
        from .quadrature import integrate

        if self.tail_index <= 1:
            return math.inf
        # E X = int_0^1 isf(s) ds; s = u^m / 2 near each end removes the power singularities
        m = 2.0 * self.tail_index / (self.tail_index - 1.0)
        d = self.packed

        def upper(u):
            return K.isf_arr(d, np.ascontiguousarray(0.5 * u**m)) * 0.5 * m * u ** (m - 1)

        def lower(u):
            return K.ppf_arr(d, np.ascontiguousarray(0.5 * u**m)) * 0.5 * m * u ** (m - 1)

        a = integrate(upper, 0.0, 1.0, rel_tol=1e-11, abs_tol=1e-13).value
        b = integrate(lower, 0.0, 1.0, rel_tol=1e-11, abs_tol=1e-13).value
        return a + b


def _apply(fn, packed, x):
    arr = np.asarray(x, dtype=float)
    out = fn(packed, np.ascontiguousarray(arr.ravel())).reshape(arr.shape)
    return _finish(out, x)


def _finish(out: np.ndarray, original):
    if np.ndim(original) == 0:
        return float(out)
    return out


def as_spec(obj) -> DistributionSpec:
    if isinstance(obj, DistributionSpec):
        return obj
    if isinstance(obj, str):
        return DistributionSpec.from_json(obj)
    return DistributionSpec.from_dict(obj)


# ---------------------------------------------------------------------------
# tail analytics


def tail_quantile_a_k(spec: DistributionSpec, k) -> float | np.ndarray:
    """a_k = inf{x : F(x) >= 1 - 1/k}; a_1 is the left endpoint."""
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 1):
        raise DomainError("k must be >= 1")
    out = K.isf_arr(spec.packed, np.ascontiguousarray(1.0 / karr.ravel())).reshape(karr.shape)
    return _finish(out, k)


def slowly_varying_S_F(spec: DistributionSpec, x):
    """x^alpha (1 - F(x)), the slowly varying part of the tail."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("S_F is defined for x > 0 only")
    a = spec.tail_index
    out = np.exp(a * np.log(arr)) * K.sf_arr(spec.packed, np.ascontiguousarray(arr.ravel())).reshape(arr.shape)
    return _finish(out, x)


def von_mises_ratio(spec: DistributionSpec, x):
    """x f(x) / (1 - F(x)); tends to the tail index for Frechet-domain laws."""
    arr = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(arr.ravel())
    if np.any(flat <= spec.nu):
        raise DomainError("von Mises ratio needs x above the left endpoint")
    s = K.sf_arr(spec.packed, flat)
    if np.any(s < UNDERFLOW_SF):
        bad = flat[s < UNDERFLOW_SF][0]
        raise DomainError(f"1 - F underflows at x={bad:g}")
    out = flat * np.exp(K.logpdf_arr(spec.packed, flat) - np.log(s))
    return _finish(out.reshape(arr.shape), x)


def hazard(spec: DistributionSpec, x):
    flat = np.ascontiguousarray(np.asarray(x, dtype=float).ravel())
    s = K.sf_arr(spec.packed, flat)
    return np.exp(K.logpdf_arr(spec.packed, flat) - np.log(s))


def block_max_mean_closed(spec: DistributionSpec, k: int) -> float:
    """Expected maximum of k i.i.d. draws for the Frechet and Pareto families."""
    a = spec.tail_index
    if a <= 1:
        raise DomainError("block-maximum mean is infinite for tail index <= 1")
    if k < 1:
        raise DomainError("k must be >= 1")
    if spec.family is Family.FRECHET and spec.wrapper is Wrapper.NONE:
        return k ** (1.0 / a) * math.gamma(1.0 - 1.0 / a)
    if spec.family is Family.PARETO:
        # Pareto is already supported on [1, inf): truncation leaves it unchanged
        return k * math.exp(K.lbeta(1.0 - 1.0 / a, float(k)))
    raise NotAvailableError(f"no closed form for {spec.label}; use block_max_mean_mc")


def block_max_mean_mc(spec: DistributionSpec, k: int, n_reps: int, gen: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo mean of max(X_1..X_k) and its standard error.

    Each replicate is one draw from F^k, obtained by inverting F at U^(1/k);
    this has exactly the law of the maximum of k i.i.d. draws.
    """
    if n_reps < 100:
        raise ValueError("n_reps must be at least 100")
    x = K.block_max_draws(spec.packed, gen, float(k), int(n_reps))
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_reps))


def fmda_convergence_gap(spec: DistributionSpec, k: int, grid) -> float:
    """max over grid of |F(a_k x)^k - exp(-x^-alpha)|."""
    xs = np.asarray(grid, dtype=float)
    if np.any(xs <= 0):
        raise DomainError("grid points must be positive")
    a = spec.tail_index
    ak = tail_quantile_a_k(spec, k)
    y = np.ascontiguousarray(ak * xs)
    s = K.sf_arr(spec.packed, y)
    with np.errstate(divide="ignore"):
        fk = np.exp(k * np.log1p(-s))
    return float(np.max(np.abs(fk - np.exp(-xs ** (-a)))))


def limit_at_infinity(fn, x_far: float = 1e8, x_check: float = 1e7) -> tuple[float, float]:
    """Value of ``fn`` at the far grid point and its discrepancy against a decade earlier."""
    far = float(fn(x_far))
    near = float(fn(x_check))
    return far, abs(far - near)
