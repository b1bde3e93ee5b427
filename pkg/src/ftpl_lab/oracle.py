"""Arm-selection probabilities by quadrature, the I/J analysis integrals and checks on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _bandit as B
from . import _kernels as K
from .distributions import DistributionSpec, DomainError, Family, Wrapper, slowly_varying_S_F
from .quadrature import QuadratureConfig, integrate

DEFAULT_QUAD = QuadratureConfig()
# w-space integrals are cut where exp(-w) underflows
_W_CUTOFF = 800.0


@dataclass(frozen=True)
class PhiResult:
    values: np.ndarray
    tolerance_achieved: float


def as_gaps(gaps) -> np.ndarray:
    g = np.asarray(gaps, dtype=float)
    if g.ndim != 1 or g.size < 1:
        raise ValueError("gaps must be a one-dimensional sequence")
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ValueError("gaps must be finite and nonnegative")
    return g


def underline(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x - x.min()


def stable_rank(gaps, i: int) -> int:
    """1-based rank of gaps[i]; ties ranked by lowest index first."""
    g = np.asarray(gaps)
    return int(np.sum(g < g[i]) + np.sum(g[:i] == g[i]) + 1)


# ---------------------------------------------------------------------------
# selection probabilities


def phi_component(spec: DistributionSpec, gaps, i: int, config: QuadratureConfig = DEFAULT_QUAD,
                  shift_to_zero: bool = True):
    """Probability that arm i leads, as a QuadResult.

    Integrates prod_{j != i} F(y - lam_i + lam_j) over survival levels s = 1 - F(y)
    with y = z + lam_i, so the integration range is [0, 1 - F(nu + lam_i)].
    With ``shift_to_zero=False`` the gaps are used as given, which keeps the
    domain z >= nu fixed; this equals the probability only when min(gaps) = 0.
    """
    lam = as_gaps(gaps)
    if shift_to_zero:
        lam = underline(lam)
    d = spec.packed
    upper = K.sf(d, spec.nu + lam[i]) if math.isfinite(spec.nu) else 1.0
    shifts = np.ascontiguousarray(np.delete(lam, i) - lam[i])
    if shifts.size == 0:
        return integrate(lambda s: np.ones_like(s), 0.0, upper, rel_tol=config.rel_tol)
    return integrate(lambda s: K.phi_integrand(d, s, shifts), 0.0, upper,
                     rel_tol=config.rel_tol, max_panels=config.max_panels)


def phi(spec: DistributionSpec, gaps, config: QuadratureConfig = DEFAULT_QUAD) -> PhiResult:
    """Vector of arm-selection probabilities for perturbations drawn from ``spec``."""
    g = as_gaps(gaps)
    vals = np.empty(g.size)
    achieved = 0.0
    for i in range(g.size):
        res = phi_component(spec, g, i, config)
        vals[i] = res.value
        achieved = max(achieved, res.rel_error)
    return PhiResult(vals, achieved)


def argmin_frequencies(spec: DistributionSpec, gaps, n: int, gen: np.random.Generator) -> np.ndarray:
    """Monte-Carlo leader counts over ``n`` independent perturbation vectors."""
    g = np.ascontiguousarray(as_gaps(gaps))
    return B.argmin_counts(spec.packed, g, 1.0, int(n), gen)


# ---------------------------------------------------------------------------
# analysis integrals


def integral_I(gaps, alpha: float, n: float, i: int, config: QuadratureConfig = DEFAULT_QUAD) -> float:
    """int_0^inf (z + lam_i)^-n exp(-sum_j (z + lam_j)^-alpha) dz.

    Uses w = (z + min lam)^-alpha, which maps the polynomially decaying tail
    onto a neighbourhood of w = 0.
    """
    if alpha <= 0 or n <= 1:
        raise DomainError("need alpha > 0 and n > 1")
    lam = as_gaps(gaps)
    lmin = lam.min()
    c = lam - lmin
    wmax = lmin ** (-alpha) if lmin > 0 else _W_CUTOFF
    wmax = min(wmax, _W_CUTOFF)
    ci = c[i]

    def integrand(w):
        y = w ** (-1.0 / alpha)
        log_val = -math.log(alpha) - (1.0 / alpha + 1.0) * np.log(w) - n * np.log(y + ci)
        expo = np.zeros_like(w)
        for cj in c:
            expo += (y + cj) ** (-alpha)
        return np.exp(log_val - expo)

    bps = [b for b in (1e-8, 1e-5, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0) if b < wmax]
    return integrate(integrand, 0.0, wmax, rel_tol=config.rel_tol,
                     max_panels=config.max_panels, breakpoints=bps).value


def integral_J(spec: DistributionSpec, gaps, i: int, config: QuadratureConfig = DEFAULT_QUAD) -> float:
    """int_1^inf f(z + lam_i) / (z + lam_i) prod_{j != i} F(z + lam_j) dz for nu >= 1."""
    if spec.nu < 1:
        raise DomainError("J needs a left endpoint >= 1; wrap the spec with trunc_shift first")
    lam = as_gaps(gaps)
    d = spec.packed
    upper = K.sf(d, 1.0 + lam[i])
    shifts = np.ascontiguousarray(np.delete(lam, i) - lam[i])
    return integrate(lambda s: K.j_integrand(d, s, shifts), 0.0, upper,
                     rel_tol=config.rel_tol, max_panels=config.max_panels).value


def _uses_frechet_integrals(target) -> bool:
    if isinstance(target, DistributionSpec):
        return target.family is Family.FRECHET and target.wrapper is Wrapper.NONE
    return True


def _alpha_of(target) -> float:
    return target.tail_index if isinstance(target, DistributionSpec) else float(target)


def stability_ratio(target, gaps, i: int, config: QuadratureConfig = DEFAULT_QUAD) -> float:
    """I_{i,alpha+2}/I_{i,alpha+1} for a Frechet index, J_i/phi_i for a general spec.

    Both integrals of a ratio run over the same fixed domain in z with the gaps as given.
    """
    if _uses_frechet_integrals(target):
        a = _alpha_of(target)
        return integral_I(gaps, a, a + 2.0, i, config) / integral_I(gaps, a, a + 1.0, i, config)
    den = phi_component(target, gaps, i, config, shift_to_zero=False).value
    return integral_J(target, gaps, i, config) / den


def check_lemma4_monotonicity(target, gaps, j: int, step: float, i: int | None = None,
                              config: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Decrease of the stability ratio of arm i when lam_j grows by ``step`` (0 = no violation)."""
    lam = as_gaps(gaps)
    if i is None:
        i = 0 if j != 0 else 1
    if i == j:
        raise ValueError("the perturbed arm must differ from the tracked arm")
    if step <= 0:
        raise ValueError("step must be positive")
    bumped = lam.copy()
    bumped[j] += step
    before = stability_ratio(target, lam, i, config)
    after = stability_ratio(target, bumped, i, config)
    return max(0.0, before - after)


@dataclass(frozen=True)
class Lemma5Constants:
    m: float
    A_l: float
    A_u: float


def lemma5_constants(spec: DistributionSpec) -> Lemma5Constants:
    """Block constants implied by x f / (1 - F) <= alpha: m <= 2 Gamma(1 + 1/alpha), A_l = 1,
    A_u = lim S_F^(1/alpha)."""
    a = spec.tail_index
    s_inf = float(slowly_varying_S_F(spec, 1e8))
    return Lemma5Constants(2.0 * math.gamma(1.0 + 1.0 / a), 1.0, s_inf ** (1.0 / a))


def lemma5_bound(target, gaps, i: int, constants=None) -> float:
    lam = underline(as_gaps(gaps))
    a = _alpha_of(target)
    sigma = stable_rank(lam, i)
    if _uses_frechet_integrals(target):
        bound = math.gamma(1.0 + 1.0 / a) / sigma ** (1.0 / a)
        if lam[i] > 0:
            bound = min(bound, a / ((a + 1.0) * lam[i]))
        return bound
    if constants is None:
        constants = lemma5_constants(target)
    m, A_l, A_u = constants.m, constants.A_l, constants.A_u
    bound = (m / A_l) * sigma ** (-1.0 / a)
    if lam[i] > 0:
        bound = min(bound, a / (a + 1.0) * math.e * A_u / (A_l * lam[i]))
    return bound


def check_lemma5_bounds(target, gaps, i: int, constants=None, config: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Slack (bound - ratio) of the stability-ratio bound at the underlined gaps."""
    lam = underline(as_gaps(gaps))
    return lemma5_bound(target, lam, i, constants) - stability_ratio(target, lam, i, config)


# ---------------------------------------------------------------------------
# geometric resampling


@dataclass(frozen=True)
class ProbeResult:
    mean: float
    stderr: float
    capped: int
    variance: float


def resampling_unbiasedness_probe(spec: DistributionSpec, gaps, i: int, reps: int, gen: np.random.Generator,
                                  repeats: int = 1, cap: int = 10**6) -> ProbeResult:
    """Empirical law of the geometric-resampling count for arm i at fixed gaps.

    With ``repeats > 1`` each replicate is the mean of that many independent
    counts (the stable variant). Capped replicates are excluded and counted.
    """
    g = np.ascontiguousarray(as_gaps(gaps))
    if repeats == 1:
        counts, capped = B.resample_counts(spec.packed, g, 1.0, i, int(reps), int(cap), gen)
    else:
        counts = np.empty(reps)
        capped = np.zeros(reps, dtype=bool)
        for r in range(reps):
            counts[r], capped[r] = B.resample_mean(spec.packed, g, 1.0, i, int(repeats), int(cap), gen)
    kept = counts[~capped]
    if kept.size < 2:
        return ProbeResult(float("nan"), float("nan"), int(capped.sum()), float("nan"))
    var = float(kept.var(ddof=1))
    return ProbeResult(float(kept.mean()), math.sqrt(var / kept.size), int(capped.sum()), var)
