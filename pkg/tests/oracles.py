"""Reference implementations used only by the tests (scipy and closed forms)."""

import math

import numpy as np
from scipy import integrate, special, stats

from ftpl_lab.distributions import DistributionSpec, Family, Wrapper


def scipy_law(spec: DistributionSpec):
    p = spec.params
    if spec.family is Family.FRECHET:
        return stats.invweibull(p["alpha"])
    if spec.family is Family.PARETO:
        return stats.pareto(p["alpha"])
    if spec.family is Family.GENERALIZED_PARETO:
        # sf = (1 + x / (alpha beta))^-alpha
        return stats.genpareto(c=1.0 / p["alpha"], scale=p["beta"])
    if spec.family is Family.STUDENT_T:
        return stats.t(p["n"])
    return stats.f(p["m"], p["n"])


def ref_cdf(spec, x):
    law = scipy_law(spec)
    x = np.asarray(x, dtype=float)
    if spec.wrapper is Wrapper.NONE:
        return law.cdf(x)
    s1 = law.sf(1.0)
    return np.where(x < 1, 0.0, (law.sf(1.0) - law.sf(np.maximum(x, 1.0))) / s1)


def ref_sf(spec, x):
    law = scipy_law(spec)
    x = np.asarray(x, dtype=float)
    if spec.wrapper is Wrapper.NONE:
        return law.sf(x)
    return np.where(x < 1, 1.0, law.sf(np.maximum(x, 1.0)) / law.sf(1.0))


def ref_pdf(spec, x):
    law = scipy_law(spec)
    if spec.wrapper is Wrapper.NONE:
        return law.pdf(x)
    return law.pdf(x) / law.sf(1.0)


def pareto_two_arm_phi():
    """Selection probabilities of Pareto(2) at gaps (0, 1), by partial fractions."""
    return np.array([5 - 6 * math.log(2), 6 * math.log(2) - 4])


def phi_by_scipy(spec: DistributionSpec, gaps):
    """phi_i = int f(y) prod_j F(y - lam_i + lam_j) dy with scipy.quad on the original variable."""
    lam = np.asarray(gaps, float) - min(gaps)
    out = []
    lo = spec.nu
    for i in range(len(lam)):
        def g(y, i=i):
            prod = 1.0
            for j in range(len(lam)):
                if j != i:
                    prod *= float(ref_cdf(spec, y - lam[i] + lam[j]))
            return float(ref_pdf(spec, y)) * prod
        a = lo + lam[i] if math.isfinite(lo) else -np.inf
        val = integrate.quad(g, a if math.isfinite(a) else -np.inf, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
        out.append(val)
    return np.array(out)


def frechet_block_mean(alpha, k):
    return k ** (1 / alpha) * special.gamma(1 - 1 / alpha)


def pareto_block_mean(alpha, k):
    return k * special.beta(1 - 1 / alpha, k)


def tsallis_bisection(L, eta, tol=1e-15):
    """Normalising constant by plain bisection, independent of the compiled solver."""
    L = np.asarray(L, float)
    lo, hi = L.min() - 2 * math.sqrt(len(L)) / eta - 1.0, L.min() - 1e-300
    hi = L.min() - 2.0 / eta
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        s = np.sum(4.0 / (eta * (L - mid)) ** 2)
        if s > 1:
            hi = mid
        else:
            lo = mid
    x = 0.5 * (lo + hi)
    w = 4.0 / (eta * (L - x)) ** 2
    return w / w.sum()
