"""Compiled scalar/array primitives for the perturbation families.

Every function takes a packed parameter vector ``d`` (see ``pack``) so that a
single compiled signature serves all families:

    d[0] family code   d[1] first param   d[2] second param
    d[3] 1.0 if truncated to [1, inf)     d[4] base survival at 1
    d[5] log normalising constant of the base density
"""

import math

import numpy as np
from numba import njit

FRECHET, PARETO, GEN_PARETO, STUDENT_T, SNEDECOR_F = 0, 1, 2, 3, 4

_EPS = 1e-16
_TINY = 1e-300


@njit(cache=True)
def lbeta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@njit(cache=True)
def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    dd = 1.0 - qab * x / qap
    if abs(dd) < _TINY:
        dd = _TINY
    dd = 1.0 / dd
    h = dd
    for m in range(1, 20000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        dd = 1.0 + aa * dd
        if abs(dd) < _TINY:
            dd = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        dd = 1.0 / dd
        h *= dd * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        dd = 1.0 + aa * dd
        if abs(dd) < _TINY:
            dd = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        dd = 1.0 / dd
        delta = dd * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


@njit(cache=True)
def ibeta(a, b, x, y):
    """Regularised incomplete beta I_x(a, b); ``y`` must equal 1 - x."""
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    lbt = a * math.log(x) + b * math.log(y) - lbeta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, y) / b


@njit(cache=True)
def _t_sf_pos(n, x):
    # Student-t upper tail for x >= 0
    if n == 1.0:
        return math.atan2(1.0, x) / math.pi
    if n == 2.0:
        s = math.sqrt(2.0 + x * x)
        return 1.0 / (s * (s + x))
    xx = x * x
    return 0.5 * ibeta(0.5 * n, 0.5, n / (n + xx), xx / (n + xx))


@njit(cache=True)
def base_nu(d):
    fam = int(d[0])
    if fam == PARETO:
        return 1.0
    if fam == STUDENT_T:
        return -np.inf
    return 0.0


@njit(cache=True)
def base_sf(d, x):
    fam = int(d[0])
    p = d[1]
    if fam == FRECHET:
        if x <= 0.0:
            return 1.0
        return -math.expm1(-x ** (-p))
    if fam == PARETO:
        if x <= 1.0:
            return 1.0
        return x ** (-p)
    if fam == GEN_PARETO:
        if x <= 0.0:
            return 1.0
        return math.exp(-p * math.log1p(x / (p * d[2])))
    if fam == STUDENT_T:
        if x < 0.0:
            return 1.0 - _t_sf_pos(p, -x)
        return _t_sf_pos(p, x)
    # Snedecor F
    if x <= 0.0:
        return 1.0
    m = p
    n = d[2]
    if m == 2.0:
        return math.exp(-0.5 * n * math.log1p(2.0 * x / n))
    mx = m * x
    return ibeta(0.5 * n, 0.5 * m, n / (mx + n), mx / (mx + n))


@njit(cache=True)
def base_cdf(d, x):
    fam = int(d[0])
    p = d[1]
    if fam == FRECHET:
        if x <= 0.0:
            return 0.0
        return math.exp(-x ** (-p))
    if fam == PARETO:
        if x <= 1.0:
            return 0.0
        return -math.expm1(-p * math.log(x))
    if fam == GEN_PARETO:
        if x <= 0.0:
            return 0.0
        return -math.expm1(-p * math.log1p(x / (p * d[2])))
    if fam == STUDENT_T:
        if x < 0.0:
            return _t_sf_pos(p, -x)
        return 1.0 - _t_sf_pos(p, x)
    if x <= 0.0:
        return 0.0
    m = p
    n = d[2]
    if m == 2.0:
        return -math.expm1(-0.5 * n * math.log1p(2.0 * x / n))
    mx = m * x
    return ibeta(0.5 * m, 0.5 * n, mx / (mx + n), n / (mx + n))


@njit(cache=True)
def base_logpdf(d, x):
    fam = int(d[0])
    p = d[1]
    if fam == FRECHET:
        if x <= 0.0:
            return -np.inf
        return math.log(p) - (p + 1.0) * math.log(x) - x ** (-p)
    if fam == PARETO:
        if x < 1.0:
            return -np.inf
        return math.log(p) - (p + 1.0) * math.log(x)
    if fam == GEN_PARETO:
        if x < 0.0:
            return -np.inf
        return -math.log(d[2]) - (p + 1.0) * math.log1p(x / (p * d[2]))
    if fam == STUDENT_T:
        return d[5] - 0.5 * (p + 1.0) * math.log1p(x * x / p)
    m = p
    n = d[2]
    if x < 0.0:
        return -np.inf
    if x == 0.0:
        if m < 2.0:
            return np.inf
        if m > 2.0:
            return -np.inf
        return d[5]
    return d[5] + (0.5 * m - 1.0) * math.log(x) - 0.5 * (m + n) * math.log1p(m * x / n)


@njit(cache=True)
def base_dlogpdf(d, x):
    """Derivative of the log density, f'(x)/f(x)."""
    fam = int(d[0])
    p = d[1]
    if fam == FRECHET:
        return -(p + 1.0) / x + p * x ** (-p - 1.0)
    if fam == PARETO:
        return -(p + 1.0) / x
    if fam == GEN_PARETO:
        return -(p + 1.0) / (p * d[2] + x)
    if fam == STUDENT_T:
        return -(p + 1.0) * x / (p + x * x)
    m = p
    n = d[2]
    return (0.5 * m - 1.0) / x - 0.5 * (m + n) * m / (n + m * x)


@njit(cache=True)
def _solve_upper(d, q):
    # x with base_sf(x) = q, safeguarded Newton on log sf
    target = math.log(q)
    lo = max(base_nu(d), 0.0)
    hi = max(lo, 1.0)
    while math.log(max(base_sf(d, hi), 1e-320)) > target:
        lo = hi
        hi *= 2.0
        if hi > 1e300:
            return np.inf
    x = 0.5 * (lo + hi)
    for _ in range(400):
        s = base_sf(d, x)
        g = math.log(max(s, 1e-320)) - target
        if g > 0.0:
            lo = x
        else:
            hi = x
        fpdf = math.exp(base_logpdf(d, x))
        step = 0.0
        xn = -1.0
        if s > 0.0 and fpdf > 0.0 and np.isfinite(fpdf):
            step = g * s / fpdf
            xn = x + step
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
            step = xn - x
        x = xn
        if abs(step) <= 1e-15 * abs(x) or hi - lo <= 1e-15 * hi:
            break
    return x


@njit(cache=True)
def _solve_lower(d, p):
    # x with base_cdf(x) = p for small p, safeguarded Newton on log cdf
    target = math.log(p)
    lo = max(base_nu(d), 0.0)
    hi = max(lo, 1.0)
    while math.log(max(base_cdf(d, hi), 1e-320)) < target:
        lo = hi
        hi *= 2.0
    x = 0.5 * (lo + hi)
    for _ in range(400):
        c = base_cdf(d, x)
        g = math.log(max(c, 1e-320)) - target
        if g < 0.0:
            lo = x
        else:
            hi = x
        fpdf = math.exp(base_logpdf(d, x))
        step = 0.0
        xn = -1.0
        if c > 0.0 and fpdf > 0.0 and np.isfinite(fpdf):
            step = -g * c / fpdf
            xn = x + step
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
            step = xn - x
        x = xn
        if abs(step) <= 1e-15 * abs(x) or hi - lo <= 1e-15 * hi:
            break
    return x


@njit(cache=True)
def _t_isf_upper(d, q):
    # Student-t inverse survival for q <= 1/2
    p = d[1]
    if q == 0.5:
        return 0.0
    if p == 1.0:
        return 1.0 / math.tan(math.pi * q)
    if p == 2.0:
        return (1.0 - 2.0 * q) / math.sqrt(2.0 * q * (1.0 - q))
    return _solve_upper(d, q)


@njit(cache=True)
def base_isf(d, q):
    """Inverse survival function: x with 1 - F(x) = q, q in (0, 1]."""
    fam = int(d[0])
    p = d[1]
    if q <= 0.0:
        return np.inf
    if fam == FRECHET:
        if q >= 1.0:
            return 0.0
        return (-math.log1p(-q)) ** (-1.0 / p)
    if fam == PARETO:
        if q >= 1.0:
            return 1.0
        return math.exp(-math.log(q) / p)
    if fam == GEN_PARETO:
        if q >= 1.0:
            return 0.0
        return p * d[2] * math.expm1(-math.log(q) / p)
    if fam == STUDENT_T:
        if q >= 1.0:
            return -np.inf
        if q > 0.5:
            return -_t_isf_upper(d, 1.0 - q)
        return _t_isf_upper(d, q)
    if q >= 1.0:
        return 0.0
    n = d[2]
    if p == 2.0:
        return 0.5 * n * math.expm1(-(2.0 / n) * math.log(q))
    if q > 0.5:
        return _solve_lower(d, 1.0 - q)
    return _solve_upper(d, q)


@njit(cache=True)
def base_ppf(d, u):
    """Quantile accurate in the left tail: x with F(x) = u, u in [0, 1)."""
    fam = int(d[0])
    p = d[1]
    if u <= 0.0:
        return base_nu(d)
    if u >= 1.0:
        return np.inf
    if u > 0.5:
        return base_isf(d, 1.0 - u)
    if fam == FRECHET:
        return (-math.log(u)) ** (-1.0 / p)
    if fam == PARETO:
        return math.exp(-math.log1p(-u) / p)
    if fam == GEN_PARETO:
        return p * d[2] * math.expm1(-math.log1p(-u) / p)
    if fam == STUDENT_T:
        return -_t_isf_upper(d, u)
    if p == 2.0:
        return 0.5 * d[2] * math.expm1(-(2.0 / d[2]) * math.log1p(-u))
    return _solve_lower(d, u)


# ---------------------------------------------------------------------------
# wrapped (optionally truncated to [1, inf)) scalar functions


@njit(cache=True)
def nu(d):
    if d[3] > 0.0:
        return 1.0
    return base_nu(d)


@njit(cache=True)
def sf(d, x):
    if d[3] > 0.0:
        if x <= 1.0:
            return 1.0
        return base_sf(d, x) / d[4]
    return base_sf(d, x)


@njit(cache=True)
def cdf(d, x):
    if d[3] > 0.0:
        if x <= 1.0:
            return 0.0
        return 1.0 - base_sf(d, x) / d[4]
    return base_cdf(d, x)


@njit(cache=True)
def logcdf(d, x):
    if d[3] <= 0.0 and int(d[0]) == FRECHET:
        if x <= 0.0:
            return -np.inf
        return -x ** (-d[1])
    c = cdf(d, x)
    if c <= 0.0:
        return -np.inf
    return math.log(c)


@njit(cache=True)
def logpdf(d, x):
    if d[3] > 0.0:
        if x < 1.0:
            return -np.inf
        return base_logpdf(d, x) - math.log(d[4])
    return base_logpdf(d, x)


@njit(cache=True)
def pdf(d, x):
    return math.exp(logpdf(d, x))


@njit(cache=True)
def dlogpdf(d, x):
    return base_dlogpdf(d, x)


@njit(cache=True)
def isf(d, q):
    if d[3] > 0.0:
        return max(1.0, base_isf(d, q * d[4]))
    return base_isf(d, q)


@njit(cache=True)
def ppf(d, u):
    if d[3] > 0.0:
        if u <= 0.0:
            return 1.0
        return max(1.0, base_isf(d, (1.0 - u) * d[4]))
    return base_ppf(d, u)


@njit(cache=True)
def draw(d, gen):
    # inverse-cdf draw; the survival branch keeps full precision in the tail
    return isf(d, 1.0 - gen.random())


# ---------------------------------------------------------------------------
# array wrappers


@njit(cache=True)
def sf_arr(d, x):
    out = np.empty(x.size)
    for k in range(x.size):
        out[k] = sf(d, x[k])
    return out


@njit(cache=True)
def cdf_arr(d, x):
    out = np.empty(x.size)
    for k in range(x.size):
        out[k] = cdf(d, x[k])
    return out


@njit(cache=True)
def logcdf_arr(d, x):
    out = np.empty(x.size)
    for k in range(x.size):
        out[k] = logcdf(d, x[k])
    return out


@njit(cache=True)
def logpdf_arr(d, x):
    out = np.empty(x.size)
    for k in range(x.size):
        out[k] = logpdf(d, x[k])
    return out


@njit(cache=True)
def dlogpdf_arr(d, x):
    out = np.empty(x.size)
    for k in range(x.size):
        out[k] = dlogpdf(d, x[k])
    return out


@njit(cache=True)
def isf_arr(d, q):
    out = np.empty(q.size)
    for k in range(q.size):
        out[k] = isf(d, q[k])
    return out


@njit(cache=True)
def ppf_arr(d, u):
    out = np.empty(u.size)
    for k in range(u.size):
        out[k] = ppf(d, u[k])
    return out


@njit(cache=True)
def draw_arr(d, gen, count):
    out = np.empty(count)
    for k in range(count):
        out[k] = draw(d, gen)
    return out


@njit(cache=True)
def block_max_draws(d, gen, k, reps):
    """Draws of max(X_1..X_k) by inverting F^k (one uniform per block)."""
    out = np.empty(reps)
    for r in range(reps):
        u = 1.0 - gen.random()
        out[r] = isf(d, -math.expm1(math.log(u) / k))
    return out


@njit(cache=True)
def phi_integrand(d, s, shifts):
    """prod_j cdf(isf(s) + shifts[j]) evaluated at each survival level s."""
    out = np.empty(s.size)
    for k in range(s.size):
        y = isf(d, s[k])
        v = 1.0
        for j in range(shifts.size):
            v *= cdf(d, y + shifts[j])
            if v == 0.0:
                break
        out[k] = v
    return out


@njit(cache=True)
def j_integrand(d, s, shifts):
    out = np.empty(s.size)
    for k in range(s.size):
        y = isf(d, s[k])
        v = 1.0 / y
        for j in range(shifts.size):
            v *= cdf(d, y + shifts[j])
            if v == 0.0:
                break
        out[k] = v
    return out
