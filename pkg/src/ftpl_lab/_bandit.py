"""Compiled per-round bandit primitives and the trial loop."""

import math

import numpy as np
from numba import njit

from ._kernels import draw

FTPL, EXACT, TSALLIS, UNIFORM = 0, 1, 2, 3
ADVERSARIAL_RATE, STOCHASTIC_RATE = 0, 1
ENV_STOCHASTIC, ENV_ADVERSARIAL, ENV_CONSTRAINED = 0, 1, 2


@njit(cache=True)
def learning_rate(t, c, k, alpha, mode):
    if mode == ADVERSARIAL_RATE:
        return c * k ** (1.0 / alpha - 0.5) / math.sqrt(t)
    return c / math.sqrt(t)


@njit(cache=True)
def perturbed_leader(d, L, inv_rate, gen):
    """argmin_i L_i - r_i * inv_rate over fresh draws; lowest index wins ties."""
    best = 0
    bestv = np.inf
    for i in range(L.size):
        v = L[i] - draw(d, gen) * inv_rate
        if v < bestv:
            best = i
            bestv = v
    return best


@njit(cache=True)
def rival_order(L, arm):
    # rivals most likely to beat ``arm`` first; only affects cost, not the law
    order = np.argsort(L, kind="mergesort")
    out = np.empty(L.size - 1, dtype=np.int64)
    k = 0
    for j in order:
        if j != arm:
            out[k] = j
            k += 1
    return out


@njit(cache=True)
def resample_once(d, L, inv_rate, arm, order, cap, gen):
    """Number of fresh perturbation vectors until ``arm`` is the leader again.

    The rivals' draws are generated lazily and the attempt is abandoned as soon
    as one rival beats ``arm``; the remaining draws of a failed attempt cannot
    change its outcome, so the count has the same geometric law.
    Returns (count, capped).
    """
    m = 0
    while m < cap:
        m += 1
        vi = L[arm] - draw(d, gen) * inv_rate
        won = True
        for j in order:
            vj = L[j] - draw(d, gen) * inv_rate
            if vj < vi or (vj == vi and j < arm):
                won = False
                break
        if won:
            return m, False
    return m, True


@njit(cache=True)
def resample_mean(d, L, inv_rate, arm, repeats, cap, gen):
    order = rival_order(L, arm)
    total = 0.0
    capped = False
    for _ in range(repeats):
        m, hit = resample_once(d, L, inv_rate, arm, order, cap, gen)
        total += m
        capped = capped or hit
    return total / repeats, capped


@njit(cache=True)
def resample_counts(d, L, inv_rate, arm, reps, cap, gen):
    order = rival_order(L, arm)
    counts = np.empty(reps)
    capped = np.zeros(reps, dtype=np.bool_)
    for r in range(reps):
        m, hit = resample_once(d, L, inv_rate, arm, order, cap, gen)
        counts[r] = m
        capped[r] = hit
    return counts, capped


@njit(cache=True)
def argmin_counts(d, L, inv_rate, n, gen):
    counts = np.zeros(L.size, dtype=np.int64)
    for _ in range(n):
        counts[perturbed_leader(d, L, inv_rate, gen)] += 1
    return counts


@njit(cache=True)
def _tsallis_sum(L, eta, x):
    s = 0.0
    ds = 0.0
    for i in range(L.size):
        u = eta * (L[i] - x)
        s += 4.0 / (u * u)
        ds += 8.0 * eta / (u * u * u)
    return s - 1.0, ds


@njit(cache=True)
def tsallis_weights(L, eta, w):
    """Fill ``w`` with 4 / (eta (L_i - x))^2 normalised by Newton's method on x.

    Solved on L - min(L) so the leading term is exact whatever the loss scale.
    Returns (x, status): status 0 Newton, 1 bisection fallback, 2 failure.
    """
    k = L.size
    lmin = L.min()
    R = L - lmin
    y = -2.0 / eta
    status = 2
    for _ in range(200):
        g, dg = _tsallis_sum(R, eta, y)
        if abs(g) <= 1e-13:
            status = 0
            break
        yn = y - g / dg
        if not (yn < 0.0) or not np.isfinite(yn):
            break
        y = yn
    if status != 0:
        lo = -2.0 * math.sqrt(k) / eta
        hi = -2.0 / eta
        for _ in range(400):
            y = 0.5 * (lo + hi)
            g, _dg = _tsallis_sum(R, eta, y)
            if abs(g) <= 1e-13:
                status = 1
                break
            if g > 0.0:
                hi = y
            else:
                lo = y
            if not (lo < y < hi):
                # bracket exhausted at machine precision
                if abs(g) <= 1e-12:
                    status = 1
                break
    total = 0.0
    for i in range(k):
        u = eta * (R[i] - y)
        w[i] = 4.0 / (u * u)
        total += w[i]
    for i in range(k):
        w[i] /= total
    return lmin + y, status


@njit(cache=True)
def sample_categorical(w, gen):
    u = gen.random()
    acc = 0.0
    for i in range(w.size):
        acc += w[i]
        if u < acc:
            return i
    # rounding residue: fall back to the last arm with positive mass
    for i in range(w.size - 1, -1, -1):
        if w[i] > 0.0:
            return i
    return w.size - 1


@njit(cache=True)
def env_losses(kind, t, means, matrix, delta, best, parity, gen, losses, mt):
    """Fill the round-t loss vector and its mean vector; returns the regret comparator mean."""
    k = losses.size
    if kind == ENV_ADVERSARIAL:
        for i in range(k):
            losses[i] = matrix[t - 1, i]
            mt[i] = matrix[t - 1, i]
        return mt[best]
    if kind == ENV_CONSTRAINED:
        if parity[t - 1] == 0:
            for i in range(k):
                mt[i] = 0.5 + 0.5 * delta
            mt[best] = 0.5 - 0.5 * delta
        else:
            for i in range(k):
                mt[i] = delta
            mt[best] = 0.0
    else:
        for i in range(k):
            mt[i] = means[i]
    for i in range(k):
        losses[i] = 1.0 if gen.random() < mt[i] else 0.0
    lo = mt[0]
    for i in range(1, k):
        if mt[i] < lo:
            lo = mt[i]
    return lo


@njit(cache=True)
def run_trial_kernel(kind, d, k, horizon, c, alpha, rate_mode, scale, gr_repeats, cap,
                     env_kind, means, matrix, delta, best, parity, pol_gen, env_gen):
    arms = np.empty(horizon, dtype=np.int64)
    observed = np.empty(horizon)
    counts = np.ones(horizon)
    capped = np.zeros(horizon, dtype=np.bool_)
    regret = np.empty(horizon)
    best_loss = np.empty(horizon)
    L = np.zeros(k)
    w = np.empty(k)
    losses = np.empty(k)
    mt = np.empty(k)
    for t in range(1, horizon + 1):
        if kind == FTPL:
            eta = learning_rate(t, c, k, alpha, rate_mode)
            inv_rate = scale / eta
            arm = perturbed_leader(d, L, inv_rate, pol_gen)
        elif kind == TSALLIS:
            eta = 2.0 / math.sqrt(t)
            _x, status = tsallis_weights(L, eta, w)
            if status == 2:
                raise RuntimeError("Tsallis-INF normalisation failed")
            arm = sample_categorical(w, pol_gen)
        else:
            arm = min(int(pol_gen.random() * k), k - 1)
        comparator = env_losses(env_kind, t, means, matrix, delta, best, parity, env_gen, losses, mt)
        loss = losses[arm]
        if kind == FTPL:
            m, hit = resample_mean(d, L, inv_rate, arm, gr_repeats, cap, pol_gen)
            counts[t - 1] = m
            capped[t - 1] = hit
            L[arm] += loss * m
        elif kind == TSALLIS:
            counts[t - 1] = 1.0 / w[arm]
            L[arm] += loss / w[arm]
        arms[t - 1] = arm
        observed[t - 1] = loss
        best_loss[t - 1] = losses[best]
        if env_kind == ENV_ADVERSARIAL:
            regret[t - 1] = loss - losses[best]
        else:
            regret[t - 1] = mt[arm] - comparator
    return arms, observed, counts, capped, regret, best_loss
