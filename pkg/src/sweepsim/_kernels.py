"""Jitted Gillespie kernels for the hot Monte Carlo loops.

Event counts reach ~alpha*log(alpha) per replicate (1e7 at alpha=1e5), so
the replicate loops run as nopython numba kernels. Each replicate is a
pure function of one uint64 seed: the kernels carry their own
xoshiro256** generator (seeded through splitmix64), which makes replicate
batches reproducible independently of thread count. Batch drivers
parallelize over replicates with prange.

Category selection walks cumulative sums in a fixed documented order
(colonies ascending, categories in table order, destinations ascending),
so event sequences are bit-exact for a given seed.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

U64 = np.uint64
_INV53 = 1.0 / float(1 << 53)

# shared status codes (moran additionally uses 0=lost, 1=fixed)
OK = 0            # absorbed / completed
HORIZON = 2       # stopped at the time horizon (or at first migrant)
EVENT_STOP = 3    # stopped after n_events_stop events
FROZEN = 5        # zero total rate in a non-absorbed state
BUDGET = 9        # event budget exceeded


# ---------------------------------------------------------------------------
# RNG: splitmix64 seeding + xoshiro256**
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _splitmix64(s):
    s = U64(s + U64(0x9E3779B97F4A7C15))
    z = s
    z = U64((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9))
    z = U64((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB))
    return s, U64(z ^ (z >> U64(31)))


@njit(cache=True)
def _rng_init(seed):
    st = np.empty(4, dtype=np.uint64)
    s = U64(seed)
    for i in range(4):
        s, v = _splitmix64(s)
        st[i] = v
    return st


@njit(cache=True, inline="always")
def _rotl(x, k):
    return U64((x << U64(k)) | (x >> U64(64 - k)))


@njit(cache=True, inline="always")
def _next_u64(st):
    r = U64(_rotl(U64(st[1] * U64(5)), 7) * U64(9))
    t = U64(st[1] << U64(17))
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return r


@njit(cache=True, inline="always")
def _unif(st):
    return float(_next_u64(st) >> U64(11)) * _INV53


@njit(cache=True, inline="always")
def _exponential(st):
    return -np.log(1.0 - _unif(st))


@njit(cache=True)
def _poisson(st, lam):
    """Poisson sampling: Knuth product below 30, PTRS rejection above."""
    if lam <= 0.0:
        return 0
    if lam < 30.0:
        limit = np.exp(-lam)
        k = -1
        p = 1.0
        while p > limit:
            p *= _unif(st)
            k += 1
        return k
    b = 0.931 + 2.53 * np.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = _unif(st) - 0.5
        v = _unif(st)
        us = 0.5 - abs(u)
        k = int(np.floor((2.0 * a / us + b) * u + lam + 0.43))
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if np.log(v * inv_alpha / (a / (us * us) + b)) <= (
            k * np.log(lam) - lam - math.lgamma(k + 1.0)
        ):
            return k


# ---------------------------------------------------------------------------
# (L, M) birth-death process
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _lm_colony_rate(alpha, mu, arow_i, inv_rho_i, li, mi):
    w = li - mi
    return (
        alpha * li
        + (0.5 * (mi * (mi - 1.0)) + w * mi + 0.5 * (w * (w - 1.0))) * inv_rho_i
        + mu * arow_i * li
    )


@njit(cache=True)
def lm_run(
    alpha,
    mu,
    a,
    rho,
    founder,
    init_ell,
    init_m,
    use_init,
    window,
    stop_first_migrant,
    n_events_stop,
    cap,
    seed,
    out_ell,
    out_m,
):
    """One replicate of the marked/unmarked particle-count chain.

    Returns (status, T, first_migrant_time, max_window_dev, events) and
    leaves the final counts in out_ell/out_m. T is the absorption time
    (m == ell); first_migrant_time is the first time a marked particle
    reaches a colony other than the founder (-1.0 if never before stop);
    max_window_dev is sup over event times <= window of
    max_i |ell_i/alpha - 2 rho_i| (ignored when window < 0).
    """
    d = rho.shape[0]
    st = _rng_init(seed)

    arow = np.zeros(d, dtype=np.float64)
    inv_rho = np.empty(d, dtype=np.float64)
    for i in range(d):
        s = 0.0
        for j in range(d):
            if j != i:
                s += a[i, j]
        arow[i] = s
        inv_rho[i] = 1.0 / rho[i]

    ell = np.empty(d, dtype=np.int64)
    m = np.zeros(d, dtype=np.int64)
    if use_init:
        for i in range(d):
            ell[i] = init_ell[i]
            m[i] = init_m[i]
    else:
        for i in range(d):
            ell[i] = _poisson(st, 2.0 * alpha * rho[i])
        ell[founder] += 1
        m[founder] = 1

    ltot = 0
    mtot = 0
    for i in range(d):
        ltot += ell[i]
        mtot += m[i]

    colr = np.empty(d, dtype=np.float64)
    tot = 0.0
    for i in range(d):
        colr[i] = _lm_colony_rate(alpha, mu, arow[i], inv_rho[i], ell[i], m[i])
        tot += colr[i]

    max_dev = 0.0
    if window >= 0.0:
        for i in range(d):
            dev = abs(ell[i] / alpha - 2.0 * rho[i])
            if dev > max_dev:
                max_dev = dev

    t = 0.0
    first_mig = -1.0
    events = 0
    status = OK
    while mtot != ltot:
        if tot <= 0.0:
            status = FROZEN
            break
        dt = _exponential(st) / tot
        t += dt
        events += 1
        if events > cap:
            status = BUDGET
            break

        target = _unif(st) * tot
        csum = 0.0
        ci = d - 1
        for i in range(d):
            if csum + colr[i] > target:
                ci = i
                break
            csum += colr[i]
        r = target - csum

        li = ell[ci]
        mi = m[ci]
        w = li - mi
        r1 = alpha * mi
        r2 = alpha * w
        r3 = 0.5 * (mi * (mi - 1.0)) * inv_rho[ci]
        r4 = (w * mi + 0.5 * (w * (w - 1.0))) * inv_rho[ci]

        dj = -1
        if r < r1:
            ell[ci] += 1
            m[ci] += 1
            ltot += 1
            mtot += 1
        elif r < r1 + r2:
            ell[ci] += 1
            ltot += 1
        elif r < r1 + r2 + r3:
            ell[ci] -= 1
            m[ci] -= 1
            ltot -= 1
            mtot -= 1
        elif r < r1 + r2 + r3 + r4:
            ell[ci] -= 1
            ltot -= 1
        else:
            rr = r - (r1 + r2 + r3 + r4)
            marked = True
            acc = 0.0
            last_pos = -1
            done = False
            for j in range(d):
                if j == ci:
                    continue
                rate = mu * a[ci, j] * mi
                if rate > 0.0:
                    last_pos = j
                acc += rate
                if rr < acc:
                    dj = j
                    done = True
                    break
            if not done:
                for j in range(d):
                    if j == ci:
                        continue
                    rate = mu * a[ci, j] * w
                    if rate > 0.0:
                        last_pos = j
                    acc += rate
                    if rr < acc:
                        dj = j
                        marked = False
                        done = True
                        break
            if not done:
                # cumulative-sum rounding fell off the end; take the last
                # destination with positive rate (unmarked branch)
                dj = last_pos
                marked = False
            if dj < 0:
                # no migration mass at all: 1-ulp overshoot of the walk,
                # discard the draw and redo the event
                events -= 1
                continue
            ell[ci] -= 1
            ell[dj] += 1
            if marked:
                m[ci] -= 1
                m[dj] += 1
                if first_mig < 0.0 and dj != founder:
                    first_mig = t
                    if stop_first_migrant:
                        status = HORIZON
                        break

        colr[ci] = _lm_colony_rate(alpha, mu, arow[ci], inv_rho[ci], ell[ci], m[ci])
        if dj >= 0:
            colr[dj] = _lm_colony_rate(alpha, mu, arow[dj], inv_rho[dj], ell[dj], m[dj])
        tot = 0.0
        for i in range(d):
            tot += colr[i]

        if window >= 0.0 and t <= window:
            dev = abs(ell[ci] / alpha - 2.0 * rho[ci])
            if dev > max_dev:
                max_dev = dev
            if dj >= 0:
                dev = abs(ell[dj] / alpha - 2.0 * rho[dj])
                if dev > max_dev:
                    max_dev = dev

        if n_events_stop > 0 and events >= n_events_stop and mtot != ltot:
            status = EVENT_STOP
            break

    for i in range(d):
        out_ell[i] = ell[i]
        out_m[i] = m[i]
    return status, t, first_mig, max_dev, events


@njit(cache=True, parallel=True)
def lm_batch(alpha, mu, a, rho, founder, seeds, window, stop_first_migrant, cap):
    """Replicate batch of lm_run; returns per-replicate summary arrays."""
    n = seeds.shape[0]
    d = rho.shape[0]
    status = np.empty(n, dtype=np.int64)
    T = np.empty(n, dtype=np.float64)
    first_mig = np.empty(n, dtype=np.float64)
    max_dev = np.empty(n, dtype=np.float64)
    events = np.empty(n, dtype=np.int64)
    dummy_ell = np.zeros((n, d), dtype=np.int64)
    dummy_m = np.zeros((n, d), dtype=np.int64)
    init = np.zeros(d, dtype=np.int64)
    for r in prange(n):
        s, t, fm, md, ev = lm_run(
            alpha,
            mu,
            a,
            rho,
            founder,
            init,
            init,
            False,
            window,
            stop_first_migrant,
            0,
            cap,
            seeds[r],
            dummy_ell[r],
            dummy_m[r],
        )
        status[r] = s
        T[r] = t
        first_mig[r] = fm
        max_dev[r] = md
        events[r] = ev
    return status, T, first_mig, max_dev, events


# ---------------------------------------------------------------------------
# Structured Moran model (effective events only)
# ---------------------------------------------------------------------------

@njit(cache=True)
def moran_run(caps, k0, alpha, mu, a, rho, horizon, n_events_stop, cap, seed, out_counts):
    """One replicate of the structured Moran chain.

    Only type-changing events are simulated; resampling between equal
    types and migration copies onto the same type are no-ops and carry no
    rate here. Category walk order: per colony ascending (resampling,
    selection), then source-destination pairs ascending (beneficial
    migrant, wildtype migrant).

    Returns (status, t, events) with status 0=lost, 1=fixed, 2=horizon,
    3=event stop, 5=frozen, 9=budget; final counts in out_counts.
    """
    d = caps.shape[0]
    st = _rng_init(seed)
    k = np.empty(d, dtype=np.int64)
    ntot = 0
    ktot = 0
    for i in range(d):
        k[i] = k0[i]
        ntot += caps[i]
        ktot += k0[i]
    inv_rho = np.empty(d, dtype=np.float64)
    inv_n = np.empty(d, dtype=np.float64)
    for i in range(d):
        inv_rho[i] = 1.0 / rho[i]
        inv_n[i] = 1.0 / caps[i]

    t = 0.0
    events = 0
    while True:
        if ktot == 0:
            for i in range(d):
                out_counts[i] = k[i]
            return 0, t, events
        if ktot == ntot:
            for i in range(d):
                out_counts[i] = k[i]
            return 1, t, events

        tot = 0.0
        for i in range(d):
            mixed = k[i] * (caps[i] - k[i])
            tot += mixed * inv_rho[i]
            tot += alpha * mixed * inv_n[i]
        if mu > 0.0:
            for i in range(d):
                for j in range(d):
                    if j == i:
                        continue
                    base = mu * a[i, j]
                    tot += base * k[i] * (caps[j] - k[j]) * inv_n[j]
                    tot += base * (caps[i] - k[i]) * k[j] * inv_n[j]
        if tot <= 0.0:
            for i in range(d):
                out_counts[i] = k[i]
            if np.isfinite(horizon):
                return HORIZON, horizon, events
            return FROZEN, t, events

        dt = _exponential(st) / tot
        if t + dt > horizon:
            for i in range(d):
                out_counts[i] = k[i]
            return HORIZON, horizon, events
        t += dt
        events += 1
        if events > cap:
            for i in range(d):
                out_counts[i] = k[i]
            return BUDGET, t, events

        target = _unif(st) * tot
        csum = 0.0
        applied = False
        for i in range(d):
            mixed = k[i] * (caps[i] - k[i])
            res = mixed * inv_rho[i]
            if csum + res > target:
                if target - csum < 0.5 * res:
                    k[i] += 1
                    ktot += 1
                else:
                    k[i] -= 1
                    ktot -= 1
                applied = True
                break
            csum += res
            sel = alpha * mixed * inv_n[i]
            if csum + sel > target:
                k[i] += 1
                ktot += 1
                applied = True
                break
            csum += sel
        if not applied and mu > 0.0:
            for i in range(d):
                if applied:
                    break
                for j in range(d):
                    if j == i:
                        continue
                    base = mu * a[i, j]
                    up = base * k[i] * (caps[j] - k[j]) * inv_n[j]
                    if csum + up > target:
                        k[j] += 1
                        ktot += 1
                        applied = True
                        break
                    csum += up
                    dn = base * (caps[i] - k[i]) * k[j] * inv_n[j]
                    if csum + dn > target:
                        k[j] -= 1
                        ktot -= 1
                        applied = True
                        break
                    csum += dn
        if not applied:
            # rounding fell off the cumulative walk; retry next iteration
            events -= 1
            continue

        if n_events_stop > 0 and events >= n_events_stop:
            for i in range(d):
                out_counts[i] = k[i]
            if ktot == 0:
                return 0, t, events
            if ktot == ntot:
                return 1, t, events
            return EVENT_STOP, t, events


@njit(cache=True, parallel=True)
def moran_batch(caps, k0, alpha, mu, a, rho, horizon, cap, seeds):
    n = seeds.shape[0]
    d = caps.shape[0]
    status = np.empty(n, dtype=np.int64)
    T = np.empty(n, dtype=np.float64)
    events = np.empty(n, dtype=np.int64)
    counts = np.empty((n, d), dtype=np.int64)
    for r in prange(n):
        s, t, ev = moran_run(
            caps, k0, alpha, mu, a, rho, horizon, 0, cap, seeds[r], counts[r]
        )
        status[r] = s
        T[r] = t
        events[r] = ev
    return status, T, events, counts


# ---------------------------------------------------------------------------
# ASG particle-count chain (no labels)
# ---------------------------------------------------------------------------

@njit(cache=True)
def kcount_run(alpha, mu, kern, rho, k0, tau, n_events_stop, cap, seed, out_counts):
    """Particle-count chain: pair coalescence 1/rho_i, branching alpha,
    migration mu*kern(i,j) per particle. Runs to time tau.

    Returns (status, t, events); counts at the stop time in out_counts.
    """
    d = rho.shape[0]
    st = _rng_init(seed)
    k = np.empty(d, dtype=np.int64)
    for i in range(d):
        k[i] = k0[i]
    inv_rho = np.empty(d, dtype=np.float64)
    for i in range(d):
        inv_rho[i] = 1.0 / rho[i]

    t = 0.0
    events = 0
    while True:
        tot = 0.0
        for i in range(d):
            tot += 0.5 * (k[i] * (k[i] - 1.0)) * inv_rho[i] + alpha * k[i]
        if mu > 0.0:
            for i in range(d):
                if k[i] > 0:
                    for j in range(d):
                        if j != i:
                            tot += mu * kern[i, j] * k[i]
        if tot <= 0.0:
            for i in range(d):
                out_counts[i] = k[i]
            return HORIZON, tau, events

        dt = _exponential(st) / tot
        if t + dt > tau:
            for i in range(d):
                out_counts[i] = k[i]
            return HORIZON, tau, events
        t += dt
        events += 1
        if events > cap:
            for i in range(d):
                out_counts[i] = k[i]
            return BUDGET, t, events

        target = _unif(st) * tot
        csum = 0.0
        applied = False
        for i in range(d):
            coal = 0.5 * (k[i] * (k[i] - 1.0)) * inv_rho[i]
            if csum + coal > target:
                k[i] -= 1
                applied = True
                break
            csum += coal
            br = alpha * k[i]
            if csum + br > target:
                k[i] += 1
                applied = True
                break
            csum += br
        if not applied and mu > 0.0:
            for i in range(d):
                if applied:
                    break
                if k[i] == 0:
                    continue
                for j in range(d):
                    if j == i:
                        continue
                    mig = mu * kern[i, j] * k[i]
                    if csum + mig > target:
                        k[i] -= 1
                        k[j] += 1
                        applied = True
                        break
                    csum += mig
        if not applied:
            events -= 1
            continue

        if n_events_stop > 0 and events >= n_events_stop:
            for i in range(d):
                out_counts[i] = k[i]
            return EVENT_STOP, t, events


@njit(cache=True, parallel=True)
def kcount_batch(alpha, mu, kern, rho, k0, tau, cap, seeds):
    n = seeds.shape[0]
    d = rho.shape[0]
    status = np.empty(n, dtype=np.int64)
    counts = np.empty((n, d), dtype=np.int64)
    for r in prange(n):
        s, t, ev = kcount_run(alpha, mu, kern, rho, k0, tau, 0, cap, seeds[r], counts[r])
        status[r] = s
    return status, counts


# ---------------------------------------------------------------------------
# Scalar linear birth-death chain
# ---------------------------------------------------------------------------

@njit(cache=True)
def bd_extinction_run(birth, death, n0, cap, seed):
    """Extinction time of the chain with rates birth*k up, death*k down."""
    st = _rng_init(seed)
    k = n0
    t = 0.0
    events = 0
    p_up = birth / (birth + death)
    while k > 0:
        tot = (birth + death) * k
        t += _exponential(st) / tot
        events += 1
        if events > cap:
            return BUDGET, t, events
        if _unif(st) < p_up:
            k += 1
        else:
            k -= 1
    return OK, t, events


@njit(cache=True, parallel=True)
def bd_extinction_batch(birth, death, n0, cap, seeds):
    n = seeds.shape[0]
    status = np.empty(n, dtype=np.int64)
    T = np.empty(n, dtype=np.float64)
    for r in prange(n):
        s, t, ev = bd_extinction_run(birth, death, n0, cap, seeds[r])
        status[r] = s
        T[r] = t
    return status, T
