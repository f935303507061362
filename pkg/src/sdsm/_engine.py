"""Compiled inner loops: coefficient evaluation, common-noise sampling, the
event-driven branching particle loop and small-system diffusion legs.

Every routine mirrors a numpy counterpart in :mod:`sdsm.kernels` or
:mod:`sdsm.forward`; the tests cross-check the two.  Functions return integer
status codes instead of raising, and the Python wrappers translate them.
"""

import math

import numpy as np
from numba import njit

OK = 0
ERR_POPULATION = 1
ERR_FACTOR = 2
ERR_LAW = 3

# residual diagonals below this fraction of rho(0) end the pivoted factorization
_PIVOT_ZERO = 1e-13
# residuals below minus this fraction signal a non-PSD rho table
_PIVOT_NEG = 1e-8
# gaussian h is dropped beyond this many widths (h < 3e-18 of its peak)
_GAUSS_REACH = 9.0


@njit(cache=True)
def rho_val(kind, p, x):
    if kind == 0:
        return 0.0
    if kind == 1:
        b = p[1]
        return p[0] * math.exp(-x * x / (4.0 * b * b))
    if kind == 2:
        v = (p[1] - p[0]) - abs(x)
        return p[2] * p[2] * v if v > 0.0 else 0.0
    n = p.shape[0] - 2
    u = (x - p[0]) / p[1]
    if u < 0.0 or u > n - 1:
        return 0.0
    i = int(u)
    if i >= n - 1:
        i = n - 2
    w = u - i
    return (1.0 - w) * p[2 + i] + w * p[3 + i]


@njit(cache=True)
def c_val(kind, p, x):
    if kind == 0:
        return p[0]
    v = p[2] + p[0] * x
    if v < p[1]:
        v = p[1]
    if v > p[3]:
        v = p[3]
    return v


@njit(cache=True)
def _count_below(edges, x):
    # number of edges strictly below x (right-closed pieces)
    lo, hi = 0, edges.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if edges[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def sigma_val(kind, p, offset, x):
    if kind == 0:
        v = p[0]
    elif kind == 1:
        d = (x - p[2]) / p[3]
        v = p[0] + p[1] * math.exp(-0.5 * d * d)
    elif kind == 2:
        v = p[0] if x <= p[2] else p[1]
    elif kind == 3:
        n = int(p[0])
        xs = p[1 : 1 + n]
        ys = p[1 + n : 1 + 2 * n]
        if x <= xs[0]:
            v = ys[0]
        elif x >= xs[n - 1]:
            v = ys[n - 1]
        else:
            i = _count_below(xs, x)
            w = (x - xs[i - 1]) / (xs[i] - xs[i - 1])
            v = ys[i - 1] + w * (ys[i] - ys[i - 1])
    elif kind == 4:
        nb = p.shape[0] - 2
        i = int(math.ceil((x - p[0]) / p[1])) - 1
        v = p[2 + i] if 0 <= i < nb else 0.0
    else:
        ne = int(p[0])
        i = _count_below(p[1 : 1 + ne], x)
        v = p[1 + ne + i]
    return v + offset


# ---------------------------------------------------------------------------
# offspring laws
#   kind 0: binary critical
#   kind 1: three-point family on {0, 2, k}, params [k]
#   kind 2: table, params [R, S, alias, edges(R-1), support(S), cdf(R*S),
#                          alias_prob(R*S), alias_idx(R*S)]


@njit(cache=True)
def sample_offspring(lk, lp, sk, sp, soff, x, rng):
    if lk == 0:
        return 0 if rng.random() < 0.5 else 2
    if lk == 1:
        k = lp[0]
        s = math.sqrt(k) * sigma_val(sk, sp, soff, x) + 1.0
        p0 = (s + k - 1.0) / (2.0 * k)
        p2 = (k - 1.0 - s) / (2.0 * (k - 2.0))
        if p2 < -1e-12:
            return -1
        u = rng.random()
        if u < p0:
            return 0
        if u < p0 + p2:
            return 2
        return int(k)
    R = int(lp[0])
    S = int(lp[1])
    use_alias = lp[2] > 0.5
    base = 3
    edges = lp[base : base + R - 1]
    base += R - 1
    support = lp[base : base + S]
    base += S
    r = _count_below(edges, x)
    if use_alias:
        aprob = lp[base + R * S : base + 2 * R * S]
        aidx = lp[base + 2 * R * S : base + 3 * R * S]
        i = int(rng.random() * S)
        if i >= S:
            i = S - 1
        if rng.random() >= aprob[r * S + i]:
            i = int(aidx[r * S + i])
        return int(support[i])
    cdf = lp[base : base + R * S]
    u = rng.random()
    for i in range(S - 1):
        if u < cdf[r * S + i]:
            return int(support[i])
    return int(support[S - 1])


# ---------------------------------------------------------------------------
# common noise


@njit(cache=True)
def _gaussian_sheet_increment(rp, hp, xs, n, dt, rng, out):
    """Common increments for gaussian h through the Gram identity on a grid.

    ``G_i = sum_k h(y_k - x_i) sqrt(delta dt) xi_k`` with ``y_k = k delta`` and
    ``delta = width / 2``.  The covariance is the uniform-grid sum of
    ``h(y - x_i) h(y - x_j)``, which equals ``rho(x_i - x_j)`` up to an
    aliasing factor ``exp(-pi^2 width^2 / delta^2) ~ 1e-17`` (Poisson
    summation for a gaussian integrand).
    """
    amp, beta = hp[0], hp[1]
    delta = 0.5 * beta
    reach = _GAUSS_REACH * beta
    lo = xs[0]
    hi = xs[0]
    for i in range(1, n):
        if xs[i] < lo:
            lo = xs[i]
        if xs[i] > hi:
            hi = xs[i]
    k_lo = int(math.floor((lo - reach) / delta))
    k_hi = int(math.ceil((hi + reach) / delta))
    xi = np.empty(k_hi - k_lo + 1)
    for k in range(xi.shape[0]):
        xi[k] = rng.standard_normal()
    scale = amp * math.sqrt(delta * dt)
    inv2b2 = 1.0 / (2.0 * beta * beta)
    step_ratio = math.exp(-delta * delta / (beta * beta))
    for i in range(n):
        x = xs[i]
        k0 = int(math.ceil((x - reach) / delta))
        k1 = int(math.floor((x + reach) / delta))
        u = k0 * delta - x
        v = math.exp(-u * u * inv2b2)
        q = math.exp(-(2.0 * u * delta + delta * delta) * inv2b2)
        acc = 0.0
        for k in range(k0, k1 + 1):
            acc += v * xi[k - k_lo]
            v *= q
            q *= step_ratio
        out[i] = scale * acc
    return OK


@njit(cache=True)
def _box_sheet_increment(hp, xs, n, dt, rng, out):
    """Exact common increments for a box kernel: G_i = height (W(x_i + right) - W(x_i + left))."""
    left, right, height = hp[0], hp[1], hp[2]
    ends = np.empty(2 * n)
    for i in range(n):
        ends[i] = xs[i] + left
        ends[n + i] = xs[i] + right
    order = np.argsort(ends)
    w_at = np.empty(2 * n)
    w = 0.0
    prev = ends[order[0]]
    sd = math.sqrt(dt)
    for r in range(2 * n):
        e = ends[order[r]]
        gap = e - prev
        if gap > 0.0:
            w += sd * math.sqrt(gap) * rng.standard_normal()
        w_at[order[r]] = w
        prev = e
    for i in range(n):
        out[i] = height * (w_at[n + i] - w_at[i])
    return OK


@njit(cache=True)
def pivoted_factor(rk, rp, xs, n):
    """Diagonally pivoted partial Cholesky of [rho(x_i - x_j)].

    Returns (columns, rank, ok): ``columns[:, :rank] @ columns[:, :rank].T``
    reproduces the matrix up to a trace error below ``n * 1e-13 rho(0)``.
    ``ok`` is False when a residual diagonal falls below ``-1e-8 rho(0)``.
    """
    scale = rho_val(rk, rp, 0.0)
    cols = np.zeros((n, n))
    d = np.empty(n)
    for i in range(n):
        d[i] = scale
    done = np.zeros(n, dtype=np.bool_)
    rank = 0
    while rank < n:
        piv = -1
        best = _PIVOT_ZERO * scale
        for i in range(n):
            if not done[i]:
                if d[i] < -_PIVOT_NEG * scale:
                    return cols, rank, False
                if d[i] > best:
                    best = d[i]
                    piv = i
        if piv < 0:
            break
        root = math.sqrt(d[piv])
        for i in range(n):
            if done[i] or i == piv:
                continue
            v = rho_val(rk, rp, xs[i] - xs[piv])
            for k in range(rank):
                v -= cols[i, k] * cols[piv, k]
            cols[i, rank] = v / root
            d[i] -= cols[i, rank] * cols[i, rank]
        cols[piv, rank] = root
        done[piv] = True
        d[piv] = 0.0
        rank += 1
    return cols, rank, True


@njit(cache=True)
def common_increment(rk, rp, hp, xs, n, dt, rng, out):
    """Sample the common-noise increments of ``n`` particles over ``dt``.

    Covariance is ``rho(x_i - x_j) * dt``.  ``hp`` carries the parameters of h
    itself for the kernels whose Gram identity gives a direct factorization.
    """
    if rk == 0 or n == 0:
        for i in range(n):
            out[i] = 0.0
        return OK
    if rk == 1:
        return _gaussian_sheet_increment(rp, hp, xs, n, dt, rng, out)
    if rk == 2:
        return _box_sheet_increment(hp, xs, n, dt, rng, out)
    cols, rank, ok = pivoted_factor(rk, rp, xs, n)
    if not ok:
        return ERR_FACTOR
    z = np.empty(rank)
    for k in range(rank):
        z[k] = rng.standard_normal()
    sd = math.sqrt(dt)
    for i in range(n):
        acc = 0.0
        for k in range(rank):
            acc += cols[i, k] * z[k]
        out[i] = sd * acc
    return OK


@njit(cache=True)
def diffuse_points(points, duration, dt_max, rk, rp, hp, ck, cp, rng):
    """Euler scheme for a small interacting system with no branching.

    ``ceil(duration / dt_max)`` equal steps; each step's increment has
    covariance ``Sigma * dt`` with coefficients frozen at the step start.
    Returns (status, new points).
    """
    n = points.shape[0]
    x = points.copy()
    if n == 0 or duration <= 0.0:
        return OK, x
    nsteps = max(1, int(math.ceil(duration / dt_max - 1e-9)))
    dt = duration / nsteps
    g = np.empty(n)
    sd = math.sqrt(dt)
    for _ in range(nsteps):
        st = common_increment(rk, rp, hp, x, n, dt, rng, g)
        if st != OK:
            return st, x
        for i in range(n):
            ci = c_val(ck, cp, x[i])
            x[i] = x[i] + g[i] + ci * sd * rng.standard_normal()
    return OK, x


# ---------------------------------------------------------------------------
# the branching particle system


@njit(cache=True)
def _grow(a, n):
    b = np.empty(max(2 * a.shape[0], n), dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _rate(n, theta, gamma, trunc):
    mass = n / theta
    return gamma * theta * theta * (trunc if trunc < mass else mass)


@njit(cache=True)
def forward_kernel(x0, theta, gamma, trunc, lk, lp, rk, rp, hp, ck, cp, sk, sp, soff,
                   snaps, dt_max, pop_cap, rng):
    """Run one replicate of the branching particle system.

    Each snapshot interval is split into ``ceil(interval / dt_max)`` equal
    Euler steps.  Within a step diffusion coefficients and offspring laws are
    frozen at the step-start positions (the "roots").  Branching times are
    exact: the clock has rate ``gamma theta^2 min(trunc, N / theta)`` and is
    resampled only when N changes.  A child copies its parent's root and
    individual displacement, so all descendants of a root share the root's
    common-noise increment, which is drawn once at the end of the step.

    Returns (status, concatenated snapshot positions, counts per snapshot,
    max population, truncation flag, number of events).
    """
    n = x0.shape[0]
    cap = max(16, 2 * n)
    pos = np.empty(cap)
    pos[:n] = x0
    root = np.empty(cap, dtype=np.int64)
    disp = np.empty(cap)
    tl = np.empty(cap)
    roots = np.empty(cap)
    g = np.empty(cap)

    nsnap = snaps.shape[0]
    counts = np.zeros(nsnap, dtype=np.int64)
    out = np.empty(max(16, n * max(nsnap, 1)))
    used = 0
    max_n = n
    truncated = False
    n_events = 0
    status = OK

    t = 0.0
    rate = _rate(n, theta, gamma, trunc)
    if n / theta > trunc:
        truncated = True
    next_event = t + rng.standard_exponential() / rate if rate > 0.0 else np.inf

    for si in range(nsnap):
        target = snaps[si]
        span = target - t
        if span > 0.0:
            nsteps = max(1, int(math.ceil(span / dt_max - 1e-9)))
            start = t
            for step in range(nsteps):
                t0 = t
                t1 = target if step == nsteps - 1 else start + span * (step + 1) / nsteps
                if n == 0:
                    t = t1
                    continue
                nr = n
                if roots.shape[0] < nr:
                    roots = np.empty(max(2 * roots.shape[0], nr))
                    g = np.empty(roots.shape[0])
                for i in range(n):
                    roots[i] = pos[i]
                    root[i] = i
                    disp[i] = 0.0
                    tl[i] = t0
                while next_event < t1 and n > 0:
                    s = next_event
                    i = int(rng.random() * n)
                    if i >= n:
                        i = n - 1
                    xr = roots[root[i]]
                    ci = c_val(ck, cp, xr)
                    disp[i] += ci * math.sqrt(s - tl[i]) * rng.standard_normal()
                    tl[i] = s
                    j = sample_offspring(lk, lp, sk, sp, soff, xr, rng)
                    if j < 0:
                        status = ERR_LAW
                        break
                    n_events += 1
                    if j == 0:
                        last = n - 1
                        root[i] = root[last]
                        disp[i] = disp[last]
                        tl[i] = tl[last]
                        n -= 1
                    elif j > 1:
                        need = n + j - 1
                        if need > pop_cap:
                            status = ERR_POPULATION
                            max_n = need
                            break
                        if need > root.shape[0]:
                            root = _grow(root, need)
                            disp = _grow(disp, need)
                            tl = _grow(tl, need)
                            pos = _grow(pos, need)
                        for c in range(n, need):
                            root[c] = root[i]
                            disp[c] = disp[i]
                            tl[c] = s
                        n = need
                        if n > max_n:
                            max_n = n
                    if n / theta > trunc:
                        truncated = True
                    rate = _rate(n, theta, gamma, trunc)
                    next_event = s + rng.standard_exponential() / rate if rate > 0.0 else np.inf
                if status != OK:
                    break
                st = common_increment(rk, rp, hp, roots, nr, t1 - t0, rng, g)
                if st != OK:
                    status = st
                    break
                for i in range(n):
                    xr = roots[root[i]]
                    ci = c_val(ck, cp, xr)
                    disp[i] += ci * math.sqrt(t1 - tl[i]) * rng.standard_normal()
                    pos[i] = xr + g[root[i]] + disp[i]
                t = t1
            if status != OK:
                break
        # emit the snapshot; an event scheduled exactly at target fires afterwards
        t = target
        if used + n > out.shape[0]:
            out = _grow(out, used + n)
        for i in range(n):
            out[used + i] = pos[i]
        used += n
        counts[si] = n
    return status, out[:used].copy(), counts, max_n, truncated, n_events
