"""Hot per-draw kernels shared by the public API and the sweep engine.

Every function here is written in nopython-compatible style and compiled
with numba when available.  Setting ``THRESHOLD_MECH_BACKEND=numpy`` selects
the un-jitted pure-Python/numpy path instead (same source, no compilation);
``THRESHOLD_MECH_BACKEND=numba`` forces jitting and raises if numba is
missing.  The active backend is exposed as ``BACKEND``.
"""

from __future__ import annotations

import os

import numpy as np

# Numerical slack for threshold comparisons (sum of contributions vs X).
EPS_NUM = 1e-9
# Slack for participation / profitability inequalities that are exact in theory.
EPS_PART = 1e-12

# Protocol codes.
PROTO_S = 0
PROTO_M = 1
PROTO_L = 2

# Per-draw status codes.
ST_NULL_NO_POOL = 0   # no feasible pool size, null assignment
ST_FLOOR_ONLY = 1     # floors alone reach the threshold
ST_SUCCESS = 2        # backstop plan assigned and sustained
ST_NULL_REJECT = 3    # plan rejected (participation or profit screen), null assignment
ST_STAGE2_FAIL = 4    # noisy runs only: assigned, but true-cost withdrawals miss X


def _floor_profile(c, p, out):
    """Fill ``out`` with min(p/c, 1) and return the sum."""
    s = 0.0
    for i in range(c.size):
        e = p / c[i]
        if e > 1.0:
            e = 1.0
        out[i] = e
        s += e
    return s


def _gamma_star(c, p, d):
    r = c * d - p
    return r * r / (2.0 * c)


def _max_fill(c, v, p):
    d = (p + np.sqrt(2.0 * c * v)) / c
    if d > 1.0:
        d = 1.0
    return d


def _water_fill(costs, lower, upper, demand, out):
    """Box-constrained quadratic-cost allocation summing to ``demand``.

    Bisects the exposure level on the monotone residual map
    lam -> sum(clip(lam / c_j, lower_j, upper_j)).  Returns the exposure
    level, or -1.0 when the demand is outside [sum(lower), sum(upper)].
    """
    k = costs.size
    lo_sum = 0.0
    up_sum = 0.0
    lam_hi = 0.0
    for j in range(k):
        lo_sum += lower[j]
        up_sum += upper[j]
        m = costs[j] * upper[j]
        if m > lam_hi:
            lam_hi = m
    if demand < lo_sum - EPS_NUM or demand > up_sum + EPS_NUM:
        return -1.0
    if demand <= lo_sum:
        for j in range(k):
            out[j] = lower[j]
        return 0.0
    if demand >= up_sum:
        for j in range(k):
            out[j] = upper[j]
        return lam_hi
    lam_lo = 0.0
    for _ in range(100):
        lam = 0.5 * (lam_lo + lam_hi)
        s = 0.0
        for j in range(k):
            e = lam / costs[j]
            if e < lower[j]:
                e = lower[j]
            elif e > upper[j]:
                e = upper[j]
            s += e
        if s < demand:
            lam_lo = lam
        else:
            lam_hi = lam
    lam = 0.5 * (lam_lo + lam_hi)
    for j in range(k):
        e = lam / costs[j]
        if e < lower[j]:
            e = lower[j]
        elif e > upper[j]:
            e = upper[j]
        out[j] = e
    return lam


def _min_pool(floors, fsum, x, order):
    """Smallest k whose k lowest-cost users can cover the residual demand.

    Returns (k, D_K); (-1, 0.0) when no k <= n works.  ``order`` must hold
    cost indices sorted ascending (stable).
    """
    n = order.size
    pref = 0.0
    for k in range(1, n + 1):
        pref += floors[order[k - 1]]
        d = x - fsum + pref
        if d <= k + EPS_NUM:
            return k, d
    return -1, 0.0


def _chain(c_mv, f_mv, dbar_mv, cap_after, x, e_start, e_mv):
    """Sequential withdrawal chain over movers in the given order.

    Each mover retains the least amount that keeps the remaining chain able
    to reach ``x`` assuming downstream capacity ``cap_after`` (suffix sums of
    fill capacities), clamped to [own floor, own capacity].  Returns the
    final aggregate; provision succeeds when it reaches ``x``.
    """
    agg = e_start
    for j in range(c_mv.size):
        e = x - agg - cap_after[j]
        if e < f_mv[j]:
            e = f_mv[j]
        elif e > dbar_mv[j]:
            e = dbar_mv[j]
        e_mv[j] = e
        agg += e
    return agg


def _withdrawal_draw(c, x, p, v, pi, enforce, proto, e_out):
    """One noiseless draw of a withdrawal mechanism (S, M, or L).

    Fills ``e_out`` with the final effective contributions and returns
    ``(status, k)`` where ``k`` is the structural backstop pool size
    (0 = floors alone suffice, -1 = no feasible pool size).
    """
    n = c.size
    fsum = _floor_profile(c, p, e_out)
    if fsum >= x - EPS_NUM:
        if enforce and pi * v - p * fsum < -EPS_PART:
            for i in range(n):
                e_out[i] = 0.0
            return ST_NULL_REJECT, 0
        return ST_FLOOR_ONLY, 0
    order = np.argsort(c, kind="mergesort")
    k, d = _min_pool(e_out, fsum, x, order)
    if k < 0:
        for i in range(n):
            e_out[i] = 0.0
        return ST_NULL_NO_POOL, -1
    pool_c = np.empty(k)
    pool_f = np.empty(k)
    for j in range(k):
        pool_c[j] = c[order[j]]
        pool_f[j] = e_out[order[j]]
    in_pool = np.zeros(n, dtype=np.bool_)
    for j in range(k):
        in_pool[order[j]] = True
    e_start = 0.0  # non-pool floor aggregate, accumulated in index order
    for i in range(n):
        if not in_pool[i]:
            e_start += e_out[i]
    ret = np.empty(k)
    if proto == PROTO_S:
        ones = np.ones(k)
        lam = _water_fill(pool_c, pool_f, ones, d, ret)
        ok = lam >= 0.0
        if ok:
            gmax = 0.0
            for j in range(k):
                # retentions at the floor are voluntary; no constraint to check
                if ret[j] <= pool_f[j]:
                    continue
                g = _gamma_star(pool_c[j], p, ret[j])
                if g > gmax:
                    gmax = g
            ok = v >= gmax - EPS_PART
    else:
        # M: highest-cost backstopper first, lowest-cost last; L: reverse.
        mv_c = np.empty(k)
        mv_f = np.empty(k)
        for j in range(k):
            src = k - 1 - j if proto == PROTO_M else j
            mv_c[j] = pool_c[src]
            mv_f[j] = pool_f[src]
        dbar = np.empty(k)
        for j in range(k):
            dbar[j] = _max_fill(mv_c[j], v, p)
        cap_after = np.empty(k)
        tail = 0.0
        for j in range(k - 1, -1, -1):
            cap_after[j] = tail
            tail += dbar[j]
        mv_e = np.empty(k)
        agg = _chain(mv_c, mv_f, dbar, cap_after, x, e_start, mv_e)
        ok = agg >= x - EPS_NUM
        for j in range(k):
            src = k - 1 - j if proto == PROTO_M else j
            ret[src] = mv_e[j]
    if ok and enforce:
        tot = e_start
        for j in range(k):
            tot += ret[j]
        ok = pi * v - p * tot >= -EPS_PART
    if not ok:
        for i in range(n):
            e_out[i] = 0.0
        return ST_NULL_REJECT, k
    for j in range(k):
        e_out[order[j]] = ret[j]
    return ST_SUCCESS, k


def _accept_or_fallback(c_true, p, v, g):
    """Stage-2 retention of a user assigned ``g`` when costs were observed
    with noise: keep the assignment iff the provision gain covers the
    incremental cost at the true type, else withdraw toward the true floor
    (never above the assignment).  Assignments at or below the true floor
    are kept voluntarily."""
    f = p / c_true
    if f > 1.0:
        f = 1.0
    if g <= f:
        return g
    if v >= _gamma_star(c_true, p, g) - EPS_PART:
        return g
    return f


def _withdrawal_draw_noisy(c_true, c_obs, x, p, v, pi, enforce, proto, e_out):
    """One draw where the plan is built from noisy cost observations.

    The pool, mover order, targets, and announced capacities all come from
    ``c_obs``; accept/withdraw decisions and fill capacities use ``c_true``.
    A failed provision keeps the retained contributions (the null-assignment
    guarantee does not survive observation noise).
    """
    n = c_true.size
    f_obs = np.empty(n)
    fsum_obs = _floor_profile(c_obs, p, f_obs)
    if fsum_obs >= x - EPS_NUM:
        if enforce and pi * v - p * fsum_obs < -EPS_PART:
            for i in range(n):
                e_out[i] = 0.0
            return ST_NULL_REJECT, 0
        agg = 0.0
        for i in range(n):
            e = _accept_or_fallback(c_true[i], p, v, f_obs[i])
            e_out[i] = e
            agg += e
        if agg >= x - EPS_NUM:
            return ST_FLOOR_ONLY, 0
        return ST_STAGE2_FAIL, 0
    order = np.argsort(c_obs, kind="mergesort")
    k, d = _min_pool(f_obs, fsum_obs, x, order)
    if k < 0:
        for i in range(n):
            e_out[i] = 0.0
        return ST_NULL_NO_POOL, -1
    pool_c = np.empty(k)
    pool_f = np.empty(k)
    for j in range(k):
        pool_c[j] = c_obs[order[j]]
        pool_f[j] = f_obs[order[j]]
    in_pool = np.zeros(n, dtype=np.bool_)
    for j in range(k):
        in_pool[order[j]] = True
    e_start_obs = 0.0
    for i in range(n):
        if not in_pool[i]:
            e_start_obs += f_obs[i]
    ret = np.empty(k)
    if proto == PROTO_S:
        ones = np.ones(k)
        lam = _water_fill(pool_c, pool_f, ones, d, ret)
        ok = lam >= 0.0
        if ok:
            gmax = 0.0
            for j in range(k):
                if ret[j] <= pool_f[j]:
                    continue
                g = _gamma_star(pool_c[j], p, ret[j])
                if g > gmax:
                    gmax = g
            ok = v >= gmax - EPS_PART
    else:
        mv_c = np.empty(k)
        mv_f = np.empty(k)
        for j in range(k):
            src = k - 1 - j if proto == PROTO_M else j
            mv_c[j] = pool_c[src]
            mv_f[j] = pool_f[src]
        dbar = np.empty(k)
        for j in range(k):
            dbar[j] = _max_fill(mv_c[j], v, p)
        cap_after = np.empty(k)
        tail = 0.0
        for j in range(k - 1, -1, -1):
            cap_after[j] = tail
            tail += dbar[j]
        mv_e = np.empty(k)
        agg = _chain(mv_c, mv_f, dbar, cap_after, x, e_start_obs, mv_e)
        ok = agg >= x - EPS_NUM
        for j in range(k):
            src = k - 1 - j if proto == PROTO_M else j
            ret[src] = mv_e[j]
    if ok and enforce:
        tot = e_start_obs
        for j in range(k):
            tot += ret[j]
        ok = pi * v - p * tot >= -EPS_PART
    if not ok:
        for i in range(n):
            e_out[i] = 0.0
        return ST_NULL_REJECT, k
    # Stage 2 with true costs.  Non-pool users hold their observed-floor
    # assignments subject to the acceptance rule.
    agg = 0.0
    for i in range(n):
        if not in_pool[i]:
            e = _accept_or_fallback(c_true[i], p, v, f_obs[i])
            e_out[i] = e
            agg += e
    if proto == PROTO_S:
        for j in range(k):
            i = order[j]
            e = _accept_or_fallback(c_true[i], p, v, ret[j])
            e_out[i] = e
            agg += e
    else:
        # The withdrawal subgame itself is played on true costs: the noisy
        # signals fixed the pool and the mover order, but each mover observes
        # the running aggregate and best-responds with its true type.  Once
        # the residual exceeds what the remaining movers can truly fill, the
        # chain is dead and everyone falls back to their floor.
        dbar_true_mv = np.empty(k)
        f_true_mv = np.empty(k)
        for j in range(k):
            src = k - 1 - j if proto == PROTO_M else j
            ct = c_true[order[src]]
            dbar_true_mv[j] = _max_fill(ct, v, p)
            f = p / ct
            if f > 1.0:
                f = 1.0
            f_true_mv[j] = f
        cap_after = np.empty(k)
        tail = 0.0
        for j in range(k - 1, -1, -1):
            cap_after[j] = tail
            tail += dbar_true_mv[j]
        doomed = False
        for j in range(k):
            src = k - 1 - j if proto == PROTO_M else j
            i = order[src]
            if doomed:
                e = f_true_mv[j]
            else:
                e = x - agg - cap_after[j]
                if e > dbar_true_mv[j] + EPS_NUM:
                    doomed = True
                    e = f_true_mv[j]
                elif e < f_true_mv[j]:
                    e = f_true_mv[j]
                elif e > dbar_true_mv[j]:
                    e = dbar_true_mv[j]
            e_out[i] = e
            agg += e
    if agg >= x - EPS_NUM:
        return ST_SUCCESS, k
    return ST_STAGE2_FAIL, k


def _c_draw(c, x, p, v, a_star, g_tilde, has_cutoff, e_out):
    """One draw of the subsidy-only mechanism under a selected cutoff."""
    fsum = _floor_profile(c, p, e_out)
    if fsum >= x - EPS_NUM:
        return True
    if has_cutoff:
        s = 0.0
        for i in range(c.size):
            if c[i] <= a_star:
                e_out[i] = g_tilde
            s += e_out[i]
        return s >= x - EPS_NUM
    return False


def _draw_stats(c, e, x, p, v, success):
    """Aggregate (sum_e, subsidy, privacy, welfare) for one contribution profile."""
    se = 0.0
    priv = 0.0
    for i in range(c.size):
        se += e[i]
        priv += c[i] * e[i] * e[i] / 2.0
    welfare = (c.size * v if success else 0.0) - priv
    return se, p * se, priv, welfare


def _eval_cell_withdrawal(costs, obs, x, p, v, pi, enforce, proto, noisy,
                          succ, ks, welf, subs, priv, fail_contrib,
                          e_rec, pay_rec):
    """Evaluate one withdrawal mechanism on every draw of a cell.

    ``obs`` is ignored unless ``noisy``.  ``e_rec`` / ``pay_rec`` are filled
    only when sized (n_mc, n); pass empty arrays to skip recording.
    """
    n_mc, n = costs.shape
    e = np.empty(n)
    for r in range(n_mc):
        if noisy:
            st, k = _withdrawal_draw_noisy(costs[r], obs[r], x, p, v, pi,
                                           enforce, proto, e)
        else:
            st, k = _withdrawal_draw(costs[r], x, p, v, pi, enforce, proto, e)
        s = st == ST_FLOOR_ONLY or st == ST_SUCCESS
        se, sub, pv, w = _draw_stats(costs[r], e, x, p, v, s)
        succ[r] = 1 if s else 0
        ks[r] = k
        welf[r] = w
        subs[r] = sub
        priv[r] = pv
        fail_contrib[r] = 1 if (not s and (sub > 0.0 or pv > 0.0)) else 0
        if e_rec.shape[0] == n_mc:
            for i in range(n):
                e_rec[r, i] = e[i]
        if pay_rec.shape[0] == n_mc:
            vb = v if s else 0.0
            for i in range(n):
                pay_rec[r, i] = vb + p * e[i] - costs[r, i] * e[i] * e[i] / 2.0


def _eval_cell_c(costs, x, p, v, a_star, g_tilde, has_cutoff,
                 succ, welf, subs, priv, fail_contrib, e_rec, pay_rec):
    """Evaluate the subsidy-only mechanism on every draw of a cell."""
    n_mc, n = costs.shape
    e = np.empty(n)
    for r in range(n_mc):
        s = _c_draw(costs[r], x, p, v, a_star, g_tilde, has_cutoff, e)
        se, sub, pv, w = _draw_stats(costs[r], e, x, p, v, s)
        succ[r] = 1 if s else 0
        welf[r] = w
        subs[r] = sub
        priv[r] = pv
        fail_contrib[r] = 1 if (not s and (sub > 0.0 or pv > 0.0)) else 0
        if e_rec.shape[0] == n_mc:
            for i in range(n):
                e_rec[r, i] = e[i]
        if pay_rec.shape[0] == n_mc:
            vb = v if s else 0.0
            for i in range(n):
                pay_rec[r, i] = vb + p * e[i] - costs[r, i] * e[i] * e[i] / 2.0


def _eval_invariant_batch(costs, lens, xs, ps, vs, counters):
    """Protocol invariant sweep over heterogeneous instances.

    Checks, per instance: S success implies M success; L success implies M
    success; pool size <= 1 implies S/M/L agree elementwise; and S is never
    costlier than M when both succeed.  Violation counts are accumulated
    into ``counters`` (length 4).
    """
    n_inst = lens.size
    for i in range(n_inst):
        n = lens[i]
        c = costs[i, :n].copy()
        x = xs[i]
        p = ps[i]
        v = vs[i]
        e_s = np.empty(n)
        e_m = np.empty(n)
        e_l = np.empty(n)
        st_s, k = _withdrawal_draw(c, x, p, v, 1.0, False, PROTO_S, e_s)
        st_m, _ = _withdrawal_draw(c, x, p, v, 1.0, False, PROTO_M, e_m)
        st_l, _ = _withdrawal_draw(c, x, p, v, 1.0, False, PROTO_L, e_l)
        s_s = st_s == ST_FLOOR_ONLY or st_s == ST_SUCCESS
        s_m = st_m == ST_FLOOR_ONLY or st_m == ST_SUCCESS
        s_l = st_l == ST_FLOOR_ONLY or st_l == ST_SUCCESS
        if s_s and not s_m:
            counters[0] += 1
        if s_l and not s_m:
            counters[1] += 1
        if k <= 1:
            same = s_s == s_m and s_m == s_l
            if same:
                for j in range(n):
                    if abs(e_s[j] - e_m[j]) > 1e-12 or abs(e_s[j] - e_l[j]) > 1e-12:
                        same = False
                        break
            if not same:
                counters[2] += 1
        if s_s and s_m:
            pc_s = 0.0
            pc_m = 0.0
            for j in range(n):
                pc_s += c[j] * e_s[j] * e_s[j] / 2.0
                pc_m += c[j] * e_m[j] * e_m[j] / 2.0
            if pc_s > pc_m + EPS_NUM:
                counters[3] += 1


def _select_backend() -> str:
    env = os.environ.get("THRESHOLD_MECH_BACKEND", "").strip().lower()
    if env in ("", "auto"):
        try:
            import numba  # noqa: F401
        except ImportError:
            return "numpy"
        return "numba"
    if env == "numba":
        import numba  # noqa: F401  (raise loudly if unavailable)

        return "numba"
    if env in ("numpy", "python"):
        return "numpy"
    raise ValueError(
        f"THRESHOLD_MECH_BACKEND={env!r} not understood (use 'numba' or 'numpy')"
    )


BACKEND = _select_backend()

if BACKEND == "numba":
    from numba import njit

    _jit = njit(cache=True, nogil=True)
    _floor_profile = _jit(_floor_profile)
    _gamma_star = _jit(_gamma_star)
    _max_fill = _jit(_max_fill)
    _water_fill = _jit(_water_fill)
    _min_pool = _jit(_min_pool)
    _chain = _jit(_chain)
    _withdrawal_draw = _jit(_withdrawal_draw)
    _accept_or_fallback = _jit(_accept_or_fallback)
    _withdrawal_draw_noisy = _jit(_withdrawal_draw_noisy)
    _c_draw = _jit(_c_draw)
    _draw_stats = _jit(_draw_stats)
    _eval_cell_withdrawal = _jit(_eval_cell_withdrawal)
    _eval_cell_c = _jit(_eval_cell_c)
    _eval_invariant_batch = _jit(_eval_invariant_batch)
