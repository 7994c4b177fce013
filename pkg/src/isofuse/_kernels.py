"""Numerical kernels behind the solvers.

Plain-Python implementations that are JIT-compiled with numba when it is
importable (the functions are rebound in place, so intra-kernel calls pick
up the compiled versions). Everything here works on bare float64/int64
arrays; the public modules own validation and object plumbing.

All kernels are pure functions of their inputs and hold no global state,
so they are safe to call from multiple threads or processes.
"""

from __future__ import annotations

import numpy as np


def pava(y, w):
    """Weighted least-squares isotonic fit on a chain (non-decreasing).

    Classic pool-adjacent-violators with a block stack; exact minimizer of
    sum w_i (y_i - f_i)^2 over non-decreasing f. Weights must be positive.
    """
    n = y.shape[0]
    out = np.empty(n)
    if n == 0:
        return out
    bv = np.empty(n)
    bw = np.empty(n)
    bc = np.empty(n, np.int64)
    nb = 0
    for i in range(n):
        v = y[i]
        wt = w[i]
        cnt = 1
        while nb > 0 and bv[nb - 1] > v:
            v = (bw[nb - 1] * bv[nb - 1] + wt * v) / (bw[nb - 1] + wt)
            wt += bw[nb - 1]
            cnt += bc[nb - 1]
            nb -= 1
        bv[nb] = v
        bw[nb] = wt
        bc[nb] = cnt
        nb += 1
    j = 0
    for b in range(nb):
        for _ in range(bc[b]):
            out[j] = bv[b]
            j += 1
    return out


def pava_blocks(y, w):
    """PAVA block decomposition: (values, weights, sizes, count).

    Same pooling as :func:`pava` but returns the level-set blocks instead
    of the expanded fit. Arrays are length n; only the first ``nb`` entries
    are meaningful.
    """
    n = y.shape[0]
    bv = np.empty(n)
    bw = np.empty(n)
    bc = np.empty(n, np.int64)
    nb = 0
    for i in range(n):
        v = y[i]
        wt = w[i]
        cnt = 1
        while nb > 0 and bv[nb - 1] > v:
            v = (bw[nb - 1] * bv[nb - 1] + wt * v) / (bw[nb - 1] + wt)
            wt += bw[nb - 1]
            cnt += bc[nb - 1]
            nb -= 1
        bv[nb] = v
        bw[nb] = wt
        bc[nb] = cnt
        nb += 1
    return bv, bw, bc, nb


def wsse(y, w, f):
    """Weighted sum of squared errors, Kahan-compensated."""
    s = 0.0
    comp = 0.0
    for i in range(y.shape[0]):
        d = y[i] - f[i]
        term = w[i] * d * d - comp
        t = s + term
        comp = (t - s) - term
        s = t
    return s


def tied_chain(yk, wk, ik, yp, wp, ip):
    """Exactly solve two chain-isotonic problems tied to a common value.

    Function k has chain data ``(yk, wk)`` in increasing design order with
    the tied node at position ``ik`` (weight may be zero when the point is
    unobserved for k); likewise for p. The constraint is
    fit_k[ik] == fit_p[ip] == c.

    Given c, the segments left of the tie solve a c-bounded-above isotonic
    problem whose solution is the unbounded fit clipped at c, and the right
    segments are clipped from below. The resulting cost is convex piecewise
    quadratic in c with breakpoints at segment block values; the optimal c
    is located by a breakpoint sweep on the derivative.

    Returns ``(fit_k, fit_p, c)``.
    """
    nk = yk.shape[0]
    npp = yp.shape[0]

    lv_k, lw_k, lc_k, lnb_k = pava_blocks(yk[:ik], wk[:ik])
    rv_k, rw_k, rc_k, rnb_k = pava_blocks(yk[ik + 1:], wk[ik + 1:])
    lv_p, lw_p, lc_p, lnb_p = pava_blocks(yp[:ip], wp[:ip])
    rv_p, rw_p, rc_p, rnb_p = pava_blocks(yp[ip + 1:], wp[ip + 1:])

    # Event sweep for the stationarity condition S(c) = 0, where S is half
    # the derivative of the total cost in c. Left blocks contribute while
    # c < value, right blocks while c > value; tied-node terms always.
    ne = lnb_k + rnb_k + lnb_p + rnb_p
    ev_v = np.empty(ne)
    ev_w = np.empty(ne)
    ev_left = np.empty(ne, np.bool_)
    j = 0
    for b in range(lnb_k):
        ev_v[j] = lv_k[b]
        ev_w[j] = lw_k[b]
        ev_left[j] = True
        j += 1
    for b in range(lnb_p):
        ev_v[j] = lv_p[b]
        ev_w[j] = lw_p[b]
        ev_left[j] = True
        j += 1
    for b in range(rnb_k):
        ev_v[j] = rv_k[b]
        ev_w[j] = rw_k[b]
        ev_left[j] = False
        j += 1
    for b in range(rnb_p):
        ev_v[j] = rv_p[b]
        ev_w[j] = rw_p[b]
        ev_left[j] = False
        j += 1

    # S(c) = A*c + B on each interval. Start below every breakpoint: all
    # left blocks active, no right blocks, tied terms always on.
    a = wk[ik] + wp[ip]
    bb = -(wk[ik] * yk[ik] + wp[ip] * yp[ip])
    for e in range(ne):
        if ev_left[e]:
            a += ev_w[e]
            bb -= ev_w[e] * ev_v[e]

    order = np.argsort(ev_v, kind="mergesort")
    c = 0.0
    found = False
    for oi in range(ne):
        e = order[oi]
        root = -bb / a
        if root <= ev_v[e]:
            c = root
            found = True
            break
        if ev_left[e]:
            a -= ev_w[e]
            bb += ev_w[e] * ev_v[e]
        else:
            a += ev_w[e]
            bb -= ev_w[e] * ev_v[e]
    if not found:
        c = -bb / a

    fit_k = np.empty(nk)
    fit_p = np.empty(npp)
    j = 0
    for b in range(lnb_k):
        v = lv_k[b] if lv_k[b] < c else c
        for _ in range(lc_k[b]):
            fit_k[j] = v
            j += 1
    fit_k[ik] = c
    j = ik + 1
    for b in range(rnb_k):
        v = rv_k[b] if rv_k[b] > c else c
        for _ in range(rc_k[b]):
            fit_k[j] = v
            j += 1
    j = 0
    for b in range(lnb_p):
        v = lv_p[b] if lv_p[b] < c else c
        for _ in range(lc_p[b]):
            fit_p[j] = v
            j += 1
    fit_p[ip] = c
    j = ip + 1
    for b in range(rnb_p):
        v = rv_p[b] if rv_p[b] > c else c
        for _ in range(rc_p[b]):
            fit_p[j] = v
            j += 1
    return fit_k, fit_p, c


def binom_loglik(succ, fail, p):
    """Binomial log-likelihood kernel: sum s*log(p) + f*log(1-p).

    Uses the 0*log(0) = 0 convention; the combinatorial constant is
    omitted (callers add it when they need an absolute likelihood).
    Kahan-compensated so likelihood-ratio differences stay accurate.
    Returns -inf when a degenerate fit contradicts the counts.
    """
    s = 0.0
    comp = 0.0
    for i in range(succ.shape[0]):
        term = 0.0
        if succ[i] > 0.0:
            term += succ[i] * np.log(p[i])
        if fail[i] > 0.0:
            term += fail[i] * np.log(1.0 - p[i])
        term -= comp
        t = s + term
        comp = (t - s) - term
        s = t
    return s


def joint_objective_arrays(y, w, vmat, act, vals):
    """Penalized joint objective on aligned arrays.

    ``y``/``w``/``act``/``vals`` are (K, n); ``vmat`` is (K, K, n) symmetric
    with zero diagonal. The pair penalty carries the 1/2 factor so each
    unordered pair is counted once.
    """
    kk = y.shape[0]
    n = y.shape[1]
    s = 0.0
    comp = 0.0
    for k in range(kk):
        for i in range(n):
            if act[k, i] and w[k, i] > 0.0:
                d = y[k, i] - vals[k, i]
                term = w[k, i] * d * d - comp
                t = s + term
                comp = (t - s) - term
                s = t
        for p in range(kk):
            if p == k:
                continue
            for i in range(n):
                vv = vmat[k, p, i]
                if vv > 0.0:
                    d = vals[k, i] - vals[p, i]
                    term = 0.5 * vv * d * d - comp
                    t = s + term
                    comp = (t - s) - term
                    s = t
    return s


def bcd_chain(y, w, vmat, act, act_idx, act_cnt, vals0, ascending,
              tol, max_sweeps):
    """Block coordinate descent for the 1-D (chain) joint problem.

    One block update per function per sweep: combined weights and
    pseudo-targets reduce the update to a plain weighted isotonic problem
    on the function's active indices (which are already in chain order).

    Returns ``(vals, trace, n_sweeps, converged, worst_rise)`` where
    ``trace`` holds the objective before any sweep and after each sweep and
    ``worst_rise`` is the largest per-update objective increase observed
    (should be <= 0 up to roundoff; positive values signal a defect).
    """
    kk = y.shape[0]
    vals = vals0.copy()
    trace = np.empty(max_sweeps + 1)
    obj = joint_objective_arrays(y, w, vmat, act, vals)
    trace[0] = obj
    worst_rise = 0.0
    n_sweeps = 0
    converged = False
    for sweep in range(max_sweeps):
        max_change = 0.0
        for step in range(kk):
            k = step if ascending else kk - 1 - step
            m = act_cnt[k]
            if m == 0:
                continue
            tgt = np.empty(m)
            cw = np.empty(m)
            for c in range(m):
                i = act_idx[k, c]
                wsum = w[k, i]
                acc = w[k, i] * y[k, i]
                for p in range(kk):
                    if p == k:
                        continue
                    vv = vmat[k, p, i]
                    if vv > 0.0:
                        wsum += vv
                        acc += vv * vals[p, i]
                cw[c] = wsum
                tgt[c] = acc / wsum
            fit = pava(tgt, cw)
            for c in range(m):
                i = act_idx[k, c]
                ch = abs(fit[c] - vals[k, i])
                if ch > max_change:
                    max_change = ch
                vals[k, i] = fit[c]
            new_obj = joint_objective_arrays(y, w, vmat, act, vals)
            rise = new_obj - obj
            if rise > worst_rise:
                worst_rise = rise
            obj = new_obj
        n_sweeps = sweep + 1
        trace[n_sweeps] = obj
        if max_change < tol:
            converged = True
            break
    return vals, trace[:n_sweeps + 1], n_sweeps, converged, worst_rise


def dinic_side(nv, eu, ev, ecap, src, snk, eps):
    """Max-flow / min-cut on a small directed network (Dinic).

    Returns the boolean source side of a minimum cut (nodes reachable from
    ``src`` in the residual network). Capacities are floats; residuals at
    or below ``eps`` count as saturated.
    """
    m = eu.shape[0]
    to = np.empty(2 * m, np.int64)
    cap = np.empty(2 * m)
    for e in range(m):
        to[2 * e] = ev[e]
        cap[2 * e] = ecap[e]
        to[2 * e + 1] = eu[e]
        cap[2 * e + 1] = 0.0
    deg = np.zeros(nv + 1, np.int64)
    for e in range(m):
        deg[eu[e] + 1] += 1
        deg[ev[e] + 1] += 1
    off = np.empty(nv + 1, np.int64)
    off[0] = 0
    for i in range(nv):
        off[i + 1] = off[i] + deg[i + 1]
    pos = off[:nv].copy()
    arc = np.empty(2 * m, np.int64)
    for e in range(m):
        arc[pos[eu[e]]] = 2 * e
        pos[eu[e]] += 1
        arc[pos[ev[e]]] = 2 * e + 1
        pos[ev[e]] += 1

    level = np.empty(nv, np.int64)
    it = np.empty(nv, np.int64)
    queue = np.empty(nv, np.int64)
    path_arc = np.empty(nv, np.int64)

    while True:
        for i in range(nv):
            level[i] = -1
        level[src] = 0
        queue[0] = src
        qh = 0
        qt = 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            for a in range(off[u], off[u + 1]):
                aid = arc[a]
                v = to[aid]
                if cap[aid] > eps and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
        if level[snk] < 0:
            break
        for i in range(nv):
            it[i] = off[i]
        # iterative DFS for blocking flow
        while True:
            u = src
            depth = 0
            found = False
            while True:
                if u == snk:
                    found = True
                    break
                advanced = False
                while it[u] < off[u + 1]:
                    aid = arc[it[u]]
                    v = to[aid]
                    if cap[aid] > eps and level[v] == level[u] + 1:
                        path_arc[depth] = aid
                        depth += 1
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if advanced:
                    continue
                # dead end: retreat
                level[u] = -1
                if depth == 0:
                    break
                depth -= 1
                u = to[path_arc[depth] ^ 1]
                it[u] += 1
            if not found:
                break
            bott = np.inf
            for d in range(depth):
                if cap[path_arc[d]] < bott:
                    bott = cap[path_arc[d]]
            for d in range(depth):
                aid = path_arc[d]
                cap[aid] -= bott
                cap[aid ^ 1] += bott

    side = np.zeros(nv, np.bool_)
    side[src] = True
    queue[0] = src
    qh = 0
    qt = 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for a in range(off[u], off[u + 1]):
            aid = arc[a]
            v = to[aid]
            if cap[aid] > eps and not side[v]:
                side[v] = True
                queue[qt] = v
                qt += 1
    return side


try:  # pragma: no cover - exercised implicitly by every test run
    from numba import njit

    _jit = njit(cache=True)
    pava = _jit(pava)
    pava_blocks = _jit(pava_blocks)
    wsse = _jit(wsse)
    tied_chain = _jit(tied_chain)
    binom_loglik = _jit(binom_loglik)
    joint_objective_arrays = _jit(joint_objective_arrays)
    bcd_chain = _jit(bcd_chain)
    dinic_side = _jit(dinic_side)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
