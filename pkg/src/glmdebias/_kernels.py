"""Numba-compiled inner loops.

Three cyclic coordinate-descent kernels, all deterministic (single thread,
fixed visit order, IEEE arithmetic):

* ``weighted_lasso_cd``: penalized weighted least squares, used inside the
  IRLS outer loop. Column 0 may be left unpenalized.
* ``nodewise_path_cd``: lasso path of one column regressed on the others,
  expressed purely through the Gram matrix (no data pass per sweep).
* ``qp_dual_cd``: coordinate descent on the dual of the inverse-row
  quadratic program with a sup-norm constraint of radius ``mu``.

Each kernel alternates full cyclic sweeps with refinement sweeps over the
currently active (nonzero) coordinates; convergence is declared only when
a full sweep moves no coordinate by more than ``tol``, so the active-set
shortcut never changes the solution, only the visit schedule.

All kernels mutate their state arguments in place and return sweep counts
so callers can enforce iteration caps.
"""

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@numba.njit(cache=True)
def weighted_lasso_cd(xt, w, rw, xi, vj, lam, unpen, tol, max_sweeps, xw):
    """Cyclic CD for (1/2n) sum_i w_i (z_i - x_i'xi)^2 + lam sum_{j!=unpen} |xi_j|.

    ``xt`` is the transposed design (p+1, n); ``rw`` carries the weighted
    working residual w * (z - X xi), which for the IRLS subproblem equals
    the raw score residual y - b_dot(a); ``vj`` holds the curvatures
    (1/n) sum_i w_i x_ij^2. ``rw`` and ``xi`` are updated in place.
    ``xw`` is caller-provided scratch with the shape of ``xt`` that holds
    square-root-weighted rows during Gram builds. Returns the sweep count.

    Full sweeps run in residual form (one data pass per coordinate);
    refinement between full sweeps runs against the weighted Gram block of
    the active set. Gram columns are computed lazily, once per coordinate
    per call, so refinement sweeps cost O(|active|^2), not O(|active| n).
    """
    p, n = xt.shape
    inv_n = 1.0 / n
    gram = np.empty((p, p))  # lazily filled; valid for this call's weights
    cached = np.zeros(p, dtype=np.bool_)
    weighted = np.zeros(p, dtype=np.bool_)  # xw row j holds sqrt(w) * xt[j]
    members = np.empty(p, dtype=np.int64)
    n_mem = 0
    act = np.empty(p, dtype=np.int64)
    q = np.empty(p)
    start = np.empty(p)
    s = np.empty(p)
    sw = np.sqrt(w)
    sweeps = 0
    while sweeps < max_sweeps:
        # Full residual-form sweep over every coordinate.
        max_delta = 0.0
        for j in range(p):
            v = vj[j]
            if v <= 0.0:
                continue
            old = xi[j]
            acc = 0.0
            for i in range(n):
                acc += xt[j, i] * rw[i]
            rho = v * old + acc * inv_n
            if j == unpen:
                new = rho / v
            else:
                new = _soft(rho, lam) / v
            d = new - old
            if d != 0.0:
                for i in range(n):
                    rw[i] -= d * w[i] * xt[j, i]
                xi[j] = new
                ad = abs(d)
                if ad > max_delta:
                    max_delta = ad
        sweeps += 1
        if max_delta < tol:
            return sweeps
        # Collect the active set and complete its Gram block.
        na = 0
        for j in range(p):
            if xi[j] != 0.0 or j == unpen:
                act[na] = j
                na += 1
        for t in range(na):
            j = act[t]
            if not cached[j]:
                if not weighted[j]:
                    for i in range(n):
                        xw[j, i] = sw[i] * xt[j, i]
                    weighted[j] = True
                for u in range(n_mem):
                    k = members[u]
                    acc = 0.0
                    for i in range(n):
                        acc += xw[j, i] * xw[k, i]
                    gram[j, k] = acc * inv_n
                    gram[k, j] = gram[j, k]
                acc = 0.0
                for i in range(n):
                    acc += xw[j, i] * xw[j, i]
                gram[j, j] = acc * inv_n
                members[n_mem] = j
                n_mem += 1
                cached[j] = True
        for t in range(na):
            j = act[t]
            acc = 0.0
            for i in range(n):
                acc += xt[j, i] * rw[i]
            q[t] = acc * inv_n
            start[t] = xi[j]
            s[t] = 0.0  # s_t = sum_u gram[act_t, act_u] (xi[act_u] - start_u)
        # Gram-phase refinement of the active block (inactive frozen).
        while sweeps < max_sweeps:
            act_delta = 0.0
            for t in range(na):
                j = act[t]
                g = gram[j, j]
                if g <= 0.0:
                    continue
                old = xi[j]
                rho = q[t] - s[t] + g * old
                if j == unpen:
                    new = rho / g
                else:
                    new = _soft(rho, lam) / g
                d = new - old
                if d != 0.0:
                    for u in range(na):
                        s[u] += d * gram[act[u], j]
                    xi[j] = new
                    ad = abs(d)
                    if ad > act_delta:
                        act_delta = ad
            sweeps += 1
            if act_delta < tol:
                break
        # Re-sync the residual with the refinement moves.
        for t in range(na):
            j = act[t]
            d = xi[j] - start[t]
            if d != 0.0:
                for i in range(n):
                    rw[i] -= d * w[i] * xt[j, i]
    return sweeps


@numba.njit(cache=True, inline="always")
def _gram_update(gram, s, gamma, lam, j, m):
    g = gram[m, m]
    if g <= 0.0:
        return 0.0
    old = gamma[m]
    rho = gram[m, j] - s[m] + g * old
    new = _soft(rho, lam) / g
    d = new - old
    if d != 0.0:
        k = gram.shape[0]
        for q in range(k):
            s[q] += d * gram[q, m]
        gamma[m] = new
    return abs(d)


@numba.njit(cache=True)
def nodewise_path_cd(gram, j, grid, gammas, tol, max_sweeps):
    """Warm-started lasso path of column j on the remaining columns.

    ``gram`` is X'X/n of the full design; coordinate j itself is frozen at
    zero so no submatrix copies are needed. ``gammas`` (len(grid), k)
    receives the solution at each penalty level, path descending.
    Returns total sweeps across the path.
    """
    k = gram.shape[0]
    gamma = np.zeros(k)
    s = np.zeros(k)  # s = gram @ gamma, maintained incrementally
    active = np.zeros(k, dtype=np.bool_)
    total = 0
    for l in range(grid.shape[0]):
        lam = grid[l]
        sweeps = 0
        while sweeps < max_sweeps:
            max_delta = 0.0
            for m in range(k):
                if m == j:
                    continue
                d = _gram_update(gram, s, gamma, lam, j, m)
                if d > max_delta:
                    max_delta = d
                active[m] = gamma[m] != 0.0
            sweeps += 1
            if max_delta < tol:
                break
            while sweeps < max_sweeps:
                act_delta = 0.0
                for m in range(k):
                    if m == j or not active[m]:
                        continue
                    d = _gram_update(gram, s, gamma, lam, j, m)
                    if d > act_delta:
                        act_delta = d
                sweeps += 1
                if act_delta < tol:
                    break
        total += sweeps
        for m in range(k):
            gammas[l, m] = gamma[m]
    return total


@numba.njit(cache=True, inline="always")
def _dual_update(sigma, s, w, mu, target, m):
    g = sigma[m, m]
    if g <= 0.0:
        return 0.0
    old = w[m]
    lin = s[m] - g * old
    if m == target:
        lin += 1.0
    new = _soft(-lin, mu) / g
    d = new - old
    if d != 0.0:
        k = sigma.shape[0]
        for q in range(k):
            s[q] += d * sigma[q, m]
        w[m] = new
    return abs(d)


@numba.njit(cache=True)
def qp_dual_cd(sigma, target, mu, w, s, tol, max_sweeps):
    """CD on min_w  (1/2) w' sigma w + w[target] + mu * ||w||_1.

    This is the dual of the constrained inverse-row program; the primal
    solution is -w. ``s`` carries sigma @ w and both ``w`` and ``s`` are
    updated in place. Returns (sweeps, converged flag).
    """
    k = sigma.shape[0]
    active = np.zeros(k, dtype=np.bool_)
    sweeps = 0
    while sweeps < max_sweeps:
        max_delta = 0.0
        for m in range(k):
            d = _dual_update(sigma, s, w, mu, target, m)
            if d > max_delta:
                max_delta = d
            active[m] = w[m] != 0.0
        sweeps += 1
        if max_delta < tol:
            return sweeps, True
        while sweeps < max_sweeps:
            act_delta = 0.0
            for m in range(k):
                if not active[m]:
                    continue
                d = _dual_update(sigma, s, w, mu, target, m)
                if d > act_delta:
                    act_delta = d
            sweeps += 1
            if act_delta < tol:
                break
    return sweeps, False
