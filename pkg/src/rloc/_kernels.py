"""Compiled inner loops for the windowed range constraint.

Window layout: ``ax, ay`` hold the observer's past positions in its current
frame, ``bx, by`` the peer's past positions in the peer's current frame,
``d`` the past ranges and ``dk`` the current range.  Residual ``j`` at
(theta, phi) is ``|-a_j + R(phi) b_j + dk psi(theta)| - d_j``.
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
# eigenvalue ratio below which the theta-eliminated system counts as rank one
RANK_ONE = 1e-2


@njit(cache=True)
def residuals(theta, phi, ax, ay, bx, by, d, dk):
    n = d.shape[0]
    out = np.empty(n)
    c, s = math.cos(phi), math.sin(phi)
    qx, qy = dk * math.cos(theta), dk * math.sin(theta)
    for j in range(n):
        vx = -ax[j] + c * bx[j] - s * by[j] + qx
        vy = -ay[j] + s * bx[j] + c * by[j] + qy
        out[j] = math.hypot(vx, vy) - d[j]
    return out


@njit(cache=True)
def residuals_jacobian(theta, phi, ax, ay, bx, by, d, dk):
    n = d.shape[0]
    r = np.empty(n)
    jac = np.empty((n, 2))
    c, s = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    for j in range(n):
        rbx = c * bx[j] - s * by[j]
        rby = s * bx[j] + c * by[j]
        vx = -ax[j] + rbx + dk * ct
        vy = -ay[j] + rby + dk * st
        nv = math.hypot(vx, vy)
        r[j] = nv - d[j]
        if nv > 1e-300:
            ux, uy = vx / nv, vy / nv
        else:
            ux, uy = 0.0, 0.0
        jac[j, 0] = ux * (-dk * st) + uy * (dk * ct)
        jac[j, 1] = ux * (-rby) + uy * rbx
    return r, jac


@njit(cache=True)
def grid_objective(ax, ay, bx, by, d, dk, n):
    """Sum of squared residuals on an n x n torus grid, indexed [theta, phi]."""
    m = d.shape[0]
    out = np.zeros((n, n))
    h = TWO_PI / n
    qx = np.empty(n)
    qy = np.empty(n)
    for it in range(n):
        qx[it] = dk * math.cos(it * h)
        qy[it] = dk * math.sin(it * h)
    for kp in range(n):
        c, s = math.cos(kp * h), math.sin(kp * h)
        for j in range(m):
            px = -ax[j] + c * bx[j] - s * by[j]
            py = -ay[j] + s * bx[j] + c * by[j]
            dj = d[j]
            for it in range(n):
                vx = px + qx[it]
                vy = py + qy[it]
                e = math.sqrt(vx * vx + vy * vy) - dj
                out[it, kp] += e * e
    return out


@njit(cache=True)
def grid_local_minima(g):
    """Cells no larger than their 8 torus neighbours, as (value, i, k) rows."""
    n0, n1 = g.shape
    out = np.empty((n0 * n1, 3))
    cnt = 0
    for i in range(n0):
        ip = i - 1 if i > 0 else n0 - 1
        inx = i + 1 if i < n0 - 1 else 0
        for k in range(n1):
            kp = k - 1 if k > 0 else n1 - 1
            kn = k + 1 if k < n1 - 1 else 0
            v = g[i, k]
            if (v <= g[ip, kp] and v <= g[ip, k] and v <= g[ip, kn] and v <= g[i, kp]
                    and v <= g[i, kn] and v <= g[inx, kp] and v <= g[inx, k] and v <= g[inx, kn]):
                out[cnt, 0] = v
                out[cnt, 1] = i
                out[cnt, 2] = k
                cnt += 1
    return out[:cnt]


@njit(cache=True)
def profile_seeds(ax, ay, bx, by, d, dk, m):
    """Seeds from eliminating theta.

    Squaring the constraint gives ``c_j . psi(theta) = e_j`` with
    ``c_j = R(phi) b_j - a_j``; for each sampled phi the best unit-free
    ``psi`` is solved in closed form (least squares over j).  Returned seeds
    are the local minima of the resulting 1-D residual profile plus every
    sign change / local minimum of ``|psi|^2 - 1``, so close root pairs of a
    square system are not merged.

    When the ``c_j`` nearly align (collinear motion) the least-squares system
    is close to rank one and both flip roots sit at a pole of the profile;
    at local minima of its eigenvalue ratio below ``RANK_ONE`` the two unit
    solutions of the rank-one system are seeded as well.
    """
    n = d.shape[0]
    cts = np.empty(m)
    sts = np.empty(m)
    g = np.empty(m)
    f = np.empty(m)
    ratio = np.empty(m)
    flip = np.empty((m, 2))
    cxs = np.empty(n)
    cys = np.empty(n)
    h = TWO_PI / m
    inv2dk = 0.5 / dk
    cstep, sstep = math.cos(h), math.sin(h)
    c, s = 1.0, 0.0
    for i in range(m):
        if i % 64 == 0:
            # re-anchor the rotation recurrence to bound drift
            c, s = math.cos(i * h), math.sin(i * h)
        a11 = 0.0
        a12 = 0.0
        a22 = 0.0
        b1 = 0.0
        b2 = 0.0
        for j in range(n):
            cx = -ax[j] + c * bx[j] - s * by[j]
            cy = -ay[j] + s * bx[j] + c * by[j]
            cxs[j] = cx
            cys[j] = cy
            e = (d[j] * d[j] - dk * dk - cx * cx - cy * cy) * inv2dk
            a11 += cx * cx
            a12 += cx * cy
            a22 += cy * cy
            b1 += cx * e
            b2 += cy * e
        det = a11 * a22 - a12 * a12
        lmax = 0.5 * (a11 + a22) + math.hypot(0.5 * (a11 - a22), a12)
        ratio[i] = det / (lmax * lmax) if lmax > 0.0 else 1.0
        if ratio[i] < RANK_ONE:
            if abs(a12) > 1e-300:
                nx, ny = a12, lmax - a11
            elif a11 >= a22:
                nx, ny = 1.0, 0.0
            else:
                nx, ny = 0.0, 1.0
            nn = math.hypot(nx, ny)
            nx, ny = nx / nn, ny / nn
            along = (nx * b1 + ny * b2) / lmax
            across = math.sqrt(max(0.0, 1.0 - along * along))
            flip[i, 0] = math.atan2(along * ny + across * nx, along * nx - across * ny)
            flip[i, 1] = math.atan2(along * ny - across * nx, along * nx + across * ny)
        ct, st = 1.0, 0.0
        if abs(det) < 1e-300:
            f[i] = np.inf
        else:
            ux = (a22 * b1 - a12 * b2) / det
            uy = (a11 * b2 - a12 * b1) / det
            nu = math.sqrt(ux * ux + uy * uy)
            f[i] = nu * nu - 1.0
            if nu > 0.0:
                ct, st = ux / nu, uy / nu
        cts[i] = ct
        sts[i] = st
        acc = 0.0
        qx, qy = dk * ct, dk * st
        for j in range(n):
            vx = cxs[j] + qx
            vy = cys[j] + qy
            e = math.sqrt(vx * vx + vy * vy) - d[j]
            acc += e * e
        g[i] = acc
        c, s = c * cstep - s * sstep, s * cstep + c * sstep
    picks = np.empty(m, dtype=np.int64)
    rank_one = np.empty(m, dtype=np.int64)
    cnt = 0
    cnt1 = 0
    for i in range(m):
        prv = i - 1 if i > 0 else m - 1
        nxt = i + 1 if i < m - 1 else 0
        if ((g[i] <= g[prv] and g[i] <= g[nxt])
                or (abs(f[i]) <= abs(f[prv]) and abs(f[i]) <= abs(f[nxt]))
                or (np.isfinite(f[i]) and np.isfinite(f[nxt]) and (f[i] > 0.0) != (f[nxt] > 0.0))):
            picks[cnt] = i
            cnt += 1
        if ratio[i] < RANK_ONE and ratio[i] <= ratio[prv] and ratio[i] <= ratio[nxt]:
            rank_one[cnt1] = i
            cnt1 += 1
    out = np.empty((cnt + 2 * cnt1, 2))
    for r in range(cnt):
        i = picks[r]
        out[r, 0] = math.atan2(sts[i], cts[i])
        out[r, 1] = h * i
    for r in range(cnt1):
        i = rank_one[r]
        for q in range(2):
            out[cnt + 2 * r + q, 0] = flip[i, q]
            out[cnt + 2 * r + q, 1] = h * i
    return out


@njit(cache=True)
def _normal_equations(theta, phi, ax, ay, bx, by, d, dk):
    """(cost, J^T J entries, J^T r entries) at one point, without allocating."""
    c, s = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cost = h00 = h01 = h11 = g0 = g1 = 0.0
    for j in range(d.shape[0]):
        rbx = c * bx[j] - s * by[j]
        rby = s * bx[j] + c * by[j]
        vx = -ax[j] + rbx + dk * ct
        vy = -ay[j] + rby + dk * st
        nv = math.hypot(vx, vy)
        r = nv - d[j]
        if nv > 1e-300:
            ux, uy = vx / nv, vy / nv
        else:
            ux, uy = 0.0, 0.0
        j0 = ux * (-dk * st) + uy * (dk * ct)
        j1 = ux * (-rby) + uy * rbx
        cost += r * r
        h00 += j0 * j0
        h01 += j0 * j1
        h11 += j1 * j1
        g0 += j0 * r
        g1 += j1 * r
    return cost, h00, h01, h11, g0, g1


@njit(cache=True)
def refine(theta, phi, ax, ay, bx, by, d, dk, max_iter, xtol):
    """Damped Gauss-Newton (Levenberg-Marquardt) from one seed.

    Returns (theta, phi, cost) with cost the sum of squared residuals.
    """
    cost, h00, h01, h11, g0, g1 = _normal_equations(theta, phi, ax, ay, bx, by, d, dk)
    lam = 1e-3
    for _ in range(max_iter):
        if cost < 1e-30:
            break
        accepted = False
        s0 = s1 = 0.0
        while lam < 1e12:
            m00 = h00 + lam * (h00 + 1e-12)
            m11 = h11 + lam * (h11 + 1e-12)
            det = m00 * m11 - h01 * h01
            if det <= 0.0:
                lam *= 10.0
                continue
            s0 = -(m11 * g0 - h01 * g1) / det
            s1 = -(m00 * g1 - h01 * g0) / det
            nxt = _normal_equations(theta + s0, phi + s1, ax, ay, bx, by, d, dk)
            if nxt[0] < cost:
                theta += s0
                phi += s1
                cost, h00, h01, h11, g0, g1 = nxt
                lam = max(lam * 0.2, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        if math.hypot(s0, s1) < xtol:
            break
    theta = theta % TWO_PI
    phi = phi % TWO_PI
    return theta, phi, cost


@njit(cache=True)
def refine_many(seeds, ax, ay, bx, by, d, dk, max_iter, xtol):
    out = np.empty((seeds.shape[0], 3))
    for i in range(seeds.shape[0]):
        t, p, c = refine(seeds[i, 0], seeds[i, 1], ax, ay, bx, by, d, dk, max_iter, xtol)
        out[i, 0] = t
        out[i, 1] = p
        out[i, 2] = c
    return out


@njit(cache=True)
def unique_rows(rows, same):
    """Drop rows (theta, phi, cost) within ``same`` of a better row on the torus.

    ``rows`` must be sorted by cost.
    """
    keep = np.zeros(rows.shape[0], dtype=np.bool_)
    for i in range(rows.shape[0]):
        ok = True
        for j in range(i):
            if keep[j]:
                dt = (rows[i, 0] - rows[j, 0] + math.pi) % TWO_PI - math.pi
                dp = (rows[i, 1] - rows[j, 1] + math.pi) % TWO_PI - math.pi
                if dt * dt + dp * dp <= same * same:
                    ok = False
                    break
        keep[i] = ok
    return rows[keep]


@njit(cache=True)
def find_minima(ax, ay, bx, by, d, dk, extra, grid, max_seeds, profile_samples, max_profile,
                max_iter, xtol, same):
    """Seed from grid minima, the theta-eliminated profile and ``extra``; refine; dedupe.

    Returns distinct minima as rows (theta, phi, cost), best first.
    """
    mins = grid_local_minima(grid_objective(ax, ay, bx, by, d, dk, grid))
    order = np.argsort(mins[:, 0], kind="mergesort")
    n_grid = min(order.shape[0], max_seeds)
    h = TWO_PI / grid
    if dk > 1e-9:
        prof = profile_seeds(ax, ay, bx, by, d, dk, profile_samples)
        if prof.shape[0] > max_profile:
            # a flat valley marks nearly every sample; thin evenly
            keep = np.linspace(0, prof.shape[0] - 1, max_profile).astype(np.int64)
            prof = prof[keep]
    else:
        prof = np.empty((0, 2))
    seeds = np.empty((n_grid + prof.shape[0] + extra.shape[0], 2))
    for r in range(n_grid):
        seeds[r, 0] = mins[order[r], 1] * h
        seeds[r, 1] = mins[order[r], 2] * h
    seeds[n_grid:n_grid + prof.shape[0]] = prof
    seeds[n_grid + prof.shape[0]:] = extra
    refined = refine_many(seeds, ax, ay, bx, by, d, dk, max_iter, xtol)
    refined = refined[np.argsort(refined[:, 2], kind="mergesort")]
    return unique_rows(refined, same)
