"""Hot numeric kernels with two interchangeable backends.

The inner loops that dominate runtime (illumination refinement, template
search, overlap-add pulse construction) are compiled with numba when it is
available. Setting the environment variable ``LUXPPG_NUMBA=0`` before import
forces the pure-numpy implementations, which produce the same results within
floating-point reassociation error. ``benchmarks/bench_kernels.py`` times the
two paths against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = os.environ.get("LUXPPG_NUMBA", "1").strip().lower()
_WANT_NUMBA = _ENV_FLAG not in ("0", "false", "off", "no")

try:  # pragma: no cover - exercised implicitly by backend selection
    if _WANT_NUMBA:
        from numba import njit

        NUMBA_ENABLED = True
    else:
        raise ImportError
except ImportError:  # numba missing or disabled
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):  # identity decorator fallback
        def wrap(func):
            return func

        if args and callable(args[0]) and len(args) == 1 and not kwargs:
            return args[0]
        return wrap


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# Weighted-Laplacian system solve (illumination refinement)
#
# Solves (Id + alpha * sum_d D_d^T diag(w_d) D_d) t = b on an H x W grid by
# Jacobi-preconditioned conjugate gradients. ``wh``/``wv`` hold the edge
# weights between horizontal / vertical pixel neighbours; the entries in the
# last column / row are unused.
# ---------------------------------------------------------------------------


def apply_grid_system_np(t, wh, wv, alpha):
    """y = (Id + alpha * L_w) t with L_w the weighted 4-neighbour Laplacian."""
    out = t.copy()
    dh = wh[:, :-1] * (t[:, :-1] - t[:, 1:])
    out[:, :-1] += alpha * dh
    out[:, 1:] -= alpha * dh
    dv = wv[:-1, :] * (t[:-1, :] - t[1:, :])
    out[:-1, :] += alpha * dv
    out[1:, :] -= alpha * dv
    return out


def _system_diagonal_np(wh, wv, alpha, shape):
    diag = np.ones(shape)
    diag[:, :-1] += alpha * wh[:, :-1]
    diag[:, 1:] += alpha * wh[:, :-1]
    diag[:-1, :] += alpha * wv[:-1, :]
    diag[1:, :] += alpha * wv[:-1, :]
    return diag


def grid_cg_solve_np(b, wh, wv, alpha, tol, max_iter):
    """CG on the grid system. Returns (solution, rel_residual, iterations)."""
    x = b.copy()
    bnorm = math.sqrt(float(np.sum(b * b)))
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    diag = _system_diagonal_np(wh, wv, alpha, b.shape)
    r = b - apply_grid_system_np(x, wh, wv, alpha)
    z = r / diag
    p = z.copy()
    rz = float(np.sum(r * z))
    rel = math.sqrt(float(np.sum(r * r))) / bnorm
    it = 0
    while rel > tol and it < max_iter:
        ap = apply_grid_system_np(p, wh, wv, alpha)
        step = rz / float(np.sum(p * ap))
        x += step * p
        r -= step * ap
        rel = math.sqrt(float(np.sum(r * r))) / bnorm
        z = r / diag
        rz_next = float(np.sum(r * z))
        p = z + (rz_next / rz) * p
        rz = rz_next
        it += 1
    return x, rel, it


@njit(cache=True)
def _grid_cg_solve_nb(b, wh, wv, alpha, tol, max_iter):  # pragma: no cover
    H, W = b.shape
    x = b.copy()
    bnorm = 0.0
    for i in range(H):
        for j in range(W):
            bnorm += b[i, j] * b[i, j]
    bnorm = math.sqrt(bnorm)
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0

    diag = np.ones_like(b)
    for i in range(H):
        for j in range(W):
            if j + 1 < W:
                diag[i, j] += alpha * wh[i, j]
            if j > 0:
                diag[i, j] += alpha * wh[i, j - 1]
            if i + 1 < H:
                diag[i, j] += alpha * wv[i, j]
            if i > 0:
                diag[i, j] += alpha * wv[i - 1, j]

    ax = np.empty_like(b)
    r = np.empty_like(b)
    z = np.empty_like(b)
    p = np.empty_like(b)
    ap = np.empty_like(b)

    _apply_grid_system_nb(x, wh, wv, alpha, ax)
    rz = 0.0
    rnorm2 = 0.0
    for i in range(H):
        for j in range(W):
            rij = b[i, j] - ax[i, j]
            r[i, j] = rij
            zij = rij / diag[i, j]
            z[i, j] = zij
            p[i, j] = zij
            rz += rij * zij
            rnorm2 += rij * rij
    rel = math.sqrt(rnorm2) / bnorm
    it = 0
    while rel > tol and it < max_iter:
        _apply_grid_system_nb(p, wh, wv, alpha, ap)
        pap = 0.0
        for i in range(H):
            for j in range(W):
                pap += p[i, j] * ap[i, j]
        step = rz / pap
        rnorm2 = 0.0
        for i in range(H):
            for j in range(W):
                x[i, j] += step * p[i, j]
                r[i, j] -= step * ap[i, j]
                rnorm2 += r[i, j] * r[i, j]
        rel = math.sqrt(rnorm2) / bnorm
        rz_next = 0.0
        for i in range(H):
            for j in range(W):
                z[i, j] = r[i, j] / diag[i, j]
                rz_next += r[i, j] * z[i, j]
        beta = rz_next / rz
        for i in range(H):
            for j in range(W):
                p[i, j] = z[i, j] + beta * p[i, j]
        rz = rz_next
        it += 1
    return x, rel, it


@njit(cache=True)
def _apply_grid_system_nb(t, wh, wv, alpha, out):  # pragma: no cover
    H, W = t.shape
    for i in range(H):
        for j in range(W):
            acc = t[i, j]
            if j + 1 < W:
                acc += alpha * wh[i, j] * (t[i, j] - t[i, j + 1])
            if j > 0:
                acc += alpha * wh[i, j - 1] * (t[i, j] - t[i, j - 1])
            if i + 1 < H:
                acc += alpha * wv[i, j] * (t[i, j] - t[i + 1, j])
            if i > 0:
                acc += alpha * wv[i - 1, j] * (t[i, j] - t[i - 1, j])
            out[i, j] = acc


def grid_cg_solve(b, wh, wv, alpha, tol, max_iter):
    if NUMBA_ENABLED:
        x, rel, it = _grid_cg_solve_nb(
            np.ascontiguousarray(b, dtype=np.float64),
            np.ascontiguousarray(wh, dtype=np.float64),
            np.ascontiguousarray(wv, dtype=np.float64),
            float(alpha),
            float(tol),
            int(max_iter),
        )
        return x, rel, it
    return grid_cg_solve_np(
        np.asarray(b, dtype=np.float64),
        np.asarray(wh, dtype=np.float64),
        np.asarray(wv, dtype=np.float64),
        float(alpha),
        float(tol),
        int(max_iter),
    )


# ---------------------------------------------------------------------------
# Normalized cross-correlation template search
# ---------------------------------------------------------------------------


def ncc_search_np(gray, template, y_prev, x_prev, radius):
    """Best (dy, dx, score) within +-radius of the previous box position.

    Score is the zero-normalized cross-correlation coefficient in [-1, 1];
    placements where either the template or the window has (near-)zero
    variance score -2 so they never beat a real match.
    """
    H, W = gray.shape
    th, tw = template.shape
    tc = template - template.mean()
    tvar = float(np.sum(tc * tc))
    best = -2.0
    best_dy = 0
    best_dx = 0
    if tvar <= 1e-12:
        return best_dy, best_dx, best
    n = th * tw
    for dy in range(-radius, radius + 1):
        yy = y_prev + dy
        if yy < 0 or yy + th > H:
            continue
        for dx in range(-radius, radius + 1):
            xx = x_prev + dx
            if xx < 0 or xx + tw > W:
                continue
            win = gray[yy : yy + th, xx : xx + tw]
            s = float(win.sum())
            wvar = float(np.sum(win * win)) - s * s / n
            if wvar <= 1e-12:
                continue
            corr = float(np.sum(win * tc)) / math.sqrt(wvar * tvar)
            if corr > best:
                best = corr
                best_dy = dy
                best_dx = dx
    return best_dy, best_dx, best


@njit(cache=True)
def _ncc_search_nb(gray, template, y_prev, x_prev, radius):  # pragma: no cover
    H, W = gray.shape
    th, tw = template.shape
    n = th * tw
    tmean = 0.0
    for a in range(th):
        for c in range(tw):
            tmean += template[a, c]
    tmean /= n
    tvar = 0.0
    for a in range(th):
        for c in range(tw):
            d = template[a, c] - tmean
            tvar += d * d
    best = -2.0
    best_dy = 0
    best_dx = 0
    if tvar <= 1e-12:
        return best_dy, best_dx, best
    for dy in range(-radius, radius + 1):
        yy = y_prev + dy
        if yy < 0 or yy + th > H:
            continue
        for dx in range(-radius, radius + 1):
            xx = x_prev + dx
            if xx < 0 or xx + tw > W:
                continue
            s = 0.0
            ss = 0.0
            cross = 0.0
            for a in range(th):
                for c in range(tw):
                    v = gray[yy + a, xx + c]
                    s += v
                    ss += v * v
                    cross += v * (template[a, c] - tmean)
            wvar = ss - s * s / n
            if wvar <= 1e-12:
                continue
            corr = cross / math.sqrt(wvar * tvar)
            if corr > best:
                best = corr
                best_dy = dy
                best_dx = dx
    return best_dy, best_dx, best


def ncc_search(gray, template, y_prev, x_prev, radius):
    if NUMBA_ENABLED:
        return _ncc_search_nb(
            np.ascontiguousarray(gray, dtype=np.float64),
            np.ascontiguousarray(template, dtype=np.float64),
            int(y_prev),
            int(x_prev),
            int(radius),
        )
    return ncc_search_np(gray, template, y_prev, x_prev, int(radius))


# ---------------------------------------------------------------------------
# POS overlap-add construction
#
# For every length-``lw`` window (hop 1) of the 3 x L trace matrix: divide
# each row by its window mean, project with the 2 x 3 matrix ``proj``,
# combine the two projected rows via the std ratio, remove the window mean
# and accumulate at the window position. Returns (signal, first_bad) where
# ``first_bad`` is the start index of the first window with a non-positive
# channel mean (-1 when all windows are fine).
# ---------------------------------------------------------------------------


def pos_overlap_add_np(c, proj, lw):
    L = c.shape[1]
    h = np.zeros(L)
    for s in range(L - lw + 1):
        win = c[:, s : s + lw]
        means = win.mean(axis=1)
        if np.any(means <= 1e-12):
            return h, s
        cn = win / means[:, None]
        s1 = proj[0, 0] * cn[0] + proj[0, 1] * cn[1] + proj[0, 2] * cn[2]
        s2 = proj[1, 0] * cn[0] + proj[1, 1] * cn[1] + proj[1, 2] * cn[2]
        sd2 = float(s2.std())
        if sd2 < 1e-12:
            hw = s1
        else:
            hw = s1 + (float(s1.std()) / sd2) * s2
        h[s : s + lw] += hw - hw.mean()
    return h, -1


@njit(cache=True)
def _pos_overlap_add_nb(c, proj, lw):  # pragma: no cover
    L = c.shape[1]
    h = np.zeros(L)
    s1 = np.empty(lw)
    s2 = np.empty(lw)
    for s in range(L - lw + 1):
        m0 = 0.0
        m1 = 0.0
        m2 = 0.0
        for k in range(lw):
            m0 += c[0, s + k]
            m1 += c[1, s + k]
            m2 += c[2, s + k]
        m0 /= lw
        m1 /= lw
        m2 /= lw
        if m0 <= 1e-12 or m1 <= 1e-12 or m2 <= 1e-12:
            return h, s
        a1 = 0.0
        a2 = 0.0
        for k in range(lw):
            r = c[0, s + k] / m0
            g = c[1, s + k] / m1
            bb = c[2, s + k] / m2
            v1 = proj[0, 0] * r + proj[0, 1] * g + proj[0, 2] * bb
            v2 = proj[1, 0] * r + proj[1, 1] * g + proj[1, 2] * bb
            s1[k] = v1
            s2[k] = v2
            a1 += v1
            a2 += v2
        a1 /= lw
        a2 /= lw
        var1 = 0.0
        var2 = 0.0
        for k in range(lw):
            var1 += (s1[k] - a1) * (s1[k] - a1)
            var2 += (s2[k] - a2) * (s2[k] - a2)
        sd1 = math.sqrt(var1 / lw)
        sd2 = math.sqrt(var2 / lw)
        if sd2 < 1e-12:
            hm = a1
            for k in range(lw):
                h[s + k] += s1[k] - hm
        else:
            ratio = sd1 / sd2
            hm = a1 + ratio * a2
            for k in range(lw):
                h[s + k] += s1[k] + ratio * s2[k] - hm
    return h, -1


def pos_overlap_add(c, proj, lw):
    if NUMBA_ENABLED:
        return _pos_overlap_add_nb(
            np.ascontiguousarray(c, dtype=np.float64),
            np.ascontiguousarray(proj, dtype=np.float64),
            int(lw),
        )
    return pos_overlap_add_np(np.asarray(c, dtype=np.float64), np.asarray(proj, dtype=np.float64), int(lw))
