"""Hot loops: forward-energy seam search, column pair costs and DTW.

Each kernel has a numba version (explicit loops) and a numpy version
(row- or diagonal-vectorised). The public names bind to one or the other
depending on ``_accel.USE_NUMBA``; both stay importable so the benchmark and
the tests can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

LUMA = np.array([0.299, 0.587, 0.114])


def luminance(img):
    """(H, W, 3) RGB -> (H, W) luma."""
    img = np.asarray(img, dtype=np.float64)
    return img[..., 0] * LUMA[0] + img[..., 1] * LUMA[1] + img[..., 2] * LUMA[2]


# -- forward-energy seam ------------------------------------------------------
#
# Transition costs for entering (i, j), with replicate padding at the borders:
#   C_U = |I(i, j+1) - I(i, j-1)|
#   C_L = C_U + |I(i-1, j) - I(i, j-1)|   (arriving from (i-1, j-1))
#   C_R = C_U + |I(i-1, j) - I(i, j+1)|   (arriving from (i-1, j+1))
# Row 0 costs C_U. Ties go to the smaller column index, both when picking the
# end of the seam and when backtracking.


@njit
def _find_seam_nb(lum):
    h, w = lum.shape
    M = np.empty((h, w))
    back = np.zeros((h, w), dtype=np.int64)
    for j in range(w):
        jl = j - 1 if j > 0 else 0
        jr = j + 1 if j < w - 1 else w - 1
        M[0, j] = abs(lum[0, jr] - lum[0, jl])
    for i in range(1, h):
        for j in range(w):
            jl = j - 1 if j > 0 else 0
            jr = j + 1 if j < w - 1 else w - 1
            left = lum[i, jl]
            right = lum[i, jr]
            up = lum[i - 1, j]
            cu = abs(right - left)
            best = np.inf
            arg = j
            if j > 0:
                best = M[i - 1, j - 1] + (cu + abs(up - left))
                arg = j - 1
            v = M[i - 1, j] + cu
            if v < best:
                best = v
                arg = j
            if j < w - 1:
                v = M[i - 1, j + 1] + (cu + abs(up - right))
                if v < best:
                    best = v
                    arg = j + 1
            M[i, j] = best
            back[i, j] = arg
    seam = np.empty(h, dtype=np.int64)
    j = 0
    for k in range(1, w):
        if M[h - 1, k] < M[h - 1, j]:
            j = k
    seam[h - 1] = j
    for i in range(h - 1, 0, -1):
        j = back[i, j]
        seam[i - 1] = j
    return seam


def _find_seam_np(lum):
    h, w = lum.shape
    cols = np.arange(w)
    left = lum[:, np.maximum(cols - 1, 0)]
    right = lum[:, np.minimum(cols + 1, w - 1)]
    cu = np.abs(right - left)
    M = np.empty((h, w))
    back = np.zeros((h, w), dtype=np.int64)
    M[0] = cu[0]
    cand = np.empty((3, w))
    for i in range(1, h):
        prev = M[i - 1]
        up = lum[i - 1]
        cand.fill(np.inf)
        cand[0, 1:] = prev[:-1] + (cu[i, 1:] + np.abs(up[1:] - left[i, 1:]))
        cand[1] = prev + cu[i]
        cand[2, :-1] = prev[1:] + (cu[i, :-1] + np.abs(up[:-1] - right[i, :-1]))
        arg = np.argmin(cand, axis=0)
        M[i] = cand[arg, cols]
        back[i] = cols + arg - 1
    seam = np.empty(h, dtype=np.int64)
    j = int(np.argmin(M[h - 1]))
    seam[h - 1] = j
    for i in range(h - 1, 0, -1):
        j = back[i, j]
        seam[i - 1] = j
    return seam


# -- column alignment -----------------------------------------------------------


@njit
def _pair_cost_nb(ls, lt):
    h, n = ls.shape
    m = lt.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for r in range(h):
                d = ls[r, i] - lt[r, j]
                s += d * d
            out[i, j] = s
    return out


def _pair_cost_np(ls, lt):
    d = ls[:, :, None] - lt[:, None, :]
    return np.sum(d * d, axis=0)


@njit
def _dtw_nb(cost):
    n, m = cost.shape
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(n):
        for j in range(m):
            best = D[i, j]
            if D[i, j + 1] < best:
                best = D[i, j + 1]
            if D[i + 1, j] < best:
                best = D[i + 1, j]
            D[i + 1, j + 1] = cost[i, j] + best
    return D[n, m]


def _dtw_np(cost):
    n, m = cost.shape
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    # sweep anti-diagonals d = i + j; every cell on one only depends on the
    # previous two
    for d in range(n + m - 1):
        i = np.arange(max(0, d - m + 1), min(d, n - 1) + 1)
        j = d - i
        best = np.minimum(np.minimum(D[i, j], D[i, j + 1]), D[i + 1, j])
        D[i + 1, j + 1] = cost[i, j] + best
    return float(D[n, m])


if USE_NUMBA:
    find_seam = _find_seam_nb
    pair_cost = _pair_cost_nb
    dtw = _dtw_nb
else:
    find_seam = _find_seam_np
    pair_cost = _pair_cost_np
    dtw = _dtw_np

BACKEND = "numba" if USE_NUMBA else "numpy"
