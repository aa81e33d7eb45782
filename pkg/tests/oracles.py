"""Independent brute-force references used by the unit and acceptance tests."""
import itertools
from functools import lru_cache

import numpy as np


def brute_seam(lum):
    """Enumerate every 8-connected vertical seam and pick the cheapest.

    Costs are summed top-down in the same order as a DP would, so the
    comparison can be exact. Ties go to the seam whose columns, read from
    the bottom row upwards, are lexicographically smallest.
    """
    h, w = lum.shape
    moves = np.array(list(itertools.product((-1, 0, 1), repeat=h - 1)),
                     dtype=np.int64).reshape(3 ** (h - 1), h - 1)
    starts = np.arange(w)
    cols = np.concatenate([
        np.repeat(starts, len(moves))[:, None],
        np.tile(moves, (w, 1)),
    ], axis=1).cumsum(axis=1)
    cols = cols[np.all((cols >= 0) & (cols < w), axis=1)]

    pad = np.concatenate([lum[:, :1], lum, lum[:, -1:]], axis=1)
    left, right = pad[:, :-2], pad[:, 2:]
    cu = np.abs(right - left)
    total = cu[0, cols[:, 0]].copy()
    for i in range(1, h):
        j = cols[:, i]
        step = j - cols[:, i - 1]  # +1: arrived from the upper-left
        up = lum[i - 1, j]
        c = np.where(step == 1, cu[i, j] + np.abs(up - left[i, j]),
                     np.where(step == 0, cu[i, j], cu[i, j] + np.abs(up - right[i, j])))
        total = total + c
    best = total.min()
    cand = cols[total == best]
    order = np.lexsort(cand.T)  # last key (bottom row) is primary
    return cand[order[0]], best


def dtw_paths(n, m):
    """All monotone boundary-anchored alignments of an n x m grid."""
    @lru_cache(maxsize=None)
    def paths_to(i, j):
        if i == 0 and j == 0:
            return (((0, 0),),)
        out = []
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            pi, pj = i - di, j - dj
            if pi >= 0 and pj >= 0:
                out.extend(p + ((i, j),) for p in paths_to(pi, pj))
        return tuple(out)
    return paths_to(n - 1, m - 1)


def brute_dtw(cost):
    n, m = cost.shape
    return min(sum(cost[i, j] for i, j in p) for p in dtw_paths(n, m))


def brute_warp(source_lum, target_lum):
    n, m = source_lum.shape[1], target_lum.shape[1]
    cost = np.array([[np.sum((source_lum[:, i] - target_lum[:, j]) ** 2) for j in range(m)]
                     for i in range(n)])
    return brute_dtw(cost)


def luma(img):
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


# -- straight-line network forward ------------------------------------------------


def _act(v, kind):
    return np.tanh(v) if kind == "tanh" else max(v, 0.0)


def _norm(vec):
    mu = sum(vec) / len(vec)
    var = sum((v - mu) ** 2 for v in vec) / len(vec)
    return [(v - mu) / np.sqrt(var + 1e-5) for v in vec]


def scalar_forward(params, cfg, pixels, u, h_prev, c_prev):
    """One network step for a single observation, loop by loop."""
    x = pixels.astype(np.float64) - 0.5
    for k, stride in enumerate(cfg.conv_strides):
        w, b = params[f"conv{k}.w"], params[f"conv{k}.b"]
        cout, cin = w.shape[:2]
        hin, win = x.shape[:2]
        ho, wo = (hin - 1) // stride + 1, (win - 1) // stride + 1
        y = np.zeros((ho, wo, cout))
        for oy in range(ho):
            for ox in range(wo):
                for co in range(cout):
                    s = b[co]
                    for ky in range(3):
                        for kx in range(3):
                            iy, ix = oy * stride + ky - 1, ox * stride + kx - 1
                            if 0 <= iy < hin and 0 <= ix < win:
                                for ci in range(cin):
                                    s += w[co, ci, ky, kx] * x[iy, ix, ci]
                    y[oy, ox, co] = _act(s, cfg.conv_activation)
        x = y
    vec = list(x.reshape(-1))
    for k in range(len(cfg.fc_sizes)):
        if cfg.layer_norm:
            vec = _norm(vec)
        if k == 0:
            vec = vec + list(u)
        w, b = params[f"fc{k}.w"], params[f"fc{k}.b"]
        vec = [_act(b[o] + sum(vec[i] * w[i, o] for i in range(len(vec))), cfg.fc_activation)
               for o in range(w.shape[1])]
    if cfg.layer_norm:
        vec = _norm(vec)
    n = cfg.lstm_size
    wx, wh, bl = params["lstm.wx"], params["lstm.wh"], params["lstm.b"]
    z = [bl[g] + sum(vec[i] * wx[i, g] for i in range(len(vec)))
         + sum(h_prev[i] * wh[i, g] for i in range(n)) for g in range(4 * n)]
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    h, c = np.zeros(n), np.zeros(n)
    for q in range(n):
        i_g, f_g = sig(z[q]), sig(z[n + q])
        g_g, o_g = np.tanh(z[2 * n + q]), sig(z[3 * n + q])
        c[q] = f_g * c_prev[q] + i_g * g_g
        h[q] = o_g * np.tanh(c[q])
    value = params["value.b"][0] + sum(h[i] * params["value.w"][i, 0] for i in range(n))
    logits = np.array([params["policy.b"][a] + sum(h[i] * params["policy.w"][i, a]
                                                   for i in range(n))
                       for a in range(params["policy.w"].shape[1])])
    e = np.exp(logits - logits.max())
    return e / e.sum(), value, h, c
