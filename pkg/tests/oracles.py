"""Independent slow reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def nearest_point(values, constellation):
    out = []
    for v in values:
        best, best_d = None, math.inf
        for c in constellation:
            d = abs(v - c)
            if d < best_d:  # strict: first (lowest-index) point wins ties
                best, best_d = c, d
        out.append(best)
    return np.array(out)


def fir_direct(x, w, n_os):
    """Weighted sum of M centered inputs at every n_os-th sample, zero outside."""
    M = len(w)
    ms = M // 2
    n = len(x) // n_os
    y = np.zeros(n)
    for k in range(n):
        i = k * n_os
        acc = 0.0
        for m in range(-ms, ms + 1):
            if 0 <= i + m < len(x):
                acc += x[i + m] * w[m + ms]
        y[k] = acc
    return y


def volterra_direct(x, w0, w1, w2, w3, n_os):
    def get(j):
        return x[j] if 0 <= j < len(x) else 0.0

    n = len(x) // n_os
    y = np.zeros(n)
    for k in range(n):
        i = k * n_os
        acc = w0
        for M, w, order in ((len(w1), w1, 1), (len(w2), w2, 2), (len(w3), w3, 3)):
            if M == 0:
                continue
            ms = M // 2
            for idx in itertools.product(range(M), repeat=order):
                prod = 1.0
                for a in idx:
                    prod *= get(i + a - ms)
                acc += prod * w[idx]
        y[k] = acc
    return y


def conv_direct(x, w, stride):
    """y[o, j] = sum_i sum_k x[i, j*stride + k - (K-1)/2] * w[o, i, k], zeros outside."""
    c_in, n_in = x.shape
    c_out, _, K = w.shape
    h = (K - 1) // 2
    n_out = n_in // stride
    y = np.zeros((c_out, n_out))
    for o in range(c_out):
        for j in range(n_out):
            acc = 0.0
            for i in range(c_in):
                for k in range(K):
                    p = j * stride + k - h
                    if 0 <= p < n_in:
                        acc += x[i, p] * w[o, i, k]
            y[o, j] = acc
    return y


def cnn_direct(x, model, mode):
    """Loop-level CNN template: conv, (batch norm, ReLU) on hidden layers, interleaved output."""
    cfg = model.config
    strides = [cfg.v_p] + [1] * (cfg.layers - 2) + [cfg.n_os]
    h = np.asarray(x, dtype=float)[None, :]
    for l in range(cfg.layers):
        z = conv_direct(h, model.weights[l], strides[l])
        if model.biases[l] is not None:
            z = z + model.biases[l][:, None]
        if l < cfg.layers - 1:
            if mode == "train":
                mu = z.mean(axis=1)
                var = ((z - mu[:, None]) ** 2).mean(axis=1)
            else:
                mu, var = model.bn_mean[l], model.bn_var[l]
            z = (z - mu[:, None]) / np.sqrt(var[:, None] + 1e-5)
            z = model.bn_gamma[l][:, None] * z + model.bn_beta[l][:, None]
            z = np.maximum(z, 0.0)
        h = z
    out = []
    for n in range(h.shape[1]):
        for v in range(h.shape[0]):
            out.append(h[v, n])
    return np.array(out)


def dominance_front(points):
    """O(n^2) non-dominated filter on (mac, ber) pairs."""
    keep = []
    for p in points:
        dominated = any(
            q[0] <= p[0] and q[1] <= p[1] and (q[0] < p[0] or q[1] < p[1]) for q in points
        )
        if not dominated:
            keep.append(p)
    return sorted(keep)


def quantize_scalar(x, signed, ib, fb):
    """Grid rounding by exhaustive search over representable codes (small widths only)."""
    step = 2.0**-fb
    lo = -(2**ib) if signed else 0
    codes = np.arange(int(lo / step), int((2**ib) / step))
    grid = codes * step
    d = np.abs(grid - x)
    best = d.min()
    cand = grid[d == best]
    if len(cand) == 1:
        return float(cand[0])
    # tie: even code
    even = [g for g in cand if int(round(g / step)) % 2 == 0]
    return float(even[0])


def central_diff(f, p, h=1e-4):
    g = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = p[idx]
        p[idx] = old + h
        fp = f()
        p[idx] = old - h
        fm = f()
        p[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g
