"""Pure-numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``CNNEQ_PURE_PYTHON=1`` is set. Signatures match the extension exactly.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, k, stride, n_out):
    half = (k - 1) // 2
    # right pad covers the last strided window
    right = max(0, (n_out - 1) * stride + k - half - x.shape[1])
    xp = np.pad(x, ((0, 0), (half, right)))
    return sliding_window_view(xp, k, axis=1)[:, : (n_out - 1) * stride + 1 : stride, :]


def conv1d_forward(x, w, stride):
    """Centered strided cross-correlation with zero padding.

    ``y[o, j] = sum_i sum_k x[i, j*stride + k - (K-1)//2] * w[o, i, k]``
    with ``n_out = n_in // stride``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    n_out = x.shape[1] // stride
    cols = _windows(x, w.shape[2], stride, n_out)
    return np.einsum("ijk,oik->oj", cols, w)


def conv1d_backward(x, w, gy, stride):
    """Gradients of :func:`conv1d_forward` w.r.t. input and kernel."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    c_in, n_in = x.shape
    k = w.shape[2]
    half = (k - 1) // 2
    n_out = gy.shape[1]
    cols = _windows(x, k, stride, n_out)
    gw = np.einsum("oj,ijk->oik", gy, cols)
    gcols = np.einsum("oj,oik->ijk", gy, w)
    right = max(0, (n_out - 1) * stride + k - half - n_in)
    gxp = np.zeros((c_in, n_in + half + right))
    span = (n_out - 1) * stride + 1
    for kk in range(k):
        gxp[:, kk : kk + span : stride] += gcols[:, :, kk]
    return gxp[:, half : half + n_in], gw


def queue_departures(arrivals, width, latency, service):
    """Departure cycles of words leaving a rate-limited in-order port.

    Word ``k`` departs at
    ``max(arrivals[k] + latency, dep[k-1], dep[k-width] + service)``:
    at most ``width`` words leave per ``service`` cycles, in order.
    """
    arr = np.asarray(arrivals, dtype=np.int64)
    n = arr.shape[0]
    dep = np.empty(n, dtype=np.int64)
    a = arr.tolist()
    d = [0] * n
    prev = -(1 << 62)
    for i in range(n):
        t = a[i] + latency
        if t < prev:
            t = prev
        if i >= width:
            s = d[i - width] + service
            if t < s:
                t = s
        d[i] = t
        prev = t
    dep[:] = d
    return dep
