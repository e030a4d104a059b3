import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnneq import _kernels_py, kernels
from oracles import conv_direct

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="extension not built")


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3), st.integers(1, 3), st.sampled_from([1, 3, 5, 9]), st.integers(1, 4), st.integers(1, 12), st.integers(0, 2**31)
)
def test_python_conv_matches_oracle(ci, co, k, stride, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(ci, n * stride))
    w = rng.normal(size=(co, ci, k))
    np.testing.assert_allclose(_kernels_py.conv1d_forward(x, w, stride), conv_direct(x, w, stride), atol=1e-12)


@compiled
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([1, 3, 9, 15]), st.integers(1, 8), st.integers(1, 20), st.integers(0, 2**31))
def test_backends_agree(ci, co, k, stride, n, seed):
    from cnneq import _kernels

    rng = np.random.default_rng(seed)
    x = rng.normal(size=(ci, n * stride))
    w = rng.normal(size=(co, ci, k))
    gy = rng.normal(size=(co, n))
    np.testing.assert_allclose(_kernels.conv1d_forward(x, w, stride), _kernels_py.conv1d_forward(x, w, stride), atol=1e-12)
    a = _kernels.conv1d_backward(x, w, gy, stride)
    b = _kernels_py.conv1d_backward(x, w, gy, stride)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=60), st.integers(1, 4), st.integers(0, 3), st.integers(1, 3))
def test_queue_departures(arr, width, latency, service):
    arr = np.sort(np.array(arr, dtype=np.int64))
    dep = _kernels_py.queue_departures(arr, width, latency, service)
    # reference: item i can leave when it has arrived and the server slot has freed up
    ref = []
    slots = []
    for a in arr:
        t = a + latency
        if len(slots) >= width:
            t = max(t, slots[-width] + service)
        if ref:
            t = max(t, ref[-1])
        ref.append(t)
        slots.append(t)
    if service == 1:
        np.testing.assert_array_equal(dep, ref)
    assert np.all(dep >= arr + latency) and np.all(np.diff(dep) >= 0)
    if kernels.BACKEND == "cython":
        from cnneq import _kernels

        np.testing.assert_array_equal(_kernels.queue_departures(arr, width, latency, service), dep)
