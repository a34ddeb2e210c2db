"""Parity between the compiled kernels and the pure-NumPy fallback."""

import numpy as np
import pytest

from msvar import _kernels
from msvar._kernels import _ref


def _random_inputs(rng, T, M):
    table = rng.normal(size=(T, M)) - 1.0
    trans = rng.dirichlet(np.ones(M), size=M)
    init = rng.dirichlet(np.ones(M))
    return np.ascontiguousarray(table), np.ascontiguousarray(trans), init


@pytest.mark.parametrize("T,M", [(5, 2), (40, 3), (200, 5)])
def test_filter_parity(rng, T, M):
    table, trans, init = _random_inputs(rng, T, M)
    pred_a, filt_a, ll_a, fail_a = _kernels.filter_forward(table, trans, init)
    pred_b, filt_b, ll_b, fail_b = _ref.filter_forward(table, trans, init)
    assert fail_a == fail_b == -1
    np.testing.assert_allclose(pred_a, pred_b, atol=1e-13)
    np.testing.assert_allclose(filt_a, filt_b, atol=1e-13)
    assert abs(ll_a - ll_b) < 1e-10


@pytest.mark.parametrize("T,M", [(5, 2), (40, 3), (200, 5)])
def test_smoother_parity(rng, T, M):
    table, trans, init = _random_inputs(rng, T, M)
    pred, filt, _, _ = _ref.filter_forward(table, trans, init)
    pred = np.ascontiguousarray(pred)
    filt = np.ascontiguousarray(filt)
    sm_a, pw_a, nf_a = _kernels.smooth_backward(pred, filt, trans)
    sm_b, pw_b, nf_b = _ref.smooth_backward(pred, filt, trans)
    assert nf_a == nf_b == 0
    np.testing.assert_allclose(sm_a, sm_b, atol=1e-13)
    np.testing.assert_allclose(pw_a, pw_b, atol=1e-13)


def test_sample_path_parity(rng):
    table, trans, init = _random_inputs(rng, 300, 4)
    _, filt, _, _ = _ref.filter_forward(table, trans, init)
    filt = np.ascontiguousarray(filt)
    for _ in range(5):
        u = rng.random(300)
        a = _kernels.sample_path(filt, trans, u)
        b = _ref.sample_path(filt, trans, u)
        np.testing.assert_array_equal(a, b)


def test_filter_underflow_flag():
    # all predicted mass sits on a regime whose scaled density underflows
    table = np.array([[0.0, 0.0], [-2000.0, 0.0]])
    trans = np.eye(2)
    init = np.array([1.0, 0.0])
    for impl in (_kernels, _ref):
        pred, filt, ll, fail = impl.filter_forward(
            np.ascontiguousarray(table), np.ascontiguousarray(trans), init
        )
        assert fail == 1


def test_read_only_inputs_accepted():
    table = np.zeros((4, 2))
    trans = np.full((2, 2), 0.5)
    init = np.full(2, 0.5)
    for arr in (table, trans, init):
        arr.flags.writeable = False
    pred, filt, ll, fail = _kernels.filter_forward(table, trans, init)
    assert fail == -1
    np.testing.assert_allclose(filt, 0.5)


def test_backend_reports():
    assert _kernels.BACKEND in ("cython", "python")
