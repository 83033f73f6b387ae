import copy

import numpy as np
import pytest

from axialtrack.attention import attention_params, axial_trajectory_h, axial_trajectory_w
from axialtrack.backward import trajectory_backward
from axialtrack.errors import DimensionError

EPS = 1e-4
TOL = 1e-5


def _params(d, seed, std=0.3, heads=1, bias=False):
    return attention_params(d, np.random.default_rng(seed), heads=heads, std=std, bias=bias)


def _loss(f, ph, pw, upstream):
    return float(np.sum(upstream * axial_trajectory_w(axial_trajectory_h(f, ph), pw)))


def _fd_input(f, ph, pw, upstream):
    grad = np.zeros_like(f)
    for idx in np.ndindex(f.shape):
        fp = f.copy()
        fp[idx] += EPS
        fm = f.copy()
        fm[idx] -= EPS
        grad[idx] = (_loss(fp, ph, pw, upstream) - _loss(fm, ph, pw, upstream)) / (2 * EPS)
    return grad


def _fd_param(f, ph, pw, upstream, which, stage, name):
    base = ph if which == "h" else pw
    target = getattr(getattr(base, stage), name)
    grad = np.zeros_like(target)
    for idx in np.ndindex(target.shape):
        plus = copy.deepcopy(base)
        getattr(getattr(plus, stage), name)[idx] += EPS
        minus = copy.deepcopy(base)
        getattr(getattr(minus, stage), name)[idx] -= EPS
        if which == "h":
            grad[idx] = (_loss(f, plus, pw, upstream) - _loss(f, minus, pw, upstream)) / (2 * EPS)
        else:
            grad[idx] = (_loss(f, ph, plus, upstream) - _loss(f, ph, minus, upstream)) / (2 * EPS)
    return grad


def _rel_err(analytic, fd):
    return float(np.max(np.abs(analytic - fd) / np.maximum(1e-6, np.abs(fd))))


class TestTrajectoryBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(0)
        f = rng.normal(size=(2, 4, 3, 3))
        g = trajectory_backward(f, _params(4, 1), _params(4, 2), np.zeros_like(f))
        assert np.array_equal(g.d_input, np.zeros_like(f))
        for grads in (g.params_h, g.params_w):
            for stage in (grads.stage1, grads.stage2):
                assert not np.any(stage.w_q)
                assert not np.any(stage.w_k)
                assert not np.any(stage.w_v)

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        f = rng.normal(size=(2, 4, 3, 3))
        ph, pw = _params(4, 4), _params(4, 5)
        upstream = rng.normal(size=f.shape)
        g = trajectory_backward(f, ph, pw, upstream)
        assert _rel_err(g.d_input, _fd_input(f, ph, pw, upstream)) < TOL

    def test_value_projection_gradients_match(self):
        rng = np.random.default_rng(6)
        f = rng.normal(size=(2, 4, 3, 3))
        ph, pw = _params(4, 7), _params(4, 8)
        upstream = rng.normal(size=f.shape)
        g = trajectory_backward(f, ph, pw, upstream)
        fd_h = _fd_param(f, ph, pw, upstream, "h", "stage1", "w_v")
        fd_w = _fd_param(f, ph, pw, upstream, "w", "stage1", "w_v")
        assert _rel_err(g.params_h.stage1.w_v, fd_h) < TOL
        assert _rel_err(g.params_w.stage1.w_v, fd_w) < TOL

    def test_all_projection_gradients_match(self):
        rng = np.random.default_rng(9)
        f = rng.normal(size=(2, 4, 2, 3))
        ph, pw = _params(4, 10), _params(4, 11)
        upstream = rng.normal(size=f.shape)
        g = trajectory_backward(f, ph, pw, upstream)
        for which, grads in (("h", g.params_h), ("w", g.params_w)):
            for stage in ("stage1", "stage2"):
                for name in ("w_q", "w_k", "w_v"):
                    fd = _fd_param(f, ph, pw, upstream, which, stage, name)
                    analytic = getattr(getattr(grads, stage), name)
                    assert _rel_err(analytic, fd) < TOL, (which, stage, name)

    def test_bias_gradients_match(self):
        rng = np.random.default_rng(12)
        f = rng.normal(size=(2, 4, 2, 2))
        ph = _params(4, 13, bias=True)
        pw = _params(4, 14, bias=True)
        upstream = rng.normal(size=f.shape)
        g = trajectory_backward(f, ph, pw, upstream)
        for name in ("b_q", "b_k", "b_v"):
            fd = _fd_param(f, ph, pw, upstream, "h", "stage1", name)
            assert _rel_err(getattr(g.params_h.stage1, name), fd) < TOL, name
            fd2 = _fd_param(f, ph, pw, upstream, "w", "stage2", name)
            assert _rel_err(getattr(g.params_w.stage2, name), fd2) < TOL, name

    def test_multi_head_input_gradient(self):
        rng = np.random.default_rng(15)
        f = rng.normal(size=(2, 4, 3, 3))
        ph = _params(4, 16, heads=2)
        pw = _params(4, 17, heads=2)
        upstream = rng.normal(size=f.shape)
        g = trajectory_backward(f, ph, pw, upstream)
        assert _rel_err(g.d_input, _fd_input(f, ph, pw, upstream)) < TOL

    def test_shape_mismatch_rejected(self):
        f = np.zeros((2, 4, 3, 3))
        with pytest.raises(DimensionError):
            trajectory_backward(f, _params(4, 18), _params(4, 19), np.zeros((2, 4, 3, 2)))
