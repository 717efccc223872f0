"""Numba and numpy kernel paths must agree on the same inputs."""

import numpy as np
import pytest

from coverdet import _kernels as K
from coverdet.seeds import rng_for

# under COVERDET_NO_NUMBA the public names ARE the numpy ones and these
# checks degrade to identities; with numba active they are real cross-checks


def test_backend_is_reported():
    assert K.BACKEND in ("numba", "numpy")
    assert K.backend_name() == K.BACKEND


def test_conv2d_forward_agrees():
    for i in range(5):
        rng = rng_for(300, "fwd", i)
        x = rng.standard_normal((2, 3, 9, 11)).astype(np.float32)
        k = rng.standard_normal((4, 3, 3, 5)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        got = K.conv2d_forward(x, k, b)
        want = K._conv2d_forward_np(x, k, b)
        assert got.shape == want.shape == (2, 4, 7, 7)
        assert np.allclose(got, want, atol=2e-6, rtol=1e-5)


def test_conv2d_forward_matches_brute_force():
    rng = rng_for(301, "brute")
    x = rng.standard_normal((1, 2, 5, 6)).astype(np.float32)
    k = rng.standard_normal((3, 2, 2, 3)).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32)
    got = K.conv2d_forward(x, k, b)
    # quadruple loop oracle, cross-correlation convention
    want = np.zeros((1, 3, 4, 4), dtype=np.float64)
    for f in range(3):
        for y in range(4):
            for xx in range(4):
                acc = 0.0
                for c in range(2):
                    for dy in range(2):
                        for dx in range(3):
                            acc += float(x[0, c, y + dy, xx + dx]) * float(k[f, c, dy, dx])
                want[0, f, y, xx] = acc + float(b[f])
    assert np.allclose(got, want, atol=1e-5)


def test_conv2d_backward_input_agrees():
    for i in range(5):
        rng = rng_for(302, "bwd-in", i)
        g = rng.standard_normal((2, 4, 7, 7)).astype(np.float32)
        k = rng.standard_normal((4, 3, 3, 5)).astype(np.float32)
        got = K.conv2d_backward_input(g, k)
        want = K._conv2d_backward_input_np(g, k)
        assert got.shape == want.shape == (2, 3, 9, 11)
        assert np.allclose(got, want, atol=2e-6, rtol=1e-5)


def test_conv2d_backward_kernels_agrees():
    for i in range(5):
        rng = rng_for(303, "bwd-k", i)
        x = rng.standard_normal((2, 3, 9, 11)).astype(np.float32)
        g = rng.standard_normal((2, 4, 7, 7)).astype(np.float32)
        got = K.conv2d_backward_kernels(g, x, 3, 5)
        want = K._conv2d_backward_kernels_np(g, x, 3, 5)
        assert got.shape == want.shape == (4, 3, 3, 5)
        assert np.allclose(got, want, atol=2e-6, rtol=1e-5)


def test_cqt_bin_response_agrees():
    for i in range(3):
        rng = rng_for(304, "cqt", i)
        x = rng.standard_normal(4000)
        kr = rng.standard_normal(700)
        ki = rng.standard_normal(700)
        got = K.cqt_bin_response(x, kr, ki, 512, 7)
        want = K._cqt_bin_response_np(x, kr, ki, 512, 7)
        assert got.shape == want.shape == (7,)
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_cqt_bin_response_pure_projection():
    # projecting a signal onto (cos, -sin) kernels = |windowed DFT| at that bin
    rng = rng_for(305, "proj")
    n = 256
    t = np.arange(2048) / 22050.0
    x = np.sin(2 * np.pi * 440.0 * t)
    k = np.arange(n)
    kr = np.cos(2 * np.pi * 440.0 * k / 22050.0) / n
    ki = -np.sin(2 * np.pi * 440.0 * k / 22050.0) / n
    got = K.cqt_bin_response(x, kr, ki, 512, 3)
    basis = np.exp(-2j * np.pi * 440.0 * k / 22050.0) / n
    for f in range(3):
        seg = x[f * 512:f * 512 + n]
        assert got[f] == pytest.approx(abs(np.dot(seg, basis)), rel=1e-12)
