"""Hot numeric kernels: numba-jitted loops with a pure-numpy fallback.

The numba path is the default whenever numba imports. Set
COVERDET_NO_NUMBA=1 to force the numpy implementations; both compute the
same math and agree to float rounding (see tests/test_kernels.py and
benchmarks/bench_kernels.py).

Reductions accumulate in float64 regardless of the storage dtype, on both
paths. Every kernel is element-independent, so results are bitwise
reproducible for any thread count.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import as_strided, sliding_window_view


def _want_numba() -> bool:
    flag = os.environ.get("COVERDET_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy implementations (always available)
# ---------------------------------------------------------------------------

def _conv2d_forward_np(inp, ker, bias):
    n, c, h, w = inp.shape
    f, _, kh, kw = ker.shape
    ho, wo = h - kh + 1, w - kw + 1
    ker64 = ker.astype(np.float64)
    bias64 = bias.astype(np.float64)
    out = np.empty((n, f, ho, wo), dtype=inp.dtype)
    for i in range(n):
        # [C, Ho, Wo, kh, kw] windows of one sample, contracted against [F, C, kh, kw]
        win = sliding_window_view(inp[i], (kh, kw), axis=(1, 2)).astype(np.float64)
        acc = np.tensordot(ker64, win, axes=([1, 2, 3], [0, 3, 4]))
        out[i] = acc + bias64[:, None, None]
    return out


def _conv2d_backward_input_np(gout, ker):
    n, f, ho, wo = gout.shape
    _, c, kh, kw = ker.shape
    h, w = ho + kh - 1, wo + kw - 1
    kflip = ker[:, :, ::-1, ::-1].astype(np.float64)
    gin = np.empty((n, c, h, w), dtype=gout.dtype)
    for i in range(n):
        gpad = np.zeros((f, h + kh - 1, w + kw - 1), dtype=np.float64)
        gpad[:, kh - 1:kh - 1 + ho, kw - 1:kw - 1 + wo] = gout[i]
        win = sliding_window_view(gpad, (kh, kw), axis=(1, 2))  # [F, H, W, kh, kw]
        gin[i] = np.tensordot(kflip, win, axes=([0, 2, 3], [0, 3, 4]))
    return gin


def _conv2d_backward_kernels_np(gout, inp, kh, kw):
    n, f, ho, wo = gout.shape
    c = inp.shape[1]
    gker = np.zeros((f, c, kh, kw), dtype=np.float64)
    for i in range(n):
        # [C, kh, kw, Ho, Wo] windows, contracted against gout[i] over (Ho, Wo)
        win = sliding_window_view(inp[i], (ho, wo), axis=(1, 2)).astype(np.float64)
        gker += np.tensordot(gout[i].astype(np.float64), win, axes=([1, 2], [3, 4]))
    return gker.astype(gout.dtype)


def _cqt_bin_response_np(xpad, kr, ki, hop, n_frames):
    nk = kr.shape[0]
    frames = as_strided(
        xpad,
        shape=(n_frames, nk),
        strides=(hop * xpad.itemsize, xpad.itemsize),
        writeable=False,
    )
    re = frames @ kr
    im = frames @ ki
    return np.sqrt(re * re + im * im)


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily, cached on disk)
# ---------------------------------------------------------------------------

_NUMBA_OK = False
if _want_numba():
    try:
        from numba import njit, prange

        _NUMBA_OK = True
    except ImportError:  # pragma: no cover - mirror present in CI images
        _NUMBA_OK = False

if _NUMBA_OK:

    # fastmath lets LLVM vectorize the float64 reduction chains; results stay
    # run-to-run identical (fixed compiled code) and agree with the numpy
    # path to rounding, which tests/test_kernels.py pins down
    @njit(cache=True, parallel=True, fastmath=True)
    def _conv2d_forward_nb(inp, ker, bias):
        n, c, h, w = inp.shape
        f = ker.shape[0]
        kh = ker.shape[2]
        kw = ker.shape[3]
        ho = h - kh + 1
        wo = w - kw + 1
        out = np.empty((n, f, ho, wo), dtype=inp.dtype)
        for nf in prange(n * f):
            i = nf // f
            j = nf % f
            b = np.float64(bias[j])
            row = np.empty(wo, dtype=np.float64)
            # one output row at a time keeps the accumulator in L1
            for y in range(ho):
                for x in range(wo):
                    row[x] = b
                for cc in range(c):
                    for ii in range(kh):
                        for jj in range(kw):
                            wgt = np.float64(ker[j, cc, ii, jj])
                            for x in range(wo):
                                row[x] += wgt * inp[i, cc, y + ii, x + jj]
                for x in range(wo):
                    out[i, j, y, x] = row[x]
        return out

    @njit(cache=True, parallel=True, fastmath=True)
    def _conv2d_backward_input_nb(gout, ker):
        n, f, ho, wo = gout.shape
        c = ker.shape[1]
        kh = ker.shape[2]
        kw = ker.shape[3]
        h = ho + kh - 1
        w = wo + kw - 1
        gin = np.empty((n, c, h, w), dtype=gout.dtype)
        for nc in prange(n * c):
            i = nc // c
            cc = nc % c
            acc = np.zeros((h, w), dtype=np.float64)
            for j in range(f):
                for ii in range(kh):
                    for jj in range(kw):
                        wgt = np.float64(ker[j, cc, ii, jj])
                        for y in range(ho):
                            for x in range(wo):
                                acc[y + ii, x + jj] += wgt * gout[i, j, y, x]
            for y in range(h):
                for x in range(w):
                    gin[i, cc, y, x] = acc[y, x]
        return gin

    @njit(cache=True, parallel=True, fastmath=True)
    def _conv2d_backward_kernels_nb(gout, inp, kh, kw):
        n, f, ho, wo = gout.shape
        c = inp.shape[1]
        gker = np.empty((f, c, kh, kw), dtype=gout.dtype)
        for fc in prange(f * c):
            j = fc // c
            cc = fc % c
            acc = np.zeros((kh, kw), dtype=np.float64)
            # row-by-row so each gradient row is read once from L1 for all
            # kh*kw contiguous-x inner products
            for i in range(n):
                for y in range(ho):
                    for ii in range(kh):
                        for jj in range(kw):
                            s = 0.0
                            for x in range(wo):
                                s += np.float64(gout[i, j, y, x]) \
                                    * inp[i, cc, y + ii, x + jj]
                            acc[ii, jj] += s
            for ii in range(kh):
                for jj in range(kw):
                    gker[j, cc, ii, jj] = acc[ii, jj]
        return gker

    @njit(cache=True, fastmath=True)
    def _cqt_bin_response_nb(xpad, kr, ki, hop, n_frames):
        nk = kr.shape[0]
        mags = np.empty(n_frames, dtype=np.float64)
        for t in range(n_frames):
            base = t * hop
            re = 0.0
            im = 0.0
            for k in range(nk):
                s = xpad[base + k]
                re += s * kr[k]
                im += s * ki[k]
            mags[t] = np.sqrt(re * re + im * im)
        return mags


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if _NUMBA_OK:
    BACKEND = "numba"
    conv2d_forward = _conv2d_forward_nb
    conv2d_backward_input = _conv2d_backward_input_nb
    conv2d_backward_kernels = _conv2d_backward_kernels_nb
    cqt_bin_response = _cqt_bin_response_nb
else:
    BACKEND = "numpy"
    conv2d_forward = _conv2d_forward_np
    conv2d_backward_input = _conv2d_backward_input_np
    conv2d_backward_kernels = _conv2d_backward_kernels_np
    cqt_bin_response = _cqt_bin_response_np


def backend_name() -> str:
    return BACKEND
