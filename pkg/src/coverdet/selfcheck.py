"""Independent oracles: naive per-bin CQT, direct DFT, FD gradient checks.

Everything here recomputes results from first principles on purpose.
The CQT oracle projects each frame onto a complex exponential built
inline; the gradient checker compares reverse-mode gradients against
central finite differences on float64 graphs. Nothing is shared with
the production kernel path beyond the tensor ops under test.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .cqt import BINS_PER_OCTAVE, FLOOR_AMPLITUDE, FMIN_HZ, HOP_SAMPLES, LOG_FLOOR_DB, N_BINS
from .seeds import rng_for

GRAD_TOL = 1e-3
FD_EPS = 1e-4
CQT_REL_TOL = 1e-6


def naive_cqt_db(samples, sample_rate, hop_samples=HOP_SAMPLES, fmin_hz=FMIN_HZ,
                 n_bins=N_BINS, bins_per_octave=BINS_PER_OCTAVE,
                 normalize=True) -> np.ndarray:
    """Per-bin DFT reference, complex exponentials, frame by frame."""
    x = np.asarray(samples, dtype=np.float64)
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    freqs = fmin_hz * 2.0 ** (np.arange(n_bins) / bins_per_octave)
    n0 = int(math.ceil(q * sample_rate / freqs[0]))
    n_frames = int(math.ceil(len(x) / hop_samples))
    padded = np.zeros((n_frames - 1) * hop_samples + n0, dtype=np.float64)
    padded[:len(x)] = x
    mags = np.empty((n_bins, n_frames), dtype=np.float64)
    for k in range(n_bins):
        nk = int(math.ceil(q * sample_rate / freqs[k]))
        n = np.arange(nk, dtype=np.float64)
        if nk > 1:
            window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (nk - 1))
        else:
            window = np.ones(1)
        basis = window * np.exp(-2j * np.pi * freqs[k] * n / sample_rate)
        for t in range(n_frames):
            seg = padded[t * hop_samples:t * hop_samples + nk]
            mags[k, t] = abs(np.dot(seg, basis)) / nk
    if normalize:
        peak = mags.max()
        if peak <= 0.0:
            return np.full_like(mags, LOG_FLOOR_DB)
        return 20.0 * np.log10(np.maximum(mags / peak, FLOOR_AMPLITUDE))
    return 20.0 * np.log10(np.maximum(mags, FLOOR_AMPLITUDE))


def naive_dft_peak_hz(samples, sample_rate, fmax=1000.0, resolution=1.0) -> float:
    """Frequency of the largest direct-DFT magnitude on a uniform grid."""
    x = np.asarray(samples, dtype=np.float64)
    t = np.arange(len(x), dtype=np.float64) / sample_rate
    freqs = np.arange(0.0, fmax + resolution, resolution)
    best_f, best_m = 0.0, -1.0
    for lo in range(0, len(freqs), 64):
        chunk = freqs[lo:lo + 64]
        proj = np.exp(-2j * np.pi * chunk[:, None] * t[None, :]) @ x
        mags = np.abs(proj)
        i = int(np.argmax(mags))
        if mags[i] > best_m:
            best_m = float(mags[i])
            best_f = float(chunk[i])
    return best_f


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

def fd_gradient_check(build_loss, params: dict, eps: float = FD_EPS,
                      rel_floor: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference grads.

    `build_loss` must rebuild the scalar loss from the live param tensors
    on every call and consume no RNG. Relative error per component is
    |a - fd| / max(rel_floor, |a|, |fd|), so near-zero gradients are held
    to an absolute eps^2-scale bar instead of a meaningless ratio.
    """
    for p in params.values():
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = {}
    for name, p in params.items():
        if p.grad is None:
            raise AssertionError(f"no gradient reached parameter {name}")
        analytic[name] = np.array(p.grad, dtype=np.float64).reshape(-1)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i].item()
            flat[i] = orig + eps
            with T.no_grad():
                f_plus = float(build_loss().data)
            flat[i] = orig - eps
            with T.no_grad():
                f_minus = float(build_loss().data)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[name][i])
            rel = abs(a - fd) / max(rel_floor, abs(a), abs(fd))
            worst = max(worst, rel)
    return worst


def _tiny_pipeline_loss(params: dict, x: np.ndarray, y: float) -> T.Tensor:
    """conv -> pool -> FC -> FC -> weighted-squared-difference head -> BCE.

    float64 throughout; the pair is rows 0 and 1 of x [2,1,h,w].
    """
    t = T.Tensor(x)
    t = T.conv2d(t, params["conv.w"], params["conv.b"])
    t = T.relu(t)
    t = T.maxpool2(t)
    t = T.reshape(t, (2, params["fc0.w"].shape[0]))
    t = T.dense(t, params["fc0.w"], params["fc0.b"])
    t = T.relu(t)
    t = T.dense(t, params["fc1.w"], params["fc1.b"])
    va = T.slice_rows(t, 0, 1)
    vb = T.slice_rows(t, 1, 2)
    diff = va - vb
    z = T.tsum(T.mul(T.mul(diff, diff), params["alpha"]), axis=1)
    neg_y = T.Tensor(np.array([-y], dtype=np.float64))
    return T.tmean(T.softplus(z) + T.mul(z, neg_y))


def _tiny_params(rng) -> dict:
    h, w = 10, 12
    flat = 2 * ((h - 2) // 2) * ((w - 2) // 2)

    def p(shape, std):
        return T.Tensor(rng.standard_normal(shape) * std, requires_grad=True,
                        dtype=np.float64)

    return {
        "conv.w": p((2, 1, 3, 3), math.sqrt(2.0 / 9.0)),
        "conv.b": p((2,), 0.1),
        "fc0.w": p((flat, 6), math.sqrt(2.0 / flat)),
        "fc0.b": p((6,), 0.1),
        "fc1.w": p((6, 4), math.sqrt(2.0 / 6.0)),
        "fc1.b": p((4,), 0.1),
        "alpha": p((4,), 1.0),
    }


def run_gradcheck_suite(n_instances: int = 20, master_seed: int = 61) -> dict:
    """FD-check the full pair pipeline on seeded tiny random instances."""
    worst = 0.0
    for i in range(n_instances):
        rng = rng_for(master_seed, "gradcheck", i)
        params = _tiny_params(rng)
        raw = rng.uniform(-80.0, 0.0, size=(2, 1, 10, 12))
        x = (raw + 80.0) / 80.0
        y = float(i % 2)
        err = fd_gradient_check(lambda: _tiny_pipeline_loss(params, x, y), params)
        worst = max(worst, err)
    return {"max_rel_err": worst, "n_instances": n_instances,
            "tolerance": GRAD_TOL, "ok": bool(worst < GRAD_TOL)}


def _tone(freq_hz: float, seconds: float = 3.0, sample_rate: int = 22050) -> np.ndarray:
    t = np.arange(int(round(seconds * sample_rate)), dtype=np.float64) / sample_rate
    return np.sin(2.0 * np.pi * freq_hz * t)


def _cqt_argmax_bin(samples, sample_rate=22050) -> int:
    from .audio import AudioClip
    from .cqt import compute_cqt
    clip = AudioClip(samples=np.asarray(samples, dtype=np.float64),
                     sample_rate_hz=sample_rate, source_id="oracle-tone")
    spec = compute_cqt(clip)
    energy = (10.0 ** (spec.data.astype(np.float64) / 20.0)) ** 2
    return int(np.argmax(energy.mean(axis=1)))


def run_cqt_oracle_suite(n_signals: int = 5, master_seed: int = 62,
                         seconds: float = 3.0) -> dict:
    """Random-signal agreement with the naive oracle plus tone localization."""
    from .audio import AudioClip
    from .cqt import compute_cqt

    sr = 22050
    worst = 0.0
    for i in range(n_signals):
        rng = rng_for(master_seed, "cqt-oracle", i)
        t = np.arange(int(seconds * sr), dtype=np.float64) / sr
        sig = 0.02 * rng.standard_normal(t.size)
        for _ in range(4):
            f = 40.0 * 2.0 ** (rng.random() * 6.0)
            sig += rng.uniform(0.1, 1.0) * np.sin(2.0 * np.pi * f * t + rng.random())
        clip = AudioClip(samples=sig, sample_rate_hz=sr, source_id=f"oracle-{i}")
        got = compute_cqt(clip).data.astype(np.float64)
        want = naive_cqt_db(sig, sr)
        excess = np.abs(got - want) / np.maximum(1.0, np.abs(want))
        worst = max(worst, float(excess.max()))
    freqs = FMIN_HZ * 2.0 ** (np.arange(N_BINS) / BINS_PER_OCTAVE)
    # 440 Hz sits 45 semitones above C1: 32.7032 * 2^(45/12) = 440.0
    locs = {0: freqs[0], 45: 440.0, 83: freqs[83]}
    loc_ok = all(_cqt_argmax_bin(_tone(f)) == b for b, f in locs.items())
    base = _cqt_argmax_bin(_tone(freqs[24]))
    shifted = _cqt_argmax_bin(_tone(freqs[24] * 2.0))
    octave_ok = (shifted - base) == 12 and base == 24
    return {"max_rel_err": worst, "n_signals": n_signals, "tolerance": CQT_REL_TOL,
            "localization_ok": bool(loc_ok), "octave_shift_ok": bool(octave_ok),
            "ok": bool(worst < CQT_REL_TOL and loc_ok and octave_ok)}


def run_selftest(verbose: bool = True) -> int:
    grad = run_gradcheck_suite()
    cqt = run_cqt_oracle_suite()
    line = "gradcheck: {}, cqt-oracle: {}".format(
        "PASS" if grad["ok"] else "FAIL", "PASS" if cqt["ok"] else "FAIL")
    if verbose:
        print(line)
        print(f"  gradcheck max rel err {grad['max_rel_err']:.2e} "
              f"over {grad['n_instances']} instances (tol {grad['tolerance']:.0e})")
        print(f"  cqt-oracle max rel err {cqt['max_rel_err']:.2e} "
              f"over {cqt['n_signals']} signals (tol {cqt['tolerance']:.0e}); "
              f"localization {'ok' if cqt['localization_ok'] else 'BAD'}, "
              f"octave shift {'ok' if cqt['octave_shift_ok'] else 'BAD'}")
    return 0 if (grad["ok"] and cqt["ok"]) else 1
