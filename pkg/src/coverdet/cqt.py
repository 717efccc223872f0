"""Log-magnitude constant-Q spectrogram: the network's input representation.

84 bins, one semitone each, spanning 7 octaves upward from equal-tempered
C1 (32.7032 Hz, A4 = 440). Each bin k gets a Hann-windowed complex kernel
at its center frequency with Q-dependent length N_k = ceil(Q * sr / f_k),
Q = 1/(2^(1/12) - 1); frame t reads samples [t*hop, t*hop + N_k), the tail
zero-padded. The direct per-bin inner product is deliberately naive — it
is verifiable against the math term by term — and the inner loop lives in
``_kernels`` (numba by default).

Magnitudes go to dB, floored 80 dB below the per-spectrogram maximum,
which is normalized to 0 dB.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .audio import AudioClip
from .checkpoint import atomic_write
from .errors import (ChecksumMismatch, ClipTooShort, FormatVersionMismatch, InvalidParam,
                     IoFailure)

FMIN_HZ = 440.0 * 2.0 ** (-45.0 / 12.0)  # C1 in equal temperament
N_BINS = 84
BINS_PER_OCTAVE = 12
HOP_SAMPLES = 5120
LOG_FLOOR_DB = -80.0
FLOOR_AMPLITUDE = 10.0 ** (LOG_FLOOR_DB / 20.0)
CQT_MAGIC = b"CQT1"


@dataclass
class CqtSpectrogram:
    """84 x T matrix of dB values in [-80, 0], plus extraction metadata."""

    data: np.ndarray
    hop_seconds: float
    fmin_hz: float = FMIN_HZ
    bins_per_octave: int = BINS_PER_OCTAVE
    source_id: str = ""
    n_bins: int = field(init=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[1] < 1:
            raise InvalidParam(f"spectrogram must be 2-d with >= 1 frame, got {self.data.shape}")
        self.n_bins = self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


def bin_frequencies(fmin_hz: float, n_bins: int, bins_per_octave: int) -> np.ndarray:
    """Geometric center frequencies fmin * 2^(k / bins_per_octave)."""
    if fmin_hz <= 0 or n_bins < 1 or bins_per_octave < 1:
        raise InvalidParam("bin_frequencies needs positive fmin, n_bins, bins_per_octave")
    k = np.arange(n_bins, dtype=np.float64)
    return fmin_hz * 2.0 ** (k / bins_per_octave)


@lru_cache(maxsize=8)
def _kernel_bank(sample_rate: int, fmin_hz: float, n_bins: int, bins_per_octave: int):
    """Per-bin (cos, -sin) kernels, Hann windowed, scaled by 1/N_k."""
    freqs = bin_frequencies(fmin_hz, n_bins, bins_per_octave)
    if freqs[-1] >= sample_rate / 2.0:
        raise InvalidParam(
            f"top bin {freqs[-1]:.1f} Hz at or above Nyquist for rate {sample_rate}")
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    bank = []
    for f in freqs:
        n_k = int(math.ceil(q * sample_rate / f))
        n = np.arange(n_k, dtype=np.float64)
        window = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / (n_k - 1)) if n_k > 1 else np.ones(1)
        phase = 2.0 * np.pi * f * n / sample_rate
        bank.append((window * np.cos(phase) / n_k, -(window * np.sin(phase)) / n_k))
    return freqs, bank


def compute_cqt(clip: AudioClip, hop_samples: int = HOP_SAMPLES, fmin_hz: float = FMIN_HZ,
                n_bins: int = N_BINS, bins_per_octave: int = BINS_PER_OCTAVE,
                normalize: bool = True) -> CqtSpectrogram:
    """Direct constant-Q transform of a mono clip.

    With `normalize` (the pipeline default) the spectrogram max sits at
    0 dB and the floor 80 dB below it; without it, dB is absolute with the
    same -80 floor, which keeps amplitude-scaling effects observable.
    """
    if hop_samples <= 0:
        raise InvalidParam(f"hop_samples {hop_samples} must be positive")
    sr = clip.sample_rate_hz
    freqs, bank = _kernel_bank(sr, fmin_hz, n_bins, bins_per_octave)
    longest = bank[0][0].shape[0]
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.shape[0] < longest:
        raise ClipTooShort(
            f"clip has {samples.shape[0]} samples; bin-0 window needs {longest}")
    n_frames = int(math.ceil(samples.shape[0] / hop_samples))
    padded = np.zeros((n_frames - 1) * hop_samples + longest, dtype=np.float64)
    padded[:samples.shape[0]] = samples
    mags = np.empty((n_bins, n_frames), dtype=np.float64)
    for k, (kr, ki) in enumerate(bank):
        mags[k] = _kernels.cqt_bin_response(padded, kr, ki, hop_samples, n_frames)
    if normalize:
        peak = mags.max()
        if peak <= 0.0:
            db = np.full_like(mags, LOG_FLOOR_DB)
        else:
            db = 20.0 * np.log10(np.maximum(mags / peak, FLOOR_AMPLITUDE))
    else:
        db = 20.0 * np.log10(np.maximum(mags, FLOOR_AMPLITUDE))
    return CqtSpectrogram(data=db, hop_seconds=hop_samples / sr, fmin_hz=fmin_hz,
                          bins_per_octave=bins_per_octave, source_id=clip.source_id)


def crop_or_pad(spec: CqtSpectrogram, target_frames: int, rng_seed: int) -> CqtSpectrogram:
    """Fix the frame count: seeded random contiguous crop, or right-pad at the floor."""
    if target_frames < 1:
        raise InvalidParam(f"target_frames {target_frames} must be >= 1")
    t = spec.n_frames
    if t == target_frames:
        return spec
    if t > target_frames:
        rng = np.random.default_rng(rng_seed)
        start = int(rng.integers(0, t - target_frames + 1))
        data = spec.data[:, start:start + target_frames].copy()
    else:
        data = np.full((spec.n_bins, target_frames), LOG_FLOOR_DB, dtype=np.float32)
        data[:, :t] = spec.data
    return CqtSpectrogram(data=data, hop_seconds=spec.hop_seconds, fmin_hz=spec.fmin_hz,
                          bins_per_octave=spec.bins_per_octave, source_id=spec.source_id)


def save_cqt(spec: CqtSpectrogram, path):
    """Lossless feature-file write: CQT1 header, f32 matrix, CRC32 trailer."""
    header = struct.pack("<IIdd", spec.n_bins, spec.n_frames, spec.hop_seconds, spec.fmin_hz)
    matrix = np.ascontiguousarray(spec.data, dtype="<f4").tobytes()
    payload = header + matrix
    atomic_write(path, CQT_MAGIC + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_cqt(path) -> CqtSpectrogram:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(blob) < 4 + 24 + 4 or blob[:4] != CQT_MAGIC:
        raise FormatVersionMismatch(f"{path}: bad magic, expected {CQT_MAGIC!r}")
    payload, crc_raw = blob[4:-4], blob[-4:]
    if zlib.crc32(payload) & 0xFFFFFFFF != struct.unpack("<I", crc_raw)[0]:
        raise ChecksumMismatch(f"{path}: CRC32 mismatch (truncated or corrupt)")
    n_bins, n_frames, hop_seconds, fmin_hz = struct.unpack_from("<IIdd", payload, 0)
    expected = n_bins * n_frames * 4
    body = payload[24:]
    if len(body) != expected:
        raise ChecksumMismatch(f"{path}: matrix size {len(body)} != header implies {expected}")
    data = np.frombuffer(body, dtype="<f4").reshape(n_bins, n_frames)
    name = str(path).rsplit("/", 1)[-1]
    for suffix in (".cqt", ".bin"):
        if name.lower().endswith(suffix):
            name = name[:-len(suffix)]
            break
    return CqtSpectrogram(data=data.astype(np.float32), hop_seconds=hop_seconds,
                          fmin_hz=fmin_hz, source_id=name)
