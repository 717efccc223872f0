"""PCM WAV ingestion: decode, downmix to mono, resample to the pipeline rate.

Only uncompressed RIFF/WAVE is accepted (PCM 16-bit or IEEE float32, mono
or stereo). The stdlib ``wave`` module cannot read float32 data, so the
container is parsed directly; that also lets malformed inputs map onto
precise error types instead of generic ValueErrors.

Resampling is linear interpolation: adequate for validation-scale work,
documented as a quality/simplicity tradeoff.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass

import numpy as np

from .errors import EmptyAudio, InvalidParam, IoFailure, MalformedContainer, UnsupportedEncoding

CANONICAL_RATE = 22050
MIN_DURATION_S = 5.0
MAX_DURATION_S = 120.0
MIN_SOURCE_RATE = 8000
MAX_SOURCE_RATE = 48000


@dataclass
class AudioClip:
    """Mono amplitude stream in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate_hz: int
    source_id: str

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate_hz


def _read_fmt(body: bytes):
    if len(body) < 16:
        raise MalformedContainer("fmt chunk shorter than 16 bytes")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", body, 0)
    return audio_format, channels, rate, bits


def _parse_riff(blob: bytes):
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise MalformedContainer("not a RIFF/WAVE file")
    fmt = None
    data = None
    off = 12
    while off + 8 <= len(blob):
        cid = blob[off:off + 4]
        (size,) = struct.unpack_from("<I", blob, off + 4)
        body = blob[off + 8:off + 8 + size]
        if len(body) < size:
            raise MalformedContainer(f"chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = _read_fmt(body)
        elif cid == b"data":
            data = body
        off += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise MalformedContainer("missing fmt or data chunk")
    return fmt, data


def _decode_samples(fmt, data: bytes) -> tuple[np.ndarray, int]:
    audio_format, channels, rate, bits = fmt
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data, dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncoding(
            f"format tag {audio_format} / {bits}-bit unsupported (need PCM16 or float32)")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{channels} channels unsupported (need mono or stereo)")
    if not (MIN_SOURCE_RATE <= rate <= MAX_SOURCE_RATE):
        raise UnsupportedEncoding(f"sample rate {rate} outside [{MIN_SOURCE_RATE}, {MAX_SOURCE_RATE}]")
    if samples.size == 0:
        raise EmptyAudio("data chunk holds zero samples")
    if channels == 2:
        if samples.size % 2:
            raise MalformedContainer("stereo data chunk has odd sample count")
        samples = samples.reshape(-1, 2).mean(axis=1)
    return samples, rate


def resample_linear(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Linear-interpolation resampler preserving duration to < one output sample."""
    if rate_in == rate_out:
        return samples.copy()
    n_out = int(round(len(samples) * rate_out / rate_in))
    positions = np.arange(n_out, dtype=np.float64) * (rate_in / rate_out)
    return np.interp(positions, np.arange(len(samples), dtype=np.float64), samples)


def load_wav(path, target_rate: int = CANONICAL_RATE) -> AudioClip:
    """Decode a WAV file to a canonical mono clip.

    Integer samples scale by 2^(bits-1); stereo averages to mono; other
    rates resample to `target_rate`. Amplitudes above full scale (possible
    in float WAVs) are scaled back into [-1, 1].
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    fmt, data = _parse_riff(blob)
    samples, rate = _decode_samples(fmt, data)
    if not np.all(np.isfinite(samples)):
        raise MalformedContainer(f"{path}: non-finite sample values")
    samples = resample_linear(samples, rate, target_rate)
    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak > 1.0:
        samples = samples / peak
    source_id = path.rsplit("/", 1)[-1]
    if source_id.lower().endswith(".wav"):
        source_id = source_id[:-4]
    return AudioClip(samples=samples, sample_rate_hz=target_rate, source_id=source_id)


def peak_normalize(clip: AudioClip) -> AudioClip:
    """Scale so the absolute peak sits at 1.0 (no-op on silence)."""
    peak = float(np.max(np.abs(clip.samples))) if clip.samples.size else 0.0
    if peak <= 0.0:
        return clip
    return AudioClip(samples=clip.samples / peak,
                     sample_rate_hz=clip.sample_rate_hz,
                     source_id=clip.source_id)


def write_wav_pcm16(path, samples: np.ndarray, rate: int):
    """Write mono float samples in [-1, 1] as 16-bit PCM."""
    if rate <= 0:
        raise InvalidParam(f"sample rate {rate} must be positive")
    clipped = np.clip(samples, -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    try:
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(rate)
            wf.writeframes(ints.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
