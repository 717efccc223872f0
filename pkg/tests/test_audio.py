"""WAV ingestion tests.

Container-level cases build RIFF blobs by hand with struct, so the decoder
is checked against the byte layout itself rather than against our own
writer. Frequency content after resampling is verified with the direct-DFT
peak finder from the selfcheck module.
"""

import struct

import numpy as np
import pytest

from coverdet.audio import (
    AudioClip,
    CANONICAL_RATE,
    load_wav,
    peak_normalize,
    resample_linear,
    write_wav_pcm16,
)
from coverdet.errors import (
    EmptyAudio,
    IoFailure,
    MalformedContainer,
    UnsupportedEncoding,
)
from coverdet.selfcheck import naive_dft_peak_hz


def make_riff(fmt_body: bytes, data_body: bytes, magic=b"RIFF", wave_id=b"WAVE") -> bytes:
    """Assemble a minimal RIFF/WAVE blob byte by byte."""
    chunks = b""
    for cid, body in ((b"fmt ", fmt_body), (b"data", data_body)):
        chunks += cid + struct.pack("<I", len(body)) + body
        if len(body) % 2:
            chunks += b"\x00"
    return magic + struct.pack("<I", 4 + len(chunks)) + wave_id + chunks


def fmt_chunk(audio_format: int, channels: int, rate: int, bits: int) -> bytes:
    block = channels * bits // 8
    return struct.pack("<HHIIHH", audio_format, channels, rate, rate * block, block, bits)


def pcm16_wav(values, channels=1, rate=22050) -> bytes:
    data = np.asarray(values, dtype="<i2").tobytes()
    return make_riff(fmt_chunk(1, channels, rate, 16), data)


def test_pcm16_scaling_exact(tmp_path):
    # Raw int16 codes divide by 32768, so full-scale negative hits -1.0
    # exactly and full-scale positive stops at 32767/32768.
    codes = [-32768, -1, 0, 1, 32767]
    path = tmp_path / "codes.wav"
    path.write_bytes(pcm16_wav(codes, rate=22050))
    clip = load_wav(path)
    expected = np.array(codes, dtype=np.float64) / 32768.0
    assert np.array_equal(clip.samples, expected)
    assert clip.sample_rate_hz == CANONICAL_RATE
    assert clip.source_id == "codes"


def test_stereo_downmix_is_channel_mean(tmp_path):
    left = np.full(50, 16384, dtype=np.int64)   # 0.5
    right = np.full(50, -8192, dtype=np.int64)  # -0.25
    interleaved = np.empty(100, dtype=np.int64)
    interleaved[0::2] = left
    interleaved[1::2] = right
    path = tmp_path / "st.wav"
    path.write_bytes(pcm16_wav(interleaved, channels=2))
    clip = load_wav(path)
    assert clip.samples.shape == (50,)
    assert np.allclose(clip.samples, (0.5 - 0.25) / 2.0, atol=1e-12)


def test_float32_wav_decodes_and_rescales_hot_signal(tmp_path):
    rng = np.random.default_rng(7)
    x = (rng.standard_normal(400) * 0.4).astype("<f4")
    x[13] = 2.0  # out-of-range float sample: loader must scale peak back to 1
    blob = make_riff(fmt_chunk(3, 1, 22050, 32), x.tobytes())
    path = tmp_path / "f32.wav"
    path.write_bytes(blob)
    clip = load_wav(path)
    assert np.max(np.abs(clip.samples)) == pytest.approx(1.0)
    assert np.allclose(clip.samples, x.astype(np.float64) / 2.0, atol=1e-7)


def test_roundtrip_through_writer(tmp_path):
    rng = np.random.default_rng(11)
    x = rng.uniform(-0.9, 0.9, size=2205)
    path = tmp_path / "rt.wav"
    write_wav_pcm16(path, x, CANONICAL_RATE)
    clip = load_wav(path)
    assert len(clip.samples) == len(x)
    # Quantization error is bounded by one LSB of int16.
    assert np.max(np.abs(clip.samples - x)) < 2.0 / 32768.0


def test_resample_preserves_duration_and_pitch(tmp_path):
    rate_in = 44100
    dur = 0.5
    t = np.arange(int(rate_in * dur)) / rate_in
    x = 0.7 * np.sin(2 * np.pi * 440.0 * t)
    y = resample_linear(x, rate_in, CANONICAL_RATE)
    assert len(y) == round(len(x) * CANONICAL_RATE / rate_in)
    peak_hz = naive_dft_peak_hz(y, CANONICAL_RATE, fmax=900.0, resolution=1.0)
    assert peak_hz == pytest.approx(440.0, abs=1.5)


def test_resample_identity_rate_copies():
    x = np.linspace(-1, 1, 64)
    y = resample_linear(x, 22050, 22050)
    assert np.array_equal(x, y)
    assert y is not x  # caller may mutate the result freely


def test_load_wav_resamples_to_canonical_rate(tmp_path):
    rate_in = 32000
    t = np.arange(int(rate_in * 0.25)) / rate_in
    x = 0.5 * np.sin(2 * np.pi * 220.0 * t)
    path = tmp_path / "r32k.wav"
    path.write_bytes(pcm16_wav(np.round(x * 32767).astype(np.int64), rate=rate_in))
    clip = load_wav(path)
    assert clip.sample_rate_hz == CANONICAL_RATE
    assert abs(clip.duration_seconds - 0.25) < 1.0 / CANONICAL_RATE


def test_peak_normalize():
    clip = AudioClip(samples=np.array([0.1, -0.4, 0.2]), sample_rate_hz=22050,
                     source_id="x")
    out = peak_normalize(clip)
    assert np.max(np.abs(out.samples)) == pytest.approx(1.0)
    assert np.allclose(out.samples, np.array([0.25, -1.0, 0.5]))
    # input untouched, silence passes through unchanged
    assert np.max(np.abs(clip.samples)) == pytest.approx(0.4)
    silent = AudioClip(samples=np.zeros(10), sample_rate_hz=22050, source_id="s")
    assert np.array_equal(peak_normalize(silent).samples, silent.samples)


def test_malformed_containers(tmp_path):
    cases = {
        "short.wav": b"RI",
        "magic.wav": make_riff(fmt_chunk(1, 1, 22050, 16), b"\x00\x00", magic=b"RIFX"),
        "notwave.wav": make_riff(fmt_chunk(1, 1, 22050, 16), b"\x00\x00", wave_id=b"LIST"),
        "nodata.wav": (b"RIFF" + struct.pack("<I", 4 + 24) + b"WAVE"
                       + b"fmt " + struct.pack("<I", 16) + fmt_chunk(1, 1, 22050, 16)),
        "shortfmt.wav": make_riff(fmt_chunk(1, 1, 22050, 16)[:10], b"\x00\x00"),
    }
    for name, blob in cases.items():
        path = tmp_path / name
        path.write_bytes(blob)
        with pytest.raises(MalformedContainer):
            load_wav(path)
    # declared chunk size runs past the end of the file
    trunc = pcm16_wav([0, 0, 0, 0])[:-3]
    path = tmp_path / "trunc.wav"
    path.write_bytes(trunc)
    with pytest.raises(MalformedContainer):
        load_wav(path)
    # stereo stream with a dangling half-frame
    odd = make_riff(fmt_chunk(1, 2, 22050, 16), b"\x00\x00" * 3)
    path = tmp_path / "odd.wav"
    path.write_bytes(odd)
    with pytest.raises(MalformedContainer):
        load_wav(path)


def test_unsupported_encodings(tmp_path):
    cases = {
        "pcm8.wav": make_riff(fmt_chunk(1, 1, 22050, 8), b"\x80\x80"),
        "ulaw.wav": make_riff(fmt_chunk(7, 1, 22050, 16), b"\x00\x00"),
        "surround.wav": make_riff(fmt_chunk(1, 3, 22050, 16), b"\x00" * 12),
        "toofast.wav": make_riff(fmt_chunk(1, 1, 96000, 16), b"\x00\x00"),
        "tooslow.wav": make_riff(fmt_chunk(1, 1, 4000, 16), b"\x00\x00"),
    }
    for name, blob in cases.items():
        path = tmp_path / name
        path.write_bytes(blob)
        with pytest.raises(UnsupportedEncoding):
            load_wav(path)


def test_empty_data_chunk(tmp_path):
    path = tmp_path / "empty.wav"
    path.write_bytes(make_riff(fmt_chunk(1, 1, 22050, 16), b""))
    with pytest.raises(EmptyAudio):
        load_wav(path)


def test_missing_file_raises_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        load_wav(tmp_path / "nope.wav")
