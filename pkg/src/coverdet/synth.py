"""Synthetic cover-song corpus: looped melodies plus cover transforms.

Each clique is a melody (a seeded random walk over a scale, looped to
roughly `duration_seconds`) over a root-and-fifth drone, rendered with a
per-clique register, tempo, rhythm mix and timbre; each version renders
that melody under a random transposition, tempo factor, amplitude jitter
and light noise, so versions of one clique sound like covers while
cliques stay distinct.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .audio import CANONICAL_RATE, write_wav_pcm16
from .dataset import CliqueSet, write_manifest
from .errors import InvalidParam
from .seeds import rng_for

MAJOR = (0, 2, 4, 5, 7, 9, 11)
MINOR = (0, 2, 3, 5, 7, 8, 10)

TRANSPOSE_CHOICES = tuple(range(-5, 7))   # semitones, inclusive
TEMPO_RANGE = (0.8, 1.25)
BPM_RANGE = (56.0, 160.0)
ROOT_RANGE = (43, 84)                     # G2..C6: spreads cliques over ~3.5 octaves
NOTE_DURATIONS = (0.25, 0.5, 0.75, 1.0, 1.5)  # in beats
VOICE_INTERVALS = (0, -12, -5, 4, 7)      # 0 = melody only
DRONE_CHORDS = ((-12,), (-12, -9), (-12, -8), (-12, -7), (-12, -5))
VIBRATO_RATE_RANGE = (3.0, 7.0)           # Hz
VIBRATO_DEPTH_MAX = 0.4                   # semitones
SUBDIVISION_CHOICES = (1, 1, 2, 3)        # onsets per written note
DUTY_RANGE = (0.55, 1.0)                  # sounding fraction of each onset
ATTACK_SECONDS = 0.005
PARALLEL_VOICE_AMP = 0.45
DRONE_SECOND_AMP = 0.6


@dataclass
class MelodySpec:
    root_midi: int
    scale: tuple[int, ...]
    degrees: list[int]
    beats: list[float]
    harmonics: tuple[float, ...] = (1.0, 0.5, 0.25)
    base_bpm: float = 96.0
    decay_rate: float = 3.0
    drone_amp: float = 0.0
    drone_chord: tuple[int, ...] = (-12, -5)
    voice_interval: int = 0
    vibrato_rate_hz: float = 0.0
    vibrato_depth: float = 0.0
    subdivision: int = 1
    duty: float = 1.0


@dataclass
class VersionTransform:
    transpose_semitones: int = 0
    tempo_factor: float = 1.0
    amp_jitter_seed: int = 0
    noise_level: float = 0.0
    harmonic_tilt: float = 1.0

    @staticmethod
    def identity() -> "VersionTransform":
        return VersionTransform()


@dataclass
class SynthConfig:
    n_cliques: int = 32
    versions_per_clique: int = 4
    duration_seconds: float = 30.0
    sample_rate_hz: int = CANONICAL_RATE
    master_seed: int = 0


def _midi_to_hz(m: float) -> float:
    return 440.0 * 2.0 ** ((m - 69.0) / 12.0)


def make_melody(rng: np.random.Generator) -> MelodySpec:
    """Random-walk melody spec: 16..32 notes over a random key's scale.

    Register, tempo, rhythm mix, timbre, decay, drone level and an
    optional parallel voice are all drawn per melody so different
    cliques occupy visibly different regions of the spectrogram; the
    version transforms (transposition, tempo factor) stay much smaller
    than these gaps, the way two different songs differ by more than two
    renditions of one song do. The drone and the parallel voice sit at
    fixed intervals from the root, so they transpose with the melody.
    """
    root = int(rng.integers(ROOT_RANGE[0], ROOT_RANGE[1] + 1))
    scale = MAJOR if rng.random() < 0.5 else MINOR
    n_notes = int(rng.integers(16, 33))
    degree = int(rng.integers(0, 7))
    degrees = []
    for _ in range(n_notes):
        degrees.append(degree)
        degree = int(np.clip(degree + rng.integers(-2, 3), -3, 10))
    duration_mix = rng.dirichlet(1.2 * np.ones(len(NOTE_DURATIONS)))
    beats = rng.choice(NOTE_DURATIONS, size=n_notes, p=duration_mix).tolist()
    n_harm = int(rng.integers(2, 6))
    falloff = 0.3 + 0.5 * rng.random()
    harmonics = tuple(falloff ** k for k in range(n_harm))
    bpm = float(BPM_RANGE[0] + (BPM_RANGE[1] - BPM_RANGE[0]) * rng.random())
    decay = float(1.5 + 4.5 * rng.random())
    drone_amp = float(0.2 + 0.25 * rng.random())
    chord = DRONE_CHORDS[int(rng.integers(0, len(DRONE_CHORDS)))]
    voice = int(rng.choice(VOICE_INTERVALS))
    vib_rate = float(VIBRATO_RATE_RANGE[0]
                     + (VIBRATO_RATE_RANGE[1] - VIBRATO_RATE_RANGE[0]) * rng.random())
    vib_depth = float(VIBRATO_DEPTH_MAX * rng.random())
    if rng.random() < 0.3:
        vib_depth = 0.0
    subdivision = int(rng.choice(SUBDIVISION_CHOICES))
    duty = float(DUTY_RANGE[0] + (DUTY_RANGE[1] - DUTY_RANGE[0]) * rng.random())
    return MelodySpec(root_midi=root, scale=scale, degrees=degrees,
                      beats=[float(b) for b in beats], harmonics=harmonics,
                      base_bpm=bpm, decay_rate=decay, drone_amp=drone_amp,
                      drone_chord=chord, voice_interval=voice,
                      vibrato_rate_hz=vib_rate, vibrato_depth=vib_depth,
                      subdivision=subdivision, duty=duty)


def _degree_to_midi(spec: MelodySpec, degree: int) -> int:
    octave, step = divmod(degree, len(spec.scale))
    return spec.root_midi + 12 * octave + spec.scale[step]


def _note_envelope(t: np.ndarray, dur: float, spec: MelodySpec,
                   sample_rate_hz: int) -> np.ndarray:
    """Decay envelope with per-clique articulation.

    The note restarts `subdivision` times (repeated sub-onsets at the
    same pitch) and goes silent after `duty` of each sub-onset, with
    short linear attack/release ramps against clicks.
    """
    sub = max(1, spec.subdivision)
    seg = max(dur / sub, 1e-3)
    local = np.mod(t, seg)
    env = np.exp(-spec.decay_rate * local / seg)
    ramp = max(ATTACK_SECONDS, 1.0 / sample_rate_hz)
    env = env * np.clip(local / ramp, 0.0, 1.0)
    if spec.duty < 1.0:
        cut = seg * spec.duty
        env = env * np.clip((cut - local) / ramp, 0.0, 1.0)
    return env


def render_version(spec: MelodySpec, transform: VersionTransform,
                   duration_seconds: float = 30.0,
                   sample_rate_hz: int = CANONICAL_RATE) -> np.ndarray:
    """Render the melody, looped to ~duration_seconds, as float64 samples.

    The identity transform is the reference rendition; a transform with
    the same fields always reproduces the same waveform.
    """
    if duration_seconds <= 0:
        raise InvalidParam("duration_seconds must be positive")
    sr = sample_rate_hz
    beat_seconds = 60.0 / (spec.base_bpm * transform.tempo_factor)
    amp_rng = np.random.default_rng(transform.amp_jitter_seed)
    chunks = []
    total = 0.0
    idx = 0
    n_notes = len(spec.degrees)
    while total < duration_seconds:
        midi = _degree_to_midi(spec, spec.degrees[idx % n_notes])
        midi += transform.transpose_semitones
        dur = spec.beats[idx % n_notes] * beat_seconds
        n = max(1, int(round(dur * sr)))
        t = np.arange(n, dtype=np.float64) / sr
        voices = [(midi, 1.0)]
        if spec.voice_interval != 0:
            voices.append((midi + spec.voice_interval, PARALLEL_VOICE_AMP))
        sig = np.zeros(n, dtype=np.float64)
        vib = None
        if spec.vibrato_depth > 0 and spec.vibrato_rate_hz > 0:
            vib = np.sin(2.0 * math.pi * spec.vibrato_rate_hz * t)
        for vm, vamp in voices:
            f0 = _midi_to_hz(vm)
            # FM vibrato: modulation index = peak deviation / vibrato rate
            dev0 = f0 * (2.0 ** (spec.vibrato_depth / 12.0) - 1.0)
            for h, w in enumerate(spec.harmonics, start=1):
                weight = vamp * w * (transform.harmonic_tilt ** (h - 1))
                fh = f0 * h
                if fh < sr / 2:
                    phase = 2.0 * math.pi * fh * t
                    if vib is not None:
                        phase = phase + (h * dev0 / spec.vibrato_rate_hz) * vib
                    sig += weight * np.sin(phase)
        env = _note_envelope(t, dur, spec, sr)
        amp = 0.7 + 0.3 * amp_rng.random()
        chunks.append(amp * env * sig)
        total += n / sr
        idx += 1
    samples = np.concatenate(chunks)
    if spec.drone_amp > 0:
        # sustained pedal on intervals fixed relative to the root (an
        # octave below plus an optional chord tone), so a transposed
        # version carries a transposed drone
        t = np.arange(len(samples), dtype=np.float64) / sr
        for k, off in enumerate(spec.drone_chord):
            damp = 1.0 if k == 0 else DRONE_SECOND_AMP
            fd = _midi_to_hz(spec.root_midi + transform.transpose_semitones + off)
            samples = samples + spec.drone_amp * damp * np.sin(2.0 * math.pi * fd * t)
    if transform.noise_level > 0:
        noise_rng = np.random.default_rng(transform.amp_jitter_seed + 1)
        samples = samples + transform.noise_level * noise_rng.standard_normal(len(samples))
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples = samples * (0.9 / peak)
    return samples


def draw_transform(rng: np.random.Generator) -> VersionTransform:
    return VersionTransform(
        transpose_semitones=int(rng.choice(TRANSPOSE_CHOICES)),
        tempo_factor=float(TEMPO_RANGE[0] + (TEMPO_RANGE[1] - TEMPO_RANGE[0]) * rng.random()),
        amp_jitter_seed=int(rng.integers(0, 2 ** 31 - 1)),
        noise_level=float(0.001 + 0.002 * rng.random()),
        harmonic_tilt=float(0.8 + 0.4 * rng.random()),
    )


def synthesize_corpus(out_dir, config: SynthConfig) -> CliqueSet:
    """Write WAVs plus manifest.txt under out_dir; returns the clique set."""
    if config.n_cliques < 1 or config.versions_per_clique < 2:
        raise InvalidParam("need n_cliques >= 1 and versions_per_clique >= 2")
    os.makedirs(out_dir, exist_ok=True)
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    cs = CliqueSet()
    for ci in range(config.n_cliques):
        cid = f"c{ci:03d}"
        spec = make_melody(rng_for(config.master_seed, "melody", cid))
        members = []
        for vi in range(config.versions_per_clique):
            tid = f"{cid}_v{vi:02d}"
            vrng = rng_for(config.master_seed, "version", cid, str(vi))
            transform = VersionTransform.identity() if vi == 0 else draw_transform(vrng)
            if vi == 0:
                transform.amp_jitter_seed = int(vrng.integers(0, 2 ** 31 - 1))
                transform.noise_level = 0.001
            samples = render_version(spec, transform,
                                     duration_seconds=config.duration_seconds,
                                     sample_rate_hz=config.sample_rate_hz)
            rel = os.path.join("wav", tid + ".wav")
            write_wav_pcm16(os.path.join(out_dir, rel), samples, config.sample_rate_hz)
            members.append(tid)
            cs.paths[tid] = rel
        cs.cliques[cid] = members
    write_manifest(cs, os.path.join(out_dir, "manifest.txt"))
    return cs
