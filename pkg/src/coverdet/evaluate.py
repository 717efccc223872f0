"""Embedding index, cosine-distance retrieval, and Prec@1 scoring.

Prec@1 follows the mini-batch protocol: each batch holds 8 positive
pairs (16 distinct tracks), every track queries the other 15, and a
query scores 1 exactly when its nearest neighbor by cosine distance is
its cover partner. Ties break on lexicographic track id so reports are
reproducible.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import EIDX_MAGIC, load_arrays, save_arrays
from .cqt import crop_or_pad, load_cqt
from .errors import (BatchUnderfull, DimMismatch, InvalidParam, MissingEmbedding,
                     MissingFeature, ZeroVector)
from .seeds import derive_seed

RANDOM_BASELINE = 1.0 / 15.0  # nearest of 15 candidates, one correct


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), in [0, 2]."""
    ud = np.asarray(u, dtype=np.float64)
    vd = np.asarray(v, dtype=np.float64)
    if ud.shape != vd.shape or ud.ndim != 1:
        raise DimMismatch(f"vectors disagree: {ud.shape} vs {vd.shape}")
    nu = np.linalg.norm(ud)
    nv = np.linalg.norm(vd)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine distance undefined for zero vectors")
    return float(1.0 - np.dot(ud, vd) / (nu * nv))


@dataclass
class EmbeddingIndex:
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    dim: int = 0

    @staticmethod
    def from_entries(entries: dict[str, np.ndarray]) -> "EmbeddingIndex":
        if not entries:
            raise InvalidParam("empty embedding index")
        dim = None
        clean = {}
        for tid in sorted(entries):
            vec = np.asarray(entries[tid], dtype=np.float32).reshape(-1)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise DimMismatch(
                    f"{tid}: dim {vec.size} != index dim {dim}")
            if not np.all(np.isfinite(vec)):
                raise InvalidParam(f"{tid}: non-finite embedding")
            if not np.any(vec):
                raise ZeroVector(f"{tid}: zero embedding vector")
            clean[tid] = vec
        return EmbeddingIndex(entries=clean, dim=int(dim))

    def vector(self, track_id: str) -> np.ndarray:
        if track_id not in self.entries:
            raise MissingEmbedding(f"no embedding for track {track_id!r}")
        return self.entries[track_id]


@dataclass
class EvalReport:
    prec_at_1: float
    n_batches: int
    batch_size: int
    per_batch_scores: list[float]
    dropped_pairs: int = 0

    def to_dict(self) -> dict:
        return {"prec_at_1": self.prec_at_1, "n_batches": self.n_batches,
                "batch_size": self.batch_size, "dropped_pairs": self.dropped_pairs,
                "per_batch_scores": self.per_batch_scores,
                "random_baseline": RANDOM_BASELINE}


def _greedy_batches(pairs, per_batch: int, rng) -> tuple[list, int]:
    """Disjoint-track batches of `per_batch` pairs from a seeded shuffle."""
    remaining = [pairs[i] for i in rng.permutation(len(pairs))]
    batches = []
    while True:
        batch, used, rest = [], set(), []
        for p in remaining:
            if len(batch) < per_batch and p.track_a not in used and p.track_b not in used:
                batch.append(p)
                used.add(p.track_a)
                used.add(p.track_b)
            else:
                rest.append(p)
        if len(batch) < per_batch:
            return batches, len(rest) + len(batch)
        batches.append(batch)
        remaining = rest


def _score_batch(index: EmbeddingIndex, batch) -> float:
    tracks = sorted({t for p in batch for t in (p.track_a, p.track_b)})
    partner = {}
    for p in batch:
        partner[p.track_a] = p.track_b
        partner[p.track_b] = p.track_a
    mat = np.stack([index.vector(t).astype(np.float64) for t in tracks])
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("zero embedding in evaluation batch")
    unit = mat / norms[:, None]
    dist = 1.0 - unit @ unit.T
    correct = 0
    for i, tid in enumerate(tracks):
        row = dist[i].copy()
        row[i] = np.inf
        j = int(np.argmin(row))  # first minimum = smallest track id
        if tracks[j] == partner[tid]:
            correct += 1
    return correct / len(tracks)


def prec_at_1(index: EmbeddingIndex, eval_pairs, batch_size: int = 16,
              rng_seed: int = 0) -> EvalReport:
    """Mean Prec@1 over seeded disjoint-track batches of positive pairs."""
    if batch_size < 4 or batch_size % 2 != 0:
        raise InvalidParam("batch_size must be even and >= 4")
    if not eval_pairs:
        raise BatchUnderfull("no positive pairs to evaluate")
    for p in eval_pairs:
        if p.label != 1:
            raise InvalidParam("prec_at_1 expects positive pairs only")
        index.vector(p.track_a)
        index.vector(p.track_b)
    per_batch = batch_size // 2
    rng = np.random.default_rng(rng_seed)
    batches, dropped = _greedy_batches(eval_pairs, per_batch, rng)
    if not batches:
        raise BatchUnderfull(
            f"cannot assemble one batch of {per_batch} disjoint pairs "
            f"from {len(eval_pairs)} candidates")
    scores = [_score_batch(index, b) for b in batches]
    return EvalReport(prec_at_1=float(np.mean(scores)), n_batches=len(batches),
                      batch_size=batch_size, per_batch_scores=scores,
                      dropped_pairs=dropped)


def build_index(model, feature_dir, cs, target_frames: int | None = None,
                crop_seed: int = 0) -> EmbeddingIndex:
    """Inference embeddings for every manifest track's stored features."""
    h, w = model.config.input_shape
    if target_frames is None:
        target_frames = w
    entries = {}
    for tid in cs.all_tracks():
        path = os.path.join(feature_dir, tid + ".cqt")
        if not os.path.exists(path):
            raise MissingFeature(f"no feature file for track {tid!r} at {path}")
        spec = load_cqt(path)
        if spec.n_bins != h:
            raise DimMismatch(
                f"{tid}: {spec.n_bins} bins, model expects {h}")
        fixed = crop_or_pad(spec, target_frames, derive_seed(crop_seed, "crop", tid))
        entries[tid] = model.embed(fixed.data)
    return EmbeddingIndex.from_entries(entries)


def nearest(index: EmbeddingIndex, query_id: str, k: int = 5) -> list[tuple[str, float]]:
    """k nearest tracks to the query by cosine distance, ties by id."""
    q = index.vector(query_id)
    scored = []
    for tid in sorted(index.entries):
        if tid == query_id:
            continue
        scored.append((cosine_distance(q, index.entries[tid]), tid))
    scored.sort()
    return [(tid, d) for d, tid in scored[:max(0, k)]]


def save_index(index: EmbeddingIndex, path):
    save_arrays(path, dict(index.entries), magic=EIDX_MAGIC)


def load_index(path) -> EmbeddingIndex:
    return EmbeddingIndex.from_entries(load_arrays(path, magic=EIDX_MAGIC))
