"""Clique manifests and cover/non-cover pair sampling.

Manifest grammar (UTF-8 text):

    % or #        comment / header line
    -<clique_id>  opens a clique
    <track_id>[,<relative path>]   track record in the open clique

Cliques keep insertion order; singleton cliques are dropped (with a
counted warning) since they contribute no pairs.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (DuplicateTrack, EmptyManifest, InsufficientDiversity, InvalidParam,
                     IoFailure, NoOpenClique)

log = logging.getLogger("coverdet.dataset")


@dataclass
class PairSample:
    track_a: str
    track_b: str
    label: int  # 1 = cover pair (same clique), 0 = non-cover pair

    def key(self) -> tuple[str, str]:
        return (self.track_a, self.track_b) if self.track_a <= self.track_b \
            else (self.track_b, self.track_a)


@dataclass
class CliqueSet:
    cliques: dict[str, list[str]] = field(default_factory=dict)
    paths: dict[str, str] = field(default_factory=dict)
    dropped_singletons: int = 0

    @property
    def n_cliques(self) -> int:
        return len(self.cliques)

    @property
    def n_tracks(self) -> int:
        return sum(len(m) for m in self.cliques.values())

    @property
    def n_positive_pairs(self) -> int:
        return sum(len(m) * (len(m) - 1) // 2 for m in self.cliques.values())

    def clique_of(self) -> dict[str, str]:
        return {t: cid for cid, members in self.cliques.items() for t in members}

    def all_tracks(self) -> list[str]:
        return sorted(t for members in self.cliques.values() for t in members)

    def restricted_to(self, clique_ids) -> "CliqueSet":
        keep = set(clique_ids)
        cliques = {cid: list(members) for cid, members in self.cliques.items() if cid in keep}
        paths = {t: self.paths[t] for members in cliques.values() for t in members
                 if t in self.paths}
        return CliqueSet(cliques=cliques, paths=paths)


def parse_manifest(path) -> CliqueSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_manifest_lines(lines, origin=str(path))


def parse_manifest_lines(lines, origin="<memory>") -> CliqueSet:
    cliques: dict[str, list[str]] = {}
    paths: dict[str, str] = {}
    seen_tracks: set[str] = set()
    current: list[str] | None = None
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line[0] in "%#":
            continue
        if line.startswith("-"):
            cid = line[1:].strip()
            if not cid:
                raise InvalidParam(f"{origin}:{lineno}: clique line with empty id")
            if cid in cliques:
                raise InvalidParam(f"{origin}:{lineno}: clique {cid!r} opened twice")
            current = cliques.setdefault(cid, [])
            continue
        if current is None:
            raise NoOpenClique(f"{origin}:{lineno}: track record before any clique line")
        track_id, _, rel_path = line.partition(",")
        track_id = track_id.strip()
        if track_id in seen_tracks:
            raise DuplicateTrack(f"{origin}:{lineno}: track {track_id!r} already defined")
        seen_tracks.add(track_id)
        current.append(track_id)
        if rel_path.strip():
            paths[track_id] = rel_path.strip()
    dropped = 0
    kept = {}
    for cid, members in cliques.items():
        if len(members) >= 2:
            kept[cid] = members
        else:
            dropped += 1
    if dropped:
        log.warning("%s: dropped %d singleton clique(s)", origin, dropped)
    if not kept:
        raise EmptyManifest(f"{origin}: no clique with >= 2 members")
    paths = {t: p for cid, members in kept.items() for t in members
             for p in [paths.get(t)] if p is not None}
    return CliqueSet(cliques=kept, paths=paths, dropped_singletons=dropped)


def serialize_manifest(cs: CliqueSet) -> str:
    out = ["% coverdet manifest"]
    for cid, members in cs.cliques.items():
        out.append(f"-{cid}")
        for t in members:
            out.append(f"{t},{cs.paths[t]}" if t in cs.paths else t)
    return "\n".join(out) + "\n"


def write_manifest(cs: CliqueSet, path):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(serialize_manifest(cs))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def positive_pairs(cs: CliqueSet) -> list[PairSample]:
    """All unordered within-clique pairs, label 1, sorted by id."""
    pairs = []
    for cid in sorted(cs.cliques):
        for a, b in itertools.combinations(sorted(cs.cliques[cid]), 2):
            pairs.append(PairSample(a, b, 1))
    return pairs


def _max_cross_pairs(cs: CliqueSet) -> int:
    n = cs.n_tracks
    return n * (n - 1) // 2 - cs.n_positive_pairs


def _enumerate_cross_pairs(cs: CliqueSet):
    tracks = cs.all_tracks()
    clique = cs.clique_of()
    for a, b in itertools.combinations(tracks, 2):
        if clique[a] != clique[b]:
            yield (a, b)


def sample_negatives(cs: CliqueSet, count: int, rng_seed: int,
                     exclude: set[tuple[str, str]] | None = None) -> list[PairSample]:
    """`count` distinct cross-clique pairs, uniform with rejection, label 0.

    `exclude` removes specific unordered pairs from the draw (used to keep
    resampled training negatives off the validation set). Near exhaustion
    the sampler switches to a full enumeration so the draw still
    terminates; both routes are deterministic under the seed.
    """
    if cs.n_cliques < 2:
        raise InsufficientDiversity("need at least 2 cliques to form non-cover pairs")
    exclude = exclude or set()
    available = _max_cross_pairs(cs) - len(exclude)
    if count > available:
        raise InsufficientDiversity(
            f"requested {count} cross-clique pairs but only {available} exist")
    rng = np.random.default_rng(rng_seed)
    if count * 2 >= available:
        pool = sorted(p for p in _enumerate_cross_pairs(cs) if p not in exclude)
        idx = rng.permutation(len(pool))[:count]
        return [PairSample(pool[i][0], pool[i][1], 0) for i in sorted(idx)]
    tracks = cs.all_tracks()
    clique = cs.clique_of()
    chosen: set[tuple[str, str]] = set()
    out = []
    attempts = 0
    cap = 1000 + 200 * count
    while len(out) < count:
        attempts += 1
        if attempts > cap:
            pool = sorted(p for p in _enumerate_cross_pairs(cs)
                          if p not in exclude and p not in chosen)
            idx = rng.permutation(len(pool))[:count - len(out)]
            out.extend(PairSample(pool[i][0], pool[i][1], 0) for i in sorted(idx))
            break
        i, j = rng.integers(0, len(tracks), size=2)
        if i == j:
            continue
        a, b = tracks[i], tracks[j]
        if a > b:
            a, b = b, a
        if clique[a] == clique[b] or (a, b) in chosen or (a, b) in exclude:
            continue
        chosen.add((a, b))
        out.append(PairSample(a, b, 0))
    return out


def split_validation(pairs: list[PairSample], n_holdout: int, rng_seed: int,
                     clique_of: dict[str, str] | None = None,
                     by_clique: bool = False) -> tuple[list[PairSample], list[PairSample]]:
    """Hold out `n_holdout` pairs, stratified 50/50 by label (within one).

    Default mode mirrors the usual protocol: pairs are drawn at random, so
    a track may appear on both sides. With `by_clique` (requires
    `clique_of`) whole cliques move to validation: positive pairs come
    only from held-out cliques, negatives only connect held-out cliques,
    and pairs crossing the boundary are discarded rather than leaked.
    """
    if n_holdout < 0 or n_holdout >= len(pairs):
        if n_holdout == 0:
            return list(pairs), []
        raise InvalidParam(f"n_holdout {n_holdout} must be in [0, len(pairs))")
    if by_clique and clique_of is None:
        raise InvalidParam("by_clique split needs a clique_of mapping")
    n_pos_hold = n_holdout // 2
    n_neg_hold = n_holdout - n_pos_hold
    positives = [p for p in pairs if p.label == 1]
    negatives = [p for p in pairs if p.label == 0]
    rng = np.random.default_rng(rng_seed)
    if not by_clique:
        if len(positives) < n_pos_hold or len(negatives) < n_neg_hold:
            raise InvalidParam("not enough pairs of each label for a stratified holdout")
        pos_idx = set(rng.permutation(len(positives))[:n_pos_hold].tolist())
        neg_idx = set(rng.permutation(len(negatives))[:n_neg_hold].tolist())
        val = [p for i, p in enumerate(positives) if i in pos_idx] + \
              [p for i, p in enumerate(negatives) if i in neg_idx]
        train = [p for i, p in enumerate(positives) if i not in pos_idx] + \
                [p for i, p in enumerate(negatives) if i not in neg_idx]
        return train, val
    # clique-strict: move whole cliques until the positive quota is met;
    # if validation negatives are wanted, at least two cliques must move
    by_cid: dict[str, list[PairSample]] = {}
    for p in positives:
        cid = clique_of[p.track_a]
        by_cid.setdefault(cid, []).append(p)
    cids = sorted(by_cid)
    order = rng.permutation(len(cids))
    val_cliques: set[str] = set()
    quota = 0
    min_cliques = 2 if n_neg_hold > 0 else 1
    for i in order:
        if quota >= n_pos_hold and len(val_cliques) >= min_cliques:
            break
        val_cliques.add(cids[i])
        quota += len(by_cid[cids[i]])
    if len(val_cliques) < min_cliques or len(val_cliques) == len(cids):
        raise InsufficientDiversity(
            f"clique-strict holdout needs >= {min_cliques} validation clique(s) "
            f"and >= 1 training clique; have {len(cids)} cliques total")
    val_pos = [p for p in positives if clique_of[p.track_a] in val_cliques]
    dropped_pos = len(val_pos) - n_pos_hold
    if dropped_pos > 0:
        drop = set(rng.permutation(len(val_pos))[:dropped_pos].tolist())
        val_pos = [p for i, p in enumerate(val_pos) if i not in drop]
    train_pos = [p for p in positives if clique_of[p.track_a] not in val_cliques]

    def side(pair):
        a_val = clique_of[pair.track_a] in val_cliques
        b_val = clique_of[pair.track_b] in val_cliques
        return "val" if (a_val and b_val) else ("train" if not (a_val or b_val) else "drop")

    val_neg_all = [p for p in negatives if side(p) == "val"]
    train_neg = [p for p in negatives if side(p) == "train"]
    if len(val_neg_all) >= n_neg_hold:
        keep = set(rng.permutation(len(val_neg_all))[:n_neg_hold].tolist())
        val_neg = [p for i, p in enumerate(val_neg_all) if i in keep]
    else:
        # top up with fresh negatives drawn inside the validation cliques
        val_tracks = sorted(t for t, cid in clique_of.items() if cid in val_cliques)
        sub = CliqueSet(cliques={cid: [t for t in val_tracks if clique_of[t] == cid]
                                 for cid in sorted(val_cliques)})
        have = {p.key() for p in val_neg_all}
        extra = sample_negatives(sub, n_neg_hold - len(val_neg_all),
                                 rng_seed=int(rng.integers(0, 2 ** 63 - 1)), exclude=have)
        val_neg = val_neg_all + extra
    dropped = len(pairs) - len(train_pos) - len(train_neg) - len(val_pos) - len(val_neg_all)
    if dropped > 0:
        log.info("clique-strict split dropped %d boundary pair(s)", dropped)
    return train_pos + train_neg, val_pos + val_neg
