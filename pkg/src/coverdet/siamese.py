"""Twin shared-weight convnet, learned comparison head, and trainer.

Both inputs of a pair run through one parameter set (weight sharing is
structural: there is a single params dict). The head scores a pair as
p = sigmoid(sum_j alpha_j * (v_a[j] - v_b[j])^2) with alpha learned per
embedding dimension, trained with binary cross-entropy. Internally the
trainer works on the logit z so saturated probabilities keep gradients:
bce = softplus(z) - y*z.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluate as evalmod
from . import tensor as T
from .checkpoint import load_arrays, save_arrays
from .cqt import LOG_FLOOR_DB
from .dataset import CliqueSet, PairSample, positive_pairs, sample_negatives
from .errors import (EmptyDataset, InvalidParam, NumericalFault, ShapeMismatch)
from .optim import Adam
from .seeds import derive_seed, rng_for

log = logging.getLogger("coverdet.train")

PROB_CLAMP = 1e-7


@dataclass
class ArchitectureConfig:
    """Layer plan for the shared extractor f.

    Filter counts default to a decreasing schedule; every conv layer is
    followed by relu and a 2x2 max pool, every hidden FC by relu and
    dropout, and the final FC is linear (its activations are the
    embedding; dropout still applies to it during training).
    """
    conv_layers: tuple = ((64, 5, 5), (32, 3, 3), (16, 3, 3))
    fc_widths: tuple = (128, 64)
    input_shape: tuple = (84, 130)

    @property
    def embedding_dim(self) -> int:
        return int(self.fc_widths[-1])

    def validate(self):
        if len(self.conv_layers) < 1:
            raise InvalidParam("need at least one conv layer")
        if len(self.fc_widths) < 1:
            raise InvalidParam("need at least one FC layer")
        for layer in self.conv_layers:
            if len(layer) != 3 or any(int(v) < 1 for v in layer):
                raise InvalidParam(f"bad conv layer spec {layer!r}")
        if any(int(w) < 1 for w in self.fc_widths):
            raise InvalidParam("FC widths must be positive")
        if len(self.input_shape) != 2 or any(int(v) < 1 for v in self.input_shape):
            raise InvalidParam(f"bad input shape {self.input_shape!r}")
        self.feature_shapes()  # raises if the stack eats the input

    def feature_shapes(self) -> list:
        """(channels, h, w) after each conv+pool block, then the flat dim."""
        c, (h, w) = 1, self.input_shape
        shapes = []
        for f, kh, kw in self.conv_layers:
            if kh > h or kw > w:
                raise InvalidParam(
                    f"conv kernel {kh}x{kw} does not fit feature map {h}x{w}")
            h, w = h - kh + 1, w - kw + 1
            h, w = (h + 1) // 2, (w + 1) // 2  # pool pads odd edges
            c = f
            shapes.append((c, h, w))
        return shapes

    @property
    def flat_dim(self) -> int:
        c, h, w = self.feature_shapes()[-1]
        return c * h * w


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 5
    dropout_rate: float = 0.5
    l2_lambda: float = 0.005
    lr: float = 0.001
    seed: int = 0

    def validate(self):
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise InvalidParam("batch_size must be even and >= 2 (pair batches)")
        if self.epochs < 1:
            raise InvalidParam("epochs must be >= 1")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise InvalidParam("dropout_rate outside [0, 1)")


def scale_input(x: np.ndarray) -> np.ndarray:
    """Map log-magnitude dB in [-80, 0] to roughly [0, 1]."""
    return (np.asarray(x, dtype=np.float32) - np.float32(LOG_FLOOR_DB)) \
        / np.float32(-LOG_FLOOR_DB)


class SiameseModel:
    """One extractor parameter set, shared by both twins, plus alpha."""

    def __init__(self, config: ArchitectureConfig, init_seed: int = 0):
        config.validate()
        self.config = config
        self.params: dict[str, T.Tensor] = {}
        rng = rng_for(init_seed, "init")
        c_in = 1
        for i, (f, kh, kw) in enumerate(config.conv_layers):
            fan_in = c_in * kh * kw
            std = math.sqrt(2.0 / fan_in)
            w = rng.standard_normal((f, c_in, kh, kw)) * std
            self.params[f"conv{i}.w"] = T.Tensor(w, requires_grad=True,
                                                 dtype=np.float32, name=f"conv{i}.w")
            self.params[f"conv{i}.b"] = T.Tensor(np.zeros(f), requires_grad=True,
                                                 dtype=np.float32, name=f"conv{i}.b")
            c_in = f
        d_in = config.flat_dim
        for i, width in enumerate(config.fc_widths):
            std = math.sqrt(2.0 / d_in)
            w = rng.standard_normal((d_in, width)) * std
            self.params[f"fc{i}.w"] = T.Tensor(w, requires_grad=True,
                                               dtype=np.float32, name=f"fc{i}.w")
            self.params[f"fc{i}.b"] = T.Tensor(np.zeros(width), requires_grad=True,
                                               dtype=np.float32, name=f"fc{i}.b")
            d_in = width
        # parameters live in float32 so the checkpoint container round-trips
        # bit for bit; gradcheck builds its own float64 graphs
        self.params["alpha"] = T.Tensor(np.ones(config.embedding_dim),
                                        requires_grad=True, dtype=np.float32,
                                        name="alpha")

    @property
    def alpha(self) -> T.Tensor:
        return self.params["alpha"]

    def l2_param_names(self):
        """Weights only: biases and the comparison head stay unpenalized."""
        return tuple(n for n in self.params if n.endswith(".w"))

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def forward(self, x: np.ndarray, training: bool = False,
                dropout_rate: float = 0.0, rng=None) -> T.Tensor:
        """Extractor f on a scaled batch [n,1,H,W] -> embeddings [n,d]."""
        h, w = self.config.input_shape
        x = np.asarray(x, dtype=np.float32)
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (h, w):
            raise ShapeMismatch(f"expected [n,1,{h},{w}] input, got {x.shape}")
        if training and dropout_rate > 0.0 and rng is None:
            raise InvalidParam("training forward with dropout needs an rng")
        t = T.Tensor(x)
        for i in range(len(self.config.conv_layers)):
            t = T.conv2d(t, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"])
            t = T.relu(t)
            t = T.maxpool2(t)
        t = T.reshape(t, (x.shape[0], self.config.flat_dim))
        last = len(self.config.fc_widths) - 1
        for i in range(len(self.config.fc_widths)):
            t = T.dense(t, self.params[f"fc{i}.w"], self.params[f"fc{i}.b"])
            if i != last:
                t = T.relu(t)
            t = T.dropout(t, dropout_rate, training, rng)
        return t

    def embed(self, spec_db: np.ndarray) -> np.ndarray:
        """Inference embedding of one dB spectrogram [H,W] (or a stack)."""
        arr = np.asarray(spec_db, dtype=np.float32)
        single = arr.ndim == 2
        if single:
            arr = arr[None]
        x = scale_input(arr)[:, None, :, :]
        with T.no_grad():
            out = self.forward(x, training=False)
        return out.data[0].copy() if single else out.data.copy()


def compare(model: SiameseModel, v_a, v_b) -> float:
    """p = sigmoid(sum_j alpha_j (v_a - v_b)_j^2), symmetric, in (0,1)."""
    va = np.asarray(v_a.data if isinstance(v_a, T.Tensor) else v_a, dtype=np.float64)
    vb = np.asarray(v_b.data if isinstance(v_b, T.Tensor) else v_b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ShapeMismatch(f"compare needs equal 1-d vectors, got {va.shape} {vb.shape}")
    alpha = model.alpha.data.astype(np.float64)
    if alpha.shape != va.shape:
        raise ShapeMismatch(f"alpha dim {alpha.shape} vs vector dim {va.shape}")
    z = float(np.sum(alpha * (va - vb) ** 2))
    if z >= 0:
        return float(1.0 / (1.0 + math.exp(-z)))
    e = math.exp(z)
    return float(e / (1.0 + e))


def bce_loss(p: float, y: int) -> float:
    """-[y log p + (1-y) log(1-p)] with p clamped to [1e-7, 1-1e-7]."""
    if y not in (0, 1):
        raise InvalidParam(f"label must be 0 or 1, got {y!r}")
    p = min(max(float(p), PROB_CLAMP), 1.0 - PROB_CLAMP)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def pair_logits(model: SiameseModel, out: T.Tensor, n_pairs: int) -> T.Tensor:
    """Split a [2B,d] twin forward into halves and score: z = sum a*(va-vb)^2."""
    va = T.slice_rows(out, 0, n_pairs)
    vb = T.slice_rows(out, n_pairs, 2 * n_pairs)
    diff = va - vb
    weighted = T.mul(T.mul(diff, diff), model.alpha)
    return T.tsum(weighted, axis=1)


def pair_loss(z: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Mean BCE from logits: mean(softplus(z) - y*z); safe when saturated."""
    y = np.asarray(labels, dtype=np.float32)
    neg_y = T.Tensor(-y)
    return T.tmean(T.softplus(z) + T.mul(z, neg_y))


def _stack_pair_batch(pairs, features) -> tuple[np.ndarray, np.ndarray]:
    xa = np.stack([features[p.track_a] for p in pairs])
    xb = np.stack([features[p.track_b] for p in pairs])
    x = scale_input(np.concatenate([xa, xb]))[:, None, :, :]
    y = np.array([p.label for p in pairs], dtype=np.float32)
    return x, y


def _epoch_order(pos, neg, rng) -> list:
    """Shuffle each class, then interleave pos/neg so batches stay balanced."""
    p = [pos[i] for i in rng.permutation(len(pos))]
    n = [neg[i] for i in rng.permutation(len(neg))]
    out = []
    for a, b in zip(p, n):
        out.append(a)
        out.append(b)
    k = min(len(p), len(n))
    out.extend(p[k:])
    out.extend(n[k:])
    return out


def validation_loss(model: SiameseModel, val_pairs, features, chunk: int = 32) -> float:
    """Mean probability-form BCE over held-out pairs, dropout off."""
    total = 0.0
    with T.no_grad():
        for lo in range(0, len(val_pairs), chunk):
            part = val_pairs[lo:lo + chunk]
            x, y = _stack_pair_batch(part, features)
            out = model.forward(x, training=False)
            z = pair_logits(model, out, len(part)).data.astype(np.float64)
            p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                         np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
            total += float(np.sum(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
    return total / len(val_pairs)


def _val_prec_at_1(model, val_pairs, features, seed) -> tuple[float, int]:
    positives = [p for p in val_pairs if p.label == 1]
    tracks = sorted({t for p in positives for t in (p.track_a, p.track_b)})
    if not positives or len(tracks) < 16:
        return float("nan"), 0
    index = evalmod.EmbeddingIndex.from_entries(
        {t: model.embed(features[t]) for t in tracks})
    report = evalmod.prec_at_1(index, positives, rng_seed=seed)
    return report.prec_at_1, report.n_batches


def train(model: SiameseModel, train_cliques: CliqueSet, features: dict,
          cfg: TrainConfig, val_pairs: list[PairSample] | None = None,
          exclude_pairs: set | None = None,
          train_positives: list[PairSample] | None = None) -> list[dict]:
    """Mini-batch ADAM on mean pair BCE; returns one metrics dict per epoch.

    Negatives are resampled every epoch from the training cliques with an
    epoch-derived seed; `exclude_pairs` keeps the draw away from pairs
    reserved for validation, and `train_positives` restricts the positive
    side likewise (default: every within-clique pair). Metrics records
    carry no wall-clock so runs replay bitwise; timing goes to the logger
    instead.
    """
    cfg.validate()
    pos = train_positives if train_positives is not None \
        else positive_pairs(train_cliques)
    if not pos:
        raise EmptyDataset("no positive pairs in the training cliques")
    for p in pos:
        if p.track_a not in features or p.track_b not in features:
            raise EmptyDataset(f"missing features for pair {p.track_a},{p.track_b}")
    opt = Adam(model.params, lr=cfg.lr, l2_lambda=cfg.l2_lambda,
               l2_names=model.l2_param_names())
    history = []
    global_step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        neg = sample_negatives(train_cliques, len(pos),
                               derive_seed(cfg.seed, "train-neg", epoch),
                               exclude=exclude_pairs)
        order = _epoch_order(pos, neg, rng_for(cfg.seed, "order", epoch))
        drop_rng = rng_for(cfg.seed, "dropout", epoch)
        n_steps = len(order) // cfg.batch_size
        if n_steps == 0:
            raise EmptyDataset(
                f"{len(order)} pairs cannot fill one batch of {cfg.batch_size}")
        loss_sum = 0.0
        for s in range(n_steps):
            batch = order[s * cfg.batch_size:(s + 1) * cfg.batch_size]
            x, y = _stack_pair_batch(batch, features)
            out = model.forward(x, training=True,
                                dropout_rate=cfg.dropout_rate, rng=drop_rng)
            loss = pair_loss(pair_logits(model, out, len(batch)), y)
            lval = float(loss.data)
            if not np.isfinite(lval):
                raise NumericalFault(
                    f"non-finite loss {lval} at epoch {epoch} step {s}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            loss_sum += lval
            global_step += 1
        record = {"stage": "train", "epoch": epoch, "step": global_step,
                  "train_loss": loss_sum / n_steps}
        if val_pairs:
            record["val_loss"] = validation_loss(model, val_pairs, features)
            prec, nb = _val_prec_at_1(model, val_pairs, features,
                                      derive_seed(cfg.seed, "val-eval", epoch))
            if nb > 0:
                record["val_prec_at_1"] = prec
        history.append(record)
        log.info("%s wall=%.1fs", json.dumps(record, sort_keys=True),
                 time.perf_counter() - t0)
    return history


# ---------------------------------------------------------------------------
# checkpoint round-trip
# ---------------------------------------------------------------------------

def _config_arrays(config: ArchitectureConfig) -> dict[str, np.ndarray]:
    return {
        "config.conv": np.array(config.conv_layers, dtype=np.float32),
        "config.fc": np.array(config.fc_widths, dtype=np.float32),
        "config.input": np.array(config.input_shape, dtype=np.float32),
    }


def save_model(model: SiameseModel, path):
    arrays = dict(_config_arrays(model.config))
    for name, p in model.params.items():
        arrays[name] = p.data
    save_arrays(path, arrays)


def load_model(path) -> SiameseModel:
    arrays = load_arrays(path)
    conv = tuple(tuple(int(round(v)) for v in row) for row in arrays["config.conv"])
    fc = tuple(int(round(v)) for v in arrays["config.fc"])
    inp = tuple(int(round(v)) for v in arrays["config.input"])
    model = SiameseModel(ArchitectureConfig(conv, fc, inp))
    for name, p in model.params.items():
        if name not in arrays:
            raise ShapeMismatch(f"checkpoint missing parameter {name}")
        if arrays[name].shape != p.data.shape:
            raise ShapeMismatch(
                f"checkpoint {name} has shape {arrays[name].shape}, "
                f"model expects {p.data.shape}")
        p.data = arrays[name].astype(p.data.dtype)
    return model
