"""Cover-song detection: CQT features, a twin convnet trained on pair
labels, and cosine-distance Prec@1 retrieval."""

from ._kernels import BACKEND, backend_name
from .audio import AudioClip, load_wav, peak_normalize, resample_linear, write_wav_pcm16
from .cqt import CqtSpectrogram, bin_frequencies, compute_cqt, crop_or_pad, load_cqt, save_cqt
from .dataset import (CliqueSet, PairSample, parse_manifest, positive_pairs,
                      sample_negatives, split_validation)
from .errors import CoverdetError
from .evaluate import (EmbeddingIndex, EvalReport, build_index, cosine_distance,
                       load_index, nearest, prec_at_1, save_index)
from .siamese import (ArchitectureConfig, SiameseModel, TrainConfig, bce_loss,
                      compare, load_model, save_model, train)
from .synth import SynthConfig, synthesize_corpus

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "ArchitectureConfig", "BACKEND", "CliqueSet", "CoverdetError",
    "CqtSpectrogram", "EmbeddingIndex", "EvalReport", "PairSample", "SiameseModel",
    "SynthConfig", "TrainConfig", "backend_name", "bce_loss", "bin_frequencies",
    "build_index", "compare", "compute_cqt", "cosine_distance", "crop_or_pad",
    "load_cqt", "load_index", "load_model", "load_wav", "nearest", "parse_manifest",
    "peak_normalize", "positive_pairs", "prec_at_1", "resample_linear",
    "sample_negatives", "save_cqt", "save_index", "save_model", "split_validation",
    "synthesize_corpus", "train", "write_wav_pcm16",
]
