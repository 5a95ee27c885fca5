"""Binary hyperdimensional computing classifiers.

Record-based encoding, popcount Hamming inference and four ways of training
the class hypervectors: averaging, retraining, enhanced retraining and
learning the equivalent single-layer binary network.
"""

__version__ = "0.1.0"

from .hv import (  # noqa: E402
    Accumulator,
    Hypervector,
    accumulate,
    binarize_sign,
    bind,
    cosine_from_hamming,
    hamming,
    random_hv,
)
from .encoder import (  # noqa: E402
    EncodedDataset,
    FeatureStats,
    ItemMemory,
    build_item_memory,
    encode,
    encode_dataset,
    fit_stats,
    quantize,
)
from .classifier import ClassModel, Prediction, evaluate, predict  # noqa: E402
from .kernels import BACKEND_NAME  # noqa: E402

__all__ = [
    "Accumulator", "Hypervector", "accumulate", "binarize_sign", "bind",
    "cosine_from_hamming", "hamming", "random_hv",
    "EncodedDataset", "FeatureStats", "ItemMemory", "build_item_memory",
    "encode", "encode_dataset", "fit_stats", "quantize",
    "ClassModel", "Prediction", "evaluate", "predict", "BACKEND_NAME",
]
