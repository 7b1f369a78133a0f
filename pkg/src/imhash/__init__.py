"""Inductive manifold hashing: binary codes from a manifold embedding of a small base set."""

from .baselines import LinearHashModel, lsh_train, pcah_train
from .errors import FormatError, NumericError
from .hashing import TrainConfig, encode, encode_batch, extend_all, extend_embedding, itq_rotation, train
from .metrics import evaluate, euclidean_ground_truth, label_ground_truth
from .modelio import load_codes, load_model, save_codes, save_model
from .supervised import SupervisedConfig, imhs_train
from .types import BaseSet, BinaryCodes, Embedding, FeatureMatrix, HashModel

__all__ = [
    "BaseSet", "BinaryCodes", "Embedding", "FeatureMatrix", "FormatError", "HashModel",
    "LinearHashModel", "NumericError", "SupervisedConfig", "TrainConfig", "encode", "encode_batch",
    "evaluate", "euclidean_ground_truth", "extend_all", "extend_embedding", "imhs_train",
    "itq_rotation", "label_ground_truth", "load_codes", "load_model", "lsh_train", "pcah_train",
    "save_codes", "save_model", "train",
]
