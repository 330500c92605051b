"""Euphemism-detection text classification toolkit.

A KimCNN classifier over concatenated multi-layer contextual word vectors,
trained end-to-end on a small reverse-mode autodiff engine with AdamW,
annealing schedules, and zero-patience early stopping, plus frozen-feature
classical probes and an F1 evaluation harness.
"""

__version__ = "0.1.0"

from . import corpus, embed, kimcnn, optim, tensor, train_eval
from .errors import ConfigError, DataError, NumericError, ShapeError
