"""Convolutional sentence classifier head.

Parallel valid 1-D convolutions of several widths slide over the embedded
sequence; per-channel responses are summed before one bias and ReLU, pooled
positions whose window touches padding are masked out, the per-width maxima
are concatenated, dropped out during training, and mapped to class logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .embed import EmbeddedBatch
from .errors import ShapeError
from .tensor import Node, Parameter


@dataclass(frozen=True)
class KimCNNConfig:
    input_dim: int
    widths: tuple[int, ...] = (3, 4, 5)
    maps_per_width: int = 100
    dropout_p: float = 0.5
    num_classes: int = 2

    def __post_init__(self):
        if not self.widths or any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be non-empty and >= 1, got {self.widths}")
        if self.maps_per_width < 1:
            raise ValueError(f"maps_per_width must be >= 1, got {self.maps_per_width}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def pooled_dim(self) -> int:
        return len(self.widths) * self.maps_per_width


class KimCNNModel:
    def __init__(self, config: KimCNNConfig, filters: dict[int, Parameter],
                 biases: dict[int, Parameter], classifier_w: Parameter, classifier_b: Parameter):
        self.config = config
        self.filters = filters
        self.biases = biases
        self.classifier_w = classifier_w
        self.classifier_b = classifier_b

    def parameters(self) -> list[Parameter]:
        out = []
        for w in self.config.widths:
            out.append(self.filters[w])
            out.append(self.biases[w])
        out.append(self.classifier_w)
        out.append(self.classifier_b)
        return out


def init(config: KimCNNConfig, seed: int = 0, dtype=np.float32) -> KimCNNModel:
    """Xavier-uniform filters and classifier, zero biases, seeded."""
    rng = tensor.philox(seed)
    filters, biases = {}, {}
    for w in config.widths:
        fan_in = w * config.input_dim
        filters[w] = Parameter(
            f"kimcnn.conv{w}.weight",
            tensor.xavier_uniform(rng, (config.maps_per_width, w, config.input_dim),
                                  fan_in, config.maps_per_width, dtype),
        )
        biases[w] = Parameter(
            f"kimcnn.conv{w}.bias", np.zeros(config.maps_per_width, dtype=dtype), decay=False
        )
    classifier_w = Parameter(
        "kimcnn.classifier.weight",
        tensor.xavier_uniform(rng, (config.pooled_dim, config.num_classes),
                              config.pooled_dim, config.num_classes, dtype),
    )
    classifier_b = Parameter(
        "kimcnn.classifier.bias", np.zeros(config.num_classes, dtype=dtype), decay=False
    )
    return KimCNNModel(config, filters, biases, classifier_w, classifier_b)


def forward(
    model: KimCNNModel,
    batch: EmbeddedBatch,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Node:
    """Logits [batch, classes] for one embedded batch.

    Each filter bank runs over every channel and the responses are summed
    before the bias and ReLU, so an all-zero extra channel changes nothing.
    Max-over-time only sees windows made entirely of real tokens.
    """
    cfg = model.config
    for ch in batch.channels:
        if ch.value.shape[-1] != cfg.input_dim:
            raise ShapeError(
                f"channel dim {ch.value.shape[-1]} does not match model input_dim {cfg.input_dim}"
            )
    mask = np.asarray(batch.mask)
    pooled = []
    for w in cfg.widths:
        response = None
        for ch in batch.channels:
            conv = tensor.conv1d_valid(ch, model.filters[w].node)
            response = conv if response is None else tensor.add(response, conv)
        response = tensor.add(response, model.biases[w].node)
        response = tensor.relu(response)
        window_mask = _full_windows(mask, w)
        if not window_mask.any(axis=1).all():
            bad = int(np.flatnonzero(~window_mask.any(axis=1))[0])
            raise ShapeError(f"sequence shorter than filter: example {bad} has no width-{w} window")
        pooled.append(tensor.max_over_time(response, window_mask))
    features = tensor.concat(pooled, axis=1)
    features = tensor.dropout(features, cfg.dropout_p, train, rng=rng)
    return tensor.linear(features, model.classifier_w.node, model.classifier_b.node)


def _full_windows(mask: np.ndarray, width: int) -> np.ndarray:
    """Boolean [batch, seq-width+1] marking windows with no PAD inside."""
    if mask.shape[1] < width:
        raise ShapeError(f"sequence shorter than filter: length {mask.shape[1]} < width {width}")
    windows = np.lib.stride_tricks.sliding_window_view(mask.astype(bool), width, axis=1)
    return windows.all(axis=-1)


def loss(logits: Node, labels) -> Node:
    """Mean softmax cross-entropy over the batch."""
    return tensor.mean(tensor.softmax_cross_entropy(logits, labels))
