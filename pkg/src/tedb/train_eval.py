"""Training loop, metrics, checkpointing, frozen-feature probes, and report
tables.

One training run is single-threaded and fully determined by (seed, config,
data): batching order, dropout masks, and initialization all come from the
run seed. The final-epoch parameters are the returned artifact, matching the
train-to-saturation protocol; nothing is selected on a held-out split.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import kimcnn, tensor
from .corpus import Example, Vocabulary
from .embed import (
    PrecomputedStore,
    StaticTable,
    ToyEncoder,
    assemble_batch,
)
from .errors import DataError, NumericError, ShapeError
from .kimcnn import KimCNNConfig, KimCNNModel
from .optim import AdamW, EarlyStop, Schedule, early_stop_update, lr_at
from .tensor import Node, Parameter, backward

CHECKPOINT_MAGIC = b"TEDBCKPT"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# metrics


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class Metrics:
    """Binary confusion counts and derived scores; class 1 is positive."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    macro_f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "Metrics":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = f1_score(precision, recall)
        f1_neg = 2 * tn / (2 * tn + fn + fp) if 2 * tn + fn + fp else 0.0
        return cls(tp, fp, fn, tn, precision, recall, f1, (f1 + f1_neg) / 2.0)

    @classmethod
    def from_predictions(cls, predictions, labels) -> "Metrics":
        predictions = np.asarray(predictions)
        labels = np.asarray(labels)
        if predictions.shape != labels.shape:
            raise ShapeError(
                f"predictions shape {predictions.shape} does not match labels {labels.shape}"
            )
        tp = int(((predictions == 1) & (labels == 1)).sum())
        fp = int(((predictions == 1) & (labels == 0)).sum())
        fn = int(((predictions == 0) & (labels == 1)).sum())
        tn = int(((predictions == 0) & (labels == 0)).sum())
        return cls.from_counts(tp, fp, fn, tn)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "macro_f1": self.macro_f1,
        }


# ---------------------------------------------------------------------------
# configuration and model bundle


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 2e-5
    schedule: str = "cosine_restarts"
    cycles: int = 5
    lr_min: float = 0.0
    max_epochs: int = 10
    seed: int = 0
    dropout_p: float = 0.5
    weight_decay: float = 0.01
    max_len: int = 150
    stopping: str = "fixed"
    min_delta: float = 1e-4
    metric: str = "train_loss"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.max_len < 5:
            raise ValueError(f"max_len must be >= 5, got {self.max_len}")
        if self.stopping not in ("auto", "fixed"):
            raise ValueError(f"stopping must be auto or fixed, got {self.stopping!r}")
        if self.metric not in ("train_loss", "train_f1"):
            raise ValueError(f"metric must be train_loss or train_f1, got {self.metric!r}")


Frontend = StaticTable | ToyEncoder | PrecomputedStore


@dataclass
class ModelBundle:
    """Everything one classifier needs at forward time."""

    vocab: Vocabulary | None
    frontends: list[Frontend]
    model: KimCNNModel

    def parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        for f in self.frontends:
            params.extend(f.parameters())
        params.extend(self.model.parameters())
        return params

    def logits(self, examples: list[Example], max_len: int, train: bool = False,
               rng: np.random.Generator | None = None) -> Node:
        batch = assemble_batch(self.frontends, examples, self.vocab, max_len, train=train)
        return kimcnn.forward(self.model, batch, train=train, rng=rng)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    metrics: Metrics
    lr: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "loss": self.loss, "lr": self.lr, **self.metrics.to_dict()}


@dataclass
class Checkpoint:
    """Named parameter grids plus enough metadata to rebuild the model."""

    params: dict[str, np.ndarray]
    config: TrainConfig
    epoch: int
    history: list[dict]
    frontend_specs: list[dict]
    cnn_config: dict
    vocab_tokens: list[str] | None
    version: int = CHECKPOINT_VERSION


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochStats]
    stopped_epoch: int | None


# ---------------------------------------------------------------------------
# training


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


def _epoch_metrics(bundle: ModelBundle, examples: list[Example], labels: np.ndarray,
                   max_len: int, batch_size: int) -> tuple[float, Metrics]:
    """Deterministic full-pass loss and confusion metrics with dropout off."""
    losses = []
    preds = np.zeros(len(examples), dtype=np.int64)
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        logits = bundle.logits(chunk, max_len, train=False)
        ce = tensor.softmax_cross_entropy(logits, labels[start : start + len(chunk)])
        losses.extend(ce.value.tolist())
        preds[start : start + len(chunk)] = logits.value.argmax(axis=1)
    return float(np.mean(losses)), Metrics.from_predictions(preds, labels)


def train(bundle: ModelBundle, examples: list[Example], config: TrainConfig) -> TrainResult:
    """Run the seeded training loop and return the final-epoch checkpoint.

    Each epoch reshuffles with the run seed, steps the scheduler per
    optimizer step, and records end-of-epoch train metrics computed with
    dropout disabled. Stopping is either the fixed epoch budget or the
    zero-patience rule on the configured metric.
    """
    if not examples:
        raise DataError("training dataset is empty")
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    ss = np.random.SeedSequence(config.seed)
    shuffle_seed, dropout_seed = ss.spawn(2)
    shuffle_rng = np.random.Generator(np.random.Philox(shuffle_seed))
    dropout_rng = np.random.Generator(np.random.Philox(dropout_seed))

    steps_per_epoch = math.ceil(len(examples) / config.batch_size)
    schedule = Schedule(
        kind=config.schedule,
        lr_max=config.lr,
        lr_min=config.lr_min,
        total_steps=steps_per_epoch * config.max_epochs,
        cycles=config.cycles,
    )
    opt = AdamW(bundle.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    stopper = EarlyStop(metric=config.metric, min_delta=config.min_delta)

    history: list[EpochStats] = []
    global_step = 0
    stopped_epoch = None
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(examples))
        lr = config.lr
        for idx in _batches(order, config.batch_size):
            chunk = [examples[i] for i in idx]
            lr = lr_at(schedule, global_step)
            logits = bundle.logits(chunk, config.max_len, train=True, rng=dropout_rng)
            step_loss = kimcnn.loss(logits, labels[idx])
            loss_val = float(step_loss.value)
            if not np.isfinite(loss_val):
                raise NumericError(
                    f"non-finite loss {loss_val} at step {global_step} (lr={lr:.3g})",
                    step=global_step, lr=lr, loss=loss_val,
                )
            opt.zero_grad()
            backward(step_loss)
            opt.step(lr=lr)
            global_step += 1
        epoch_loss, metrics = _epoch_metrics(
            bundle, examples, labels, config.max_len, config.batch_size
        )
        history.append(EpochStats(epoch=epoch, loss=epoch_loss, metrics=metrics, lr=lr))
        if config.stopping == "auto":
            observed = epoch_loss if config.metric == "train_loss" else metrics.f1
            if early_stop_update(stopper, observed) == "stop":
                stopped_epoch = epoch
                break
    checkpoint = snapshot(bundle, config, history)
    return TrainResult(checkpoint=checkpoint, history=history, stopped_epoch=stopped_epoch)


# ---------------------------------------------------------------------------
# checkpointing


def frontend_spec(f: Frontend) -> dict:
    if isinstance(f, StaticTable):
        return {"kind": "static", "name": f.name, "trainable": f.trainable,
                "dim": f.dim, "oov_seed": f.oov_seed}
    if isinstance(f, ToyEncoder):
        return {"kind": "toy", "name": f.name, "embed_dim": f.embed_dim, "layers": f.layers,
                "heads": f.heads, "max_positions": f.max_positions, "seed": f.seed}
    if isinstance(f, PrecomputedStore):
        return {"kind": "store", "layer_count": f.layer_count, "hidden_dim": f.hidden_dim}
    raise TypeError(f"unknown frontend type {type(f).__name__}")


def snapshot(bundle: ModelBundle, config: TrainConfig, history: list[EpochStats]) -> Checkpoint:
    params = {p.name: p.node.value.copy() for p in bundle.parameters()}
    # Non-trainable static tables still need their grids to rebuild.
    for f in bundle.frontends:
        if isinstance(f, StaticTable) and not f.trainable:
            params[f.param.name] = f.param.node.value.copy()
    cnn = bundle.model.config
    return Checkpoint(
        params=params,
        config=config,
        epoch=len(history),
        history=[h.to_dict() for h in history],
        frontend_specs=[frontend_spec(f) for f in bundle.frontends],
        cnn_config={"input_dim": cnn.input_dim, "widths": list(cnn.widths),
                    "maps_per_width": cnn.maps_per_width, "dropout_p": cnn.dropout_p,
                    "num_classes": cnn.num_classes},
        vocab_tokens=bundle.vocab.tokens if bundle.vocab is not None else None,
    )


def save_checkpoint(ckpt: Checkpoint, path):
    """TEDBCKPT container: magic, version, length-prefixed float32 parameter
    records, then a JSON metadata blob (little-endian throughout)."""
    meta = {
        "config": asdict(ckpt.config),
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "frontends": ckpt.frontend_specs,
        "cnn": ckpt.cnn_config,
        "vocab": ckpt.vocab_tokens,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", ckpt.version, len(ckpt.params)))
        for name, grid in ckpt.params.items():
            encoded = name.encode("utf-8")
            grid = np.ascontiguousarray(grid, dtype="<f4")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", grid.ndim))
            fh.write(struct.pack(f"<{grid.ndim}I", *grid.shape))
            fh.write(grid.tobytes())
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:8] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad magic at byte 0, expected {CHECKPOINT_MAGIC!r}")
    offset = 8
    if len(data) < offset + 8:
        raise DataError(f"{path}: truncated header at byte {offset}")
    version, n_records = struct.unpack_from("<II", data, offset)
    offset += 8
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    params: dict[str, np.ndarray] = {}
    for i in range(n_records):
        try:
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset : offset + name_len].decode("utf-8")
            if len(data) < offset + name_len:
                raise struct.error
            offset += name_len
            (ndim,) = struct.unpack_from("<I", data, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            if len(data) < offset + 4 * count:
                raise struct.error
            grid = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
            offset += 4 * count
        except struct.error:
            raise DataError(f"{path}: truncated record {i} at byte {offset}") from None
        params[name] = grid.copy()
    try:
        (blob_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if len(data) < offset + blob_len:
            raise struct.error
        meta = json.loads(data[offset : offset + blob_len].decode("utf-8"))
        offset += blob_len
    except struct.error:
        raise DataError(f"{path}: truncated metadata at byte {offset}") from None
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes at byte {offset}")
    return Checkpoint(
        params=params,
        config=TrainConfig(**meta["config"]),
        epoch=meta["epoch"],
        history=meta["history"],
        frontend_specs=meta["frontends"],
        cnn_config=meta["cnn"],
        vocab_tokens=meta["vocab"],
    )


def build_bundle(
    frontend_specs: list[dict],
    cnn_config: KimCNNConfig,
    vocab: Vocabulary | None,
    seed: int = 0,
    stores: list[PrecomputedStore] | None = None,
    static_paths: list | None = None,
    dtype=np.float32,
) -> ModelBundle:
    """Construct frontends and a fresh model from declarative specs.

    Store frontends consume entries from `stores` in order; static frontends
    load from `static_paths` in order.
    """
    from .embed import load_static_table

    stores = list(stores or [])
    static_paths = list(static_paths or [])
    frontends: list[Frontend] = []
    for i, spec in enumerate(frontend_specs):
        kind = spec["kind"]
        if kind == "static":
            if not static_paths:
                raise DataError("static frontend requested but no vector file given")
            frontends.append(load_static_table(
                static_paths.pop(0), vocab, trainable=spec.get("trainable", True),
                oov_seed=spec.get("oov_seed", 0), dtype=dtype, name=f"frontend{i}",
            ))
        elif kind == "toy":
            frontends.append(ToyEncoder(
                vocab_size=vocab.size, embed_dim=spec.get("embed_dim", 16),
                layers=spec.get("layers", 2), heads=spec.get("heads", 2),
                max_positions=spec.get("max_positions", 150),
                seed=spec.get("seed", seed), dtype=dtype, name=f"frontend{i}",
            ))
        elif kind == "store":
            if not stores:
                raise DataError("store frontend requested but no store given")
            frontends.append(stores.pop(0))
        else:
            raise DataError(f"unknown frontend kind {kind!r}")
    dims = {f.dim for f in frontends}
    if len(dims) != 1:
        raise ShapeError(f"frontend channel dims differ: {sorted(dims)}")
    if cnn_config.input_dim != dims.pop():
        cnn_config = replace(cnn_config, input_dim=frontends[0].dim)
    model = kimcnn.init(cnn_config, seed=seed, dtype=dtype)
    return ModelBundle(vocab=vocab, frontends=frontends, model=model)


def restore_bundle(ckpt: Checkpoint, stores: list[PrecomputedStore] | None = None) -> ModelBundle:
    """Rebuild a forward-ready bundle from a checkpoint, loading saved grids."""
    vocab = Vocabulary(ckpt.vocab_tokens) if ckpt.vocab_tokens else None
    stores = list(stores or [])
    frontends: list[Frontend] = []
    for spec in ckpt.frontend_specs:
        kind = spec["kind"]
        if kind == "static":
            grid = ckpt.params.get(f"{spec['name']}.matrix")
            if grid is None:
                raise DataError(f"checkpoint is missing grid for frontend {spec['name']}")
            if vocab is None or grid.shape[0] != vocab.size:
                raise DataError("checkpoint vocab does not match static table rows")
            frontends.append(StaticTable(vocab, grid, trainable=spec["trainable"],
                                         oov_seed=spec.get("oov_seed", 0), name=spec["name"]))
        elif kind == "toy":
            enc = ToyEncoder(
                vocab_size=vocab.size, embed_dim=spec["embed_dim"], layers=spec["layers"],
                heads=spec["heads"], max_positions=spec["max_positions"],
                seed=spec.get("seed", 0), name=spec["name"],
            )
            for param in enc.parameters():
                saved = ckpt.params.get(param.name)
                if saved is None:
                    raise DataError(f"checkpoint is missing parameter {param.name}")
                if saved.shape != param.node.value.shape:
                    raise DataError(
                        f"checkpoint parameter {param.name} has shape {saved.shape}, "
                        f"expected {param.node.value.shape}"
                    )
                param.node.value = saved.copy()
            frontends.append(enc)
        elif kind == "store":
            if not stores:
                raise DataError("checkpoint uses a store frontend; pass the store file")
            store = stores.pop(0)
            if store.dim != spec["layer_count"] * spec["hidden_dim"]:
                raise DataError(
                    f"store dim {store.dim} does not match checkpoint "
                    f"{spec['layer_count'] * spec['hidden_dim']}"
                )
            frontends.append(store)
        else:
            raise DataError(f"unknown frontend kind {kind!r}")
    cnn_cfg = KimCNNConfig(
        input_dim=ckpt.cnn_config["input_dim"], widths=tuple(ckpt.cnn_config["widths"]),
        maps_per_width=ckpt.cnn_config["maps_per_width"],
        dropout_p=ckpt.cnn_config["dropout_p"], num_classes=ckpt.cnn_config["num_classes"],
    )
    model = kimcnn.init(cnn_cfg, seed=0)
    for param in model.parameters():
        saved = ckpt.params.get(param.name)
        if saved is None:
            raise DataError(f"checkpoint is missing parameter {param.name}")
        if saved.shape != param.node.value.shape:
            raise DataError(
                f"checkpoint parameter {param.name} has shape {saved.shape}, "
                f"expected {param.node.value.shape}"
            )
        param.node.value = saved.copy()
    return ModelBundle(vocab=vocab, frontends=frontends, model=model)


def predict(bundle: ModelBundle, examples: list[Example], max_len: int,
            batch_size: int = 32) -> np.ndarray:
    """Argmax class per example; exact logit ties resolve to class 0."""
    preds = np.zeros(len(examples), dtype=np.int64)
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        logits = bundle.logits(chunk, max_len, train=False)
        preds[start : start + len(chunk)] = logits.value.argmax(axis=1)
    return preds


def evaluate(ckpt: Checkpoint, examples: list[Example],
             stores: list[PrecomputedStore] | None = None) -> Metrics:
    """Confusion metrics of a checkpointed model on a labeled dataset."""
    bundle = restore_bundle(ckpt, stores=stores)
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    preds = predict(bundle, examples, ckpt.config.max_len, ckpt.config.batch_size)
    return Metrics.from_predictions(preds, labels)


# ---------------------------------------------------------------------------
# frozen-feature probes


@dataclass(frozen=True)
class Probe:
    """A classical classifier over fixed pooled features."""

    kind: str
    pooling: str = "mean_tokens"
    lr: float = 2.5e-4
    max_epochs: int = 3000
    min_delta: float = 1e-6
    seed: int = 0
    hidden_dim: int = 128
    C: float = 1.0

    def __post_init__(self):
        if self.kind not in ("logreg", "passive_aggressive", "knn3", "mlp", "linear_svm"):
            raise ValueError(f"unknown probe kind {self.kind!r}")
        if self.pooling not in ("mean_tokens", "first_token"):
            raise ValueError(f"unknown pooling {self.pooling!r}")


def pool_features(store, example_ids=None, pooling: str = "mean_tokens") -> np.ndarray:
    """Per-example feature vectors from the deepest stored layer.

    mean_tokens averages over real tokens; first_token takes position 0.
    """
    grids = store.grids if isinstance(store, PrecomputedStore) else dict(store)
    if example_ids is None:
        example_ids = list(grids.keys())
    out = []
    for ex_id in example_ids:
        if ex_id not in grids:
            raise DataError(f"store has no example id {ex_id}")
        final = np.asarray(grids[ex_id])[:, -1, :]
        out.append(final.mean(axis=0) if pooling == "mean_tokens" else final[0])
    return np.stack(out).astype(np.float64)


def _fit_gradient_probe(probe: Probe, x: np.ndarray, y: np.ndarray, kind: str):
    """Shared full-batch AdamW loop with zero-patience stopping on the
    training loss; returns a predict(features) -> labels function."""
    rng = tensor.philox(probe.seed)
    d = x.shape[1]
    xn = Node(x)
    # Convex probes start at zero (deterministic, loss starts at its natural
    # ceiling); the MLP needs random init to break hidden-unit symmetry.
    if kind == "logreg":
        w = Parameter("probe.w", np.zeros((d, 2)))
        b = Parameter("probe.b", np.zeros(2), decay=False)
        params = [w, b]

        def forward():
            return tensor.mean(tensor.softmax_cross_entropy(
                tensor.linear(xn, w.node, b.node), y))

        def predict(features):
            return (features @ w.node.value + b.node.value).argmax(axis=1)

    elif kind == "mlp":
        w1 = Parameter("probe.w1", tensor.xavier_uniform(rng, (d, probe.hidden_dim), d, probe.hidden_dim, np.float64))
        b1 = Parameter("probe.b1", np.zeros(probe.hidden_dim), decay=False)
        w2 = Parameter("probe.w2", tensor.xavier_uniform(rng, (probe.hidden_dim, 2), probe.hidden_dim, 2, np.float64))
        b2 = Parameter("probe.b2", np.zeros(2), decay=False)
        params = [w1, b1, w2, b2]

        def forward():
            h = tensor.relu(tensor.linear(xn, w1.node, b1.node))
            return tensor.mean(tensor.softmax_cross_entropy(
                tensor.linear(h, w2.node, b2.node), y))

        def predict(features):
            h = np.maximum(features @ w1.node.value + b1.node.value, 0)
            return (h @ w2.node.value + b2.node.value).argmax(axis=1)

    elif kind == "linear_svm":
        w = Parameter("probe.w", np.zeros((d, 1)))
        b = Parameter("probe.b", np.zeros(1), decay=False)
        params = [w, b]
        signs = (2.0 * y - 1.0)[:, None]

        def forward():
            s = tensor.linear(xn, w.node, b.node)
            margins = tensor.add(1.0, tensor.mul(s, -signs))
            return tensor.mean(tensor.relu(margins))

        def predict(features):
            return ((features @ w.node.value + b.node.value)[:, 0] > 0).astype(np.int64)

    else:
        raise ValueError(kind)

    opt = AdamW(params, lr=probe.lr, weight_decay=0.01)
    stopper = EarlyStop(metric="train_loss", min_delta=probe.min_delta)
    for _ in range(probe.max_epochs):
        loss = forward()
        if early_stop_update(stopper, float(loss.value)) == "stop":
            break
        opt.zero_grad()
        backward(loss)
        opt.step()
    return predict


def _fit_passive_aggressive(x: np.ndarray, y: np.ndarray, C: float) -> np.ndarray:
    """PA-I single pass in dataset order; returns the weight vector."""
    w = np.zeros(x.shape[1])
    for xi, yi in zip(x, 2.0 * y - 1.0):
        margin = yi * float(w @ xi)
        loss = max(0.0, 1.0 - margin)
        if loss > 0.0:
            norm_sq = float(xi @ xi)
            if norm_sq > 0.0:
                tau = min(C, loss / norm_sq)
                w = w + tau * yi * xi
    return w


def _knn3_predict(train_x: np.ndarray, train_y: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Brute-force 3-NN with Euclidean distance.

    Distance ties prefer the lower training index; a vote tie (possible only
    when fewer than 3 training points exist) resolves to class 0.
    """
    k = min(3, len(train_x))
    preds = np.zeros(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        dists = np.linalg.norm(train_x - q, axis=1)
        nearest = np.argsort(dists, kind="stable")[:k]
        votes = train_y[nearest]
        ones = int((votes == 1).sum())
        zeros = k - ones
        preds[i] = 1 if ones > zeros else 0
    return preds


def run_probe(probe: Probe, train_x, train_y, test_x, test_y) -> Metrics:
    """Fit one frozen-feature probe and score it on the test features."""
    train_x = np.asarray(train_x, dtype=np.float64)
    test_x = np.asarray(test_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    test_y = np.asarray(test_y, dtype=np.int64)
    if not (np.isfinite(train_x).all() and np.isfinite(test_x).all()):
        raise DataError("probe features must be finite")
    if probe.kind in ("passive_aggressive", "linear_svm") and len(set(train_y.tolist())) < 2:
        raise DataError(f"{probe.kind} needs both classes in the training set")

    if probe.kind == "knn3":
        preds = _knn3_predict(train_x, train_y, test_x)
    elif probe.kind == "passive_aggressive":
        w = _fit_passive_aggressive(train_x, train_y, probe.C)
        preds = (test_x @ w > 0).astype(np.int64)
    else:
        predictor = _fit_gradient_probe(probe, train_x, train_y, probe.kind)
        preds = np.asarray(predictor(test_x), dtype=np.int64)
    return Metrics.from_predictions(preds, test_y)


def report(named_metrics: list[tuple[str, Metrics]]) -> str:
    """Markdown table of runs sorted by F1 descending (ties by name); the
    best row is bolded and floats use 4 decimals."""
    rows = sorted(named_metrics, key=lambda nm: (-nm[1].f1, nm[0]))
    lines = [
        "| run | f1 | precision | recall | macro_f1 |",
        "| --- | --- | --- | --- | --- |",
    ]
    for i, (name, m) in enumerate(rows):
        cells = [name, f"{m.f1:.4f}", f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.macro_f1:.4f}"]
        if i == 0:
            cells = [f"**{c}**" for c in cells]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
