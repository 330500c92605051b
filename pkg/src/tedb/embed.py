"""Word-vector frontends and batch assembly.

Three interchangeable sources of per-token vectors: static lookup tables
loaded from word-vector text files, a small trainable transformer encoder
whose hidden states from every layer are concatenated per token, and
precomputed contextual vectors read from the TEDBEMB1 interchange file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor
from .corpus import PAD_ID, Example, Vocabulary, batch_encode
from .errors import DataError, ShapeError
from .tensor import Node, Parameter

INTERCHANGE_MAGIC = b"TEDBEMB1"


class StaticTable:
    """Fixed-size embedding table over a Vocabulary.

    The PAD row is pinned to zero: it takes no gradient, no weight decay,
    and no update.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        matrix: np.ndarray,
        trainable: bool,
        oov_seed: int = 0,
        name: str = "static",
    ):
        if matrix.shape[0] != vocab.size:
            raise ShapeError(
                f"static table rows {matrix.shape[0]} do not match vocab size {vocab.size}"
            )
        matrix = np.array(matrix)
        matrix[PAD_ID] = 0.0
        self.vocab = vocab
        self.trainable = trainable
        self.oov_seed = oov_seed
        self.name = name
        self.param = Parameter(f"{name}.matrix", matrix, zero_row=PAD_ID)
        self.param.node.requires_grad = trainable

    @property
    def dim(self) -> int:
        return self.param.value.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.param] if self.trainable else []

    def embed_ids(self, ids: np.ndarray, mask: np.ndarray, train: bool) -> Node:
        return tensor.embedding_lookup(self.param.node, ids)


def load_static_table(
    path,
    vocab: Vocabulary,
    trainable: bool = True,
    oov_seed: int = 0,
    dtype=np.float32,
    name: str = "static",
) -> StaticTable:
    """Load a word-vector text file (one `token v1 ... vd` line per token).

    Rows for in-vocabulary tokens are copied; every other vocabulary entry
    gets a reproducible uniform draw in [-0.25, 0.25] from oov_seed. The PAD
    row is zero.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2 or parts[0] == "":
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DataError(
                    f"{path}: line {lineno}: dimension {len(values)} differs from {dim}"
                )
            if token in vocab:
                vectors[token] = np.array([float(v) for v in values], dtype=dtype)
    if dim is None or not vectors:
        raise DataError(f"{path}: no usable vector rows for this vocabulary")
    rng = tensor.philox(oov_seed)
    matrix = np.zeros((vocab.size, dim), dtype=dtype)
    for idx, token in enumerate(vocab.tokens):
        if idx == PAD_ID:
            continue
        if token in vectors:
            matrix[idx] = vectors[token]
        else:
            matrix[idx] = rng.uniform(-0.25, 0.25, size=dim).astype(dtype)
    return StaticTable(vocab, matrix, trainable=trainable, oov_seed=oov_seed, name=name)


class ToyEncoder:
    """Small pre-norm transformer encoder exposing every hidden state.

    Produces layers+1 states per forward pass: the summed token and position
    embeddings first, then the output of each block. The feed-forward uses
    ReLU. PAD positions are masked out of attention as keys.
    """

    def __init__(
        self,
        vocab_size: int,
        embed_dim: int = 16,
        layers: int = 2,
        heads: int = 2,
        max_positions: int = 150,
        seed: int = 0,
        dtype=np.float32,
        name: str = "toy",
    ):
        if embed_dim % heads != 0:
            raise ShapeError(f"embed_dim {embed_dim} not divisible by heads {heads}")
        self.vocab_size = vocab_size
        self.embed_dim = embed_dim
        self.layers = layers
        self.heads = heads
        self.max_positions = max_positions
        self.seed = seed
        self.trainable = True
        self.name = name
        rng = tensor.philox(seed)
        e = embed_dim
        hidden = 4 * e
        p: dict[str, Parameter] = {}
        p["tok"] = Parameter(
            f"{name}.tok", tensor.xavier_uniform(rng, (vocab_size, e), vocab_size, e, dtype), zero_row=PAD_ID
        )
        p["pos"] = Parameter(
            f"{name}.pos", tensor.xavier_uniform(rng, (max_positions, e), max_positions, e, dtype)
        )
        for i in range(layers):
            pre = f"{name}.layer{i}"
            for ln in ("ln1", "ln2"):
                p[f"{ln}{i}.g"] = Parameter(f"{pre}.{ln}.gain", np.ones(e, dtype=dtype), decay=False)
                p[f"{ln}{i}.b"] = Parameter(f"{pre}.{ln}.bias", np.zeros(e, dtype=dtype), decay=False)
            for w in ("wq", "wk", "wv", "wo"):
                p[f"{w}{i}"] = Parameter(f"{pre}.{w}", tensor.xavier_uniform(rng, (e, e), e, e, dtype))
                p[f"{w}{i}.b"] = Parameter(f"{pre}.{w}.bias", np.zeros(e, dtype=dtype), decay=False)
            p[f"w1{i}"] = Parameter(f"{pre}.mlp1", tensor.xavier_uniform(rng, (e, hidden), e, hidden, dtype))
            p[f"w1{i}.b"] = Parameter(f"{pre}.mlp1.bias", np.zeros(hidden, dtype=dtype), decay=False)
            p[f"w2{i}"] = Parameter(f"{pre}.mlp2", tensor.xavier_uniform(rng, (hidden, e), hidden, e, dtype))
            p[f"w2{i}.b"] = Parameter(f"{pre}.mlp2.bias", np.zeros(e, dtype=dtype), decay=False)
        self._p = p

    @property
    def dim(self) -> int:
        return (self.layers + 1) * self.embed_dim

    def parameters(self) -> list[Parameter]:
        return list(self._p.values())

    def encode_all_layers(self, ids: np.ndarray, mask: np.ndarray) -> list[Node]:
        batch, seq = ids.shape
        if seq > self.max_positions:
            raise ShapeError(f"sequence length {seq} exceeds max positions {self.max_positions}")
        p = self._p
        positions = np.broadcast_to(np.arange(seq), (batch, seq))
        x = tensor.add(
            tensor.embedding_lookup(p["tok"].node, ids),
            tensor.embedding_lookup(p["pos"].node, positions),
        )
        states = [x]
        for i in range(self.layers):
            h = tensor.layer_norm(x, p[f"ln1{i}.g"].node, p[f"ln1{i}.b"].node)
            q = tensor.linear(h, p[f"wq{i}"].node, p[f"wq{i}.b"].node)
            k = tensor.linear(h, p[f"wk{i}"].node, p[f"wk{i}.b"].node)
            v = tensor.linear(h, p[f"wv{i}"].node, p[f"wv{i}.b"].node)
            attended = tensor.scaled_dot_product_attention(q, k, v, self.heads, key_mask=mask)
            x = tensor.add(x, tensor.linear(attended, p[f"wo{i}"].node, p[f"wo{i}.b"].node))
            h2 = tensor.layer_norm(x, p[f"ln2{i}.g"].node, p[f"ln2{i}.b"].node)
            m = tensor.linear(
                tensor.relu(tensor.linear(h2, p[f"w1{i}"].node, p[f"w1{i}.b"].node)),
                p[f"w2{i}"].node,
                p[f"w2{i}.b"].node,
            )
            x = tensor.add(x, m)
            states.append(x)
        return states

    def embed_ids(self, ids: np.ndarray, mask: np.ndarray, train: bool) -> Node:
        return concat_layers(self.encode_all_layers(ids, mask))


def concat_layers(states: list[Node]) -> Node:
    """Concatenate per-layer hidden states along the feature axis, first
    (embedding) layer first, deepest last."""
    if len(states) == 1:
        return states[0]
    shapes = {tuple(s.value.shape) for s in states}
    if len(shapes) > 1:
        raise ShapeError(f"concat_layers: states have differing shapes {sorted(shapes)}")
    return tensor.concat(states, axis=-1)


class PrecomputedStore:
    """Per-example contextual vectors: example_id -> [tokens, layers, features]."""

    def __init__(self, layer_count: int, hidden_dim: int):
        self.layer_count = layer_count
        self.hidden_dim = hidden_dim
        self.grids: dict[int, np.ndarray] = {}
        self.labels: dict[int, int] = {}
        self.trainable = False

    @property
    def dim(self) -> int:
        return self.layer_count * self.hidden_dim

    def parameters(self) -> list[Parameter]:
        return []

    def add(self, example_id: int, grid: np.ndarray, label: int = 0):
        grid = np.asarray(grid, dtype=np.float32)
        if grid.ndim != 3 or grid.shape[1:] != (self.layer_count, self.hidden_dim):
            raise ShapeError(
                f"store grid shape {grid.shape} does not match "
                f"(tokens, {self.layer_count}, {self.hidden_dim})"
            )
        self.grids[example_id] = grid
        self.labels[example_id] = int(label)

    def __len__(self):
        return len(self.grids)

    def token_vectors(self, example_id: int) -> np.ndarray:
        """Per-token word vectors [tokens, layers * features], embedding
        layer features first."""
        if example_id not in self.grids:
            raise DataError(f"store has no example id {example_id}")
        grid = self.grids[example_id]
        return grid.reshape(grid.shape[0], -1)


def write_interchange(store: PrecomputedStore, path):
    """Serialize a store to the TEDBEMB1 container (little-endian)."""
    with open(path, "wb") as fh:
        fh.write(INTERCHANGE_MAGIC)
        fh.write(struct.pack("<III", len(store.grids), store.layer_count, store.hidden_dim))
        for ex_id, grid in store.grids.items():
            grid = np.ascontiguousarray(grid, dtype="<f4")
            fh.write(struct.pack("<III", ex_id, store.labels.get(ex_id, 0), grid.shape[0]))
            fh.write(grid.tobytes())


def read_interchange(path) -> PrecomputedStore:
    """Parse a TEDBEMB1 container; byte offsets are reported on failure."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:8] != INTERCHANGE_MAGIC:
        raise DataError(f"{path}: bad magic at byte 0, expected {INTERCHANGE_MAGIC!r}")
    offset = 8
    if len(data) < offset + 12:
        raise DataError(f"{path}: truncated header at byte {offset}")
    count, layer_count, hidden_dim = struct.unpack_from("<III", data, offset)
    offset += 12
    store = PrecomputedStore(layer_count, hidden_dim)
    for i in range(count):
        if len(data) < offset + 12:
            raise DataError(f"{path}: truncated record header for example {i} at byte {offset}")
        ex_id, label, token_count = struct.unpack_from("<III", data, offset)
        offset += 12
        nbytes = token_count * layer_count * hidden_dim * 4
        if len(data) < offset + nbytes:
            raise DataError(f"{path}: truncated float data for example {ex_id} at byte {offset}")
        grid = np.frombuffer(data, dtype="<f4", count=token_count * layer_count * hidden_dim, offset=offset)
        offset += nbytes
        store.add(ex_id, grid.reshape(token_count, layer_count, hidden_dim).copy(), label)
    if offset != len(data):
        raise DataError(f"{path}: {len(data) - offset} trailing bytes at byte {offset}")
    if len(store.grids) != count:
        raise DataError(f"{path}: duplicate example ids, {count} declared but {len(store.grids)} kept")
    return store


def store_from_encoder(
    enc: ToyEncoder,
    examples: list[Example],
    vocab: Vocabulary,
    max_len: int = 150,
) -> PrecomputedStore:
    """Freeze an encoder's per-layer states into a store, one example per
    record, dropping PAD positions. Useful for probing the trainable encoder
    with the same machinery as file-backed stores."""
    store = PrecomputedStore(enc.layers + 1, enc.embed_dim)
    ids, lengths = batch_encode(examples, vocab, max_len)
    mask = (np.arange(max_len)[None, :] < lengths[:, None]).astype(np.float64)
    states = enc.encode_all_layers(ids, mask)
    stacked = np.stack([s.value for s in states], axis=2)  # [batch, seq, layers+1, dim]
    for i, ex in enumerate(examples):
        store.add(ex.id, stacked[i, : lengths[i]], label=ex.label)
    return store


@dataclass
class EmbeddedBatch:
    """Per-channel [batch, seq, dim] nodes plus the shared real-token mask."""

    channels: list[Node]
    mask: np.ndarray


Frontend = StaticTable | ToyEncoder | PrecomputedStore


def assemble_batch(
    frontends: list[Frontend],
    examples: list[Example],
    vocab: Vocabulary | None,
    max_len: int = 150,
    train: bool = False,
    dtype=np.float32,
) -> EmbeddedBatch:
    """Build the padded multichannel input for one batch of examples.

    One channel per frontend; all channels must agree on feature dimension
    and on which positions are real. PAD positions end up as zero vectors in
    every channel.
    """
    if not 1 <= len(frontends) <= 2:
        raise ShapeError(f"expected 1 or 2 frontends, got {len(frontends)}")
    dims = {f.dim for f in frontends}
    if len(dims) > 1:
        raise ShapeError(f"frontend channel dims differ: {sorted(dims)}")

    ids = lengths = None
    if any(isinstance(f, (StaticTable, ToyEncoder)) for f in frontends):
        if vocab is None:
            raise ValueError("vocab is required for static or encoder frontends")
        ids, lengths = batch_encode(examples, vocab, max_len)

    mask: np.ndarray | None = None
    channels: list[Node] = []
    for f in frontends:
        if isinstance(f, PrecomputedStore):
            chan, ch_mask = _store_channel(f, examples, max_len, dtype)
        else:
            ch_mask = (np.arange(max_len)[None, :] < lengths[:, None]).astype(dtype)
            chan = f.embed_ids(ids, ch_mask, train)
            if isinstance(f, ToyEncoder):
                chan = tensor.mul(chan, ch_mask[:, :, None])
        if mask is None:
            mask = ch_mask
        elif not np.array_equal(mask, ch_mask):
            raise DataError("frontends disagree on which positions are real tokens")
        channels.append(chan)
    return EmbeddedBatch(channels=channels, mask=mask)


def _store_channel(store, examples, max_len, dtype):
    batch = len(examples)
    grid = np.zeros((batch, max_len, store.dim), dtype=dtype)
    mask = np.zeros((batch, max_len), dtype=dtype)
    for i, ex in enumerate(examples):
        vecs = store.token_vectors(ex.id)
        n = min(vecs.shape[0], max_len)
        grid[i, :n] = vecs[:n]
        mask[i, :n] = 1.0
    return Node(grid), mask
