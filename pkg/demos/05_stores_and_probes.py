"""Precomputed contextual vectors: the interchange container, feature
pooling, and the frozen-feature probe roster.

Run from the repository root:  python demos/05_stores_and_probes.py
"""

import tempfile
from pathlib import Path

import numpy as np

from tedb.embed import PrecomputedStore, read_interchange, write_interchange
from tedb.train_eval import Probe, pool_features, report, run_probe

# A store maps example id -> [tokens, layers, hidden] grid. Here the two
# classes live in different half-spaces of the deepest layer, standing in
# for hidden states exported from a pretrained encoder.
def make_store(ids, seed):
    gen = np.random.default_rng(seed)
    store = PrecomputedStore(layer_count=3, hidden_dim=8)
    for ex_id in ids:
        label = ex_id % 2
        center = 1.5 if label else -1.5
        tokens = int(gen.integers(4, 9))
        store.add(ex_id, gen.normal(center, 0.6, size=(tokens, 3, 8)), label=label)
    return store

train_store = make_store(range(40), seed=0)
test_store = make_store(range(100, 120), seed=1)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "train.tedbemb"
    write_interchange(train_store, path)
    print(f"wrote {path.stat().st_size} bytes")
    train_store = read_interchange(path)  # round trip is bitwise

# mean_tokens averages the deepest layer over real tokens.
train_x = pool_features(train_store, pooling="mean_tokens")
train_y = np.array([train_store.labels[i] for i in train_store.grids])
test_x = pool_features(test_store, pooling="mean_tokens")
test_y = np.array([test_store.labels[i] for i in test_store.grids])
print("pooled feature shape:", train_x.shape)

rows = []
for kind in ("logreg", "passive_aggressive", "knn3", "mlp", "linear_svm"):
    metrics = run_probe(Probe(kind=kind), train_x, train_y, test_x, test_y)
    rows.append((kind, metrics))
    print(f"{kind:20s} F1 {metrics.f1:.4f}")

print()
print(report(rows))
