"""Train the convolutional classifier end to end on a synthetic separable
set, watch the zero-patience stop fire, then checkpoint and re-evaluate.

Run from the repository root:  python demos/04_train_kimcnn.py
"""

import tempfile
from pathlib import Path

from tedb.corpus import build_vocab, synthetic_examples
from tedb.kimcnn import KimCNNConfig
from tedb.train_eval import (
    TrainConfig,
    build_bundle,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

examples = synthetic_examples(32, seed=1)
vocab = build_vocab(examples)
print(f"{len(examples)} examples, vocab {vocab.size}")
print("sample:", examples[0].text, "->", examples[0].label)

# The frontend is the small trainable encoder; its per-token vector is the
# concatenation of all three hidden states (embeddings + 2 layers) = 48 dims.
bundle = build_bundle(
    [{"kind": "toy"}], KimCNNConfig(input_dim=48, dropout_p=0.0), vocab, seed=0
)

config = TrainConfig(
    batch_size=4, lr=2e-3, max_epochs=200, seed=0, max_len=16, dropout_p=0.0,
    stopping="auto", metric="train_f1", schedule="linear",
)
result = train(bundle, examples, config)
for h in result.history:
    print(f"epoch {h.epoch}: loss {h.loss:.4f}  train F1 {h.metrics.f1:.3f}")
print("zero-patience stop at epoch:", result.stopped_epoch)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.tedb"
    save_checkpoint(result.checkpoint, path)
    metrics = evaluate(load_checkpoint(path), examples)
    print("reloaded checkpoint F1:", metrics.f1)
