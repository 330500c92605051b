"""Export all-layer hidden states from a transformer checkpoint into the
interchange file, then consume them from the toolkit side.

Needs the companion hub-export package (and torch/transformers):
    pip install -e hub_export/
Run from the repository root:  python demos/06_hub_export.py
"""

import csv
import tempfile
from pathlib import Path

from hub_export import ExportJob, export, verify
from hub_export.toy_checkpoint import build_toy_checkpoint

from tedb.embed import read_interchange
from tedb.train_eval import Probe, pool_features, run_probe

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    # Offline stand-in for a hub checkpoint id; any save_pretrained directory
    # or reachable model id works the same way.
    checkpoint = build_toy_checkpoint(tmp / "ckpt", hidden_size=32, layers=4)

    data = tmp / "data.csv"
    words = ["gently", "harshly", "softly", "bluntly", "kindly",
             "rudely", "warmly", "loudly", "calmly", "sharply"]
    with open(data, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "label"])
        for i, word in enumerate(words):
            writer.writerow([i, f"they put it <rather {word}> during the meeting .", i % 2])

    out = tmp / "states.tedbemb"
    count = export(ExportJob(checkpoint=checkpoint, dataset=str(data), output=str(out)))
    print(f"exported {count} examples")
    print(verify(out).summary())  # embeddings + 4 layers = 5 states of width 32

    store = read_interchange(out)
    print("toolkit sees:", store.layer_count, "layers x", store.hidden_dim, "features")

    # The toy checkpoint is randomly initialized, so pooled features carry no
    # class signal; this only demonstrates the plumbing into the probe layer.
    features = pool_features(store, pooling="mean_tokens")
    labels = [store.labels[i] for i in store.grids]
    metrics = run_probe(Probe(kind="knn3"), features, labels, features, labels)
    print("knn3 over random-encoder features (chance level):", metrics.f1)
