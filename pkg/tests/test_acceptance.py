"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints a single PASS line on success (visible with pytest -s or in
the captured output); any failure is a plain assertion failure.
"""

import csv
import json
import math

import numpy as np
import pytest

from tedb import cli, kimcnn, tensor
from tedb.corpus import build_vocab, synthetic_examples
from tedb.embed import (
    EmbeddedBatch,
    PrecomputedStore,
    ToyEncoder,
    assemble_batch,
    concat_layers,
    read_interchange,
    write_interchange,
)
from tedb.errors import DataError
from tedb.kimcnn import KimCNNConfig
from tedb.optim import AdamW, Schedule, lr_at
from tedb.tensor import Node, Parameter, backward, grad_check
from tedb.train_eval import (
    Probe,
    TrainConfig,
    build_bundle,
    f1_score,
    load_checkpoint,
    run_probe,
    save_checkpoint,
    train,
)
from tedb.train_eval import _fit_passive_aggressive, _knn3_predict


def ok(name):
    print(f"ACCEPTANCE {name}: PASS")


def test_metric_identity():
    # F1 from P=0.818, R=0.814 equals 0.816 within 5e-4
    assert abs(f1_score(0.818, 0.814) - 0.816) < 5e-4
    ok("metric identity (P=0.818, R=0.814 -> F1=0.816 +- 5e-4)")


def test_gradient_suite_primitives():
    gen = tensor.philox(123)

    def check(f, *shapes):
        for _ in range(5):
            args = [gen.normal(size=s) for s in shapes]
            report = grad_check(f, *args, eps=1e-5, tol=1e-4)
            assert report.passed, report

    check(lambda a, b: tensor.sum_(tensor.add(a, b)), (3, 4), (3, 4))
    check(lambda a, b: tensor.sum_(tensor.mul(a, b)), (3, 4), (3, 4))
    check(lambda a, b: tensor.sum_(tensor.matmul(a, b)), (3, 4), (4, 2))
    ids = np.array([[0, 2], [1, 2]])
    coeff = tensor.philox(5).normal(size=(2, 2, 3))
    check(lambda t: tensor.sum_(tensor.mul(tensor.embedding_lookup(t, ids), coeff)), (3, 3))
    check(lambda a, b: tensor.sum_(tensor.mul(tensor.concat([a, b], axis=1), 0.7)), (2, 3), (2, 2))
    check(lambda x, f: tensor.sum_(tensor.conv1d_valid(x, f)), (2, 7, 3), (4, 3, 3))
    check(lambda a: tensor.sum_(tensor.relu(tensor.add(a, 0.1))), (3, 4))
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=float)
    for _ in range(5):
        x = gen.permutation(24).reshape(2, 4, 3) + gen.uniform(0, 0.3, size=(2, 4, 3))
        assert grad_check(lambda v: tensor.sum_(tensor.max_over_time(v, mask)), x).passed
    check(lambda a: tensor.mean(a), (3, 4))
    labels = np.array([0, 2, 1])
    check(lambda a: tensor.mean(tensor.softmax_cross_entropy(a, labels)), (3, 4))
    dmask = (tensor.philox(9).random((3, 4)) >= 0.5) / 0.5
    check(lambda a: tensor.sum_(tensor.dropout(a, 0.5, True, mask=dmask)), (3, 4))
    check(lambda x, g, b: tensor.sum_(tensor.layer_norm(x, g, b)), (3, 4), (4,), (4,))
    amask = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=float)
    check(lambda q, k, v: tensor.sum_(tensor.mul(
        tensor.scaled_dot_product_attention(q, k, v, 2, key_mask=amask),
        amask[:, :, None])), (2, 4, 6), (2, 4, 6), (2, 4, 6))
    check(lambda x, w, b: tensor.sum_(tensor.linear(x, w, b)), (3, 4), (4, 2), (2,))
    ok("gradient suite: every primitive <= 1e-4 (64-bit, eps 1e-5)")


def test_gradient_suite_full_model():
    # toy-encoder frontend + full classifier head on a 2-example batch
    examples = synthetic_examples(2, seed=0)
    vocab = build_vocab(examples)
    enc = ToyEncoder(vocab_size=vocab.size, embed_dim=8, layers=2, heads=2,
                     max_positions=16, seed=0, dtype=np.float64)
    model = kimcnn.init(KimCNNConfig(input_dim=24, widths=(3, 4, 5), maps_per_width=4,
                                     dropout_p=0.0), seed=0, dtype=np.float64)
    from tedb.corpus import batch_encode

    ids, lengths = batch_encode(examples, vocab, max_len=14)
    mask = (np.arange(14)[None, :] < lengths[:, None]).astype(np.float64)
    labels = np.array([ex.label for ex in examples])

    params = enc.parameters() + model.parameters()

    def loss_value():
        states = enc.encode_all_layers(ids, mask)
        channel = tensor.mul(concat_layers(states), mask[:, :, None])
        logits = kimcnn.forward(model, EmbeddedBatch(channels=[channel], mask=mask))
        return kimcnn.loss(logits, labels)

    loss = loss_value()
    backward(loss)
    grads = {p.name: (p.node.grad.copy() if p.node.grad is not None else np.zeros_like(p.node.value))
             for p in params}
    eps = 1e-5
    worst = 0.0
    gen = np.random.default_rng(0)
    for p in params:
        flat = p.node.value.ravel()
        coords = gen.choice(flat.size, size=min(4, flat.size), replace=False)
        for coord in coords:
            orig = flat[coord]
            flat[coord] = orig + eps
            up = float(loss_value().value)
            flat[coord] = orig - eps
            down = float(loss_value().value)
            flat[coord] = orig
            numeric = (up - down) / (2 * eps)
            analytic = grads[p.name].ravel()[coord]
            err = abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
            worst = max(worst, err)
    assert worst <= 1e-4, worst
    ok(f"gradient suite: full model on 2-example batch (max rel err {worst:.2e})")


def test_scheduler_closed_forms():
    lin = Schedule(kind="linear", lr_max=2e-5, total_steps=1000)
    cos = Schedule(kind="cosine_restarts", lr_max=2e-5, lr_min=0.0, total_steps=1000, cycles=5)
    for step in range(1001):
        assert abs(lr_at(lin, step) - 2e-5 * (1 - step / 1000)) <= 1e-12
        c = step % 200
        expected = 0.5 * 2e-5 * (1 + math.cos(math.pi * c / 200))
        assert abs(lr_at(cos, step) - expected) <= 1e-12
    for k in range(6):
        assert lr_at(cos, 200 * k) == 2e-5
    ok("scheduler closed forms over 1000 steps, 5 cycles (<= 1e-12; restarts exact)")


def test_adamw_hand_oracle():
    p = Parameter("w", np.array([1.0]))
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.node.grad = np.array([0.5])
    opt.step()
    assert abs(float(p.value[0]) - 0.9) < 1e-6

    q = Parameter("w", np.array([1.0]))
    opt2 = AdamW([q], lr=0.1, weight_decay=0.01)
    q.node.grad = np.array([0.5])
    opt2.step()
    assert abs(float(q.value[0]) - 0.899) < 1e-6
    ok("adamw hand oracle (0.9000 / 0.8990 to 1e-6)")


def test_overfit_and_zero_patience_stop():
    examples = synthetic_examples(32, seed=1)
    vocab = build_vocab(examples)
    bundle = build_bundle([{"kind": "toy"}], KimCNNConfig(input_dim=48, dropout_p=0.0),
                          vocab, seed=0)
    config = TrainConfig(batch_size=4, lr=2e-3, max_epochs=200, seed=0, max_len=16,
                         dropout_p=0.0, stopping="auto", metric="train_f1",
                         min_delta=1e-4, schedule="linear")
    result = train(bundle, examples, config)
    first_perfect = next((h.epoch for h in result.history if h.metrics.f1 == 1.0), None)
    assert first_perfect is not None and first_perfect <= 200
    assert result.stopped_epoch is not None
    assert 0 <= result.stopped_epoch - first_perfect <= 3
    ok(f"overfit: train F1=1.0 at epoch {first_perfect}, "
       f"auto-stop at {result.stopped_epoch} (within 3)")


def test_architectural_invariants():
    # padding invariance
    cfg = KimCNNConfig(input_dim=6, widths=(2, 3), maps_per_width=4, dropout_p=0.0)
    model = kimcnn.init(cfg, seed=0, dtype=np.float32)
    gen = np.random.default_rng(2)
    real = gen.normal(size=(2, 9, 6)).astype(np.float32)

    def batch_padded(total_len):
        values = np.zeros((2, total_len, 6), dtype=np.float32)
        values[:, :9] = real
        mask = np.zeros((2, total_len), dtype=np.float32)
        mask[:, :9] = 1.0
        return EmbeddedBatch(channels=[Node(values)], mask=mask)

    tight = kimcnn.forward(model, batch_padded(9))
    wide = kimcnn.forward(model, batch_padded(150))
    assert np.abs(tight.value - wide.value).max() <= 1e-6

    # zero-second-channel identity, bitwise
    base = batch_padded(12)
    doubled = EmbeddedBatch(
        channels=[base.channels[0], Node(np.zeros_like(base.channels[0].value))],
        mask=base.mask,
    )
    assert np.array_equal(kimcnn.forward(model, base).value,
                          kimcnn.forward(model, doubled).value)

    # pooled dim at published defaults
    assert KimCNNConfig(input_dim=9984).pooled_dim == 300

    # PAD embedding row pinned at zero through 100 steps
    examples = synthetic_examples(8, seed=0)
    vocab = build_vocab(examples)
    from tedb.embed import StaticTable

    table = StaticTable(vocab, gen.normal(size=(vocab.size, 6)).astype(np.float32),
                        trainable=True)
    opt = AdamW(table.parameters(), lr=0.05, weight_decay=0.01)
    for _ in range(100):
        batch = assemble_batch([table], examples, vocab, max_len=12)
        loss = tensor.mean(batch.channels[0])
        opt.zero_grad()
        backward(loss)
        opt.step()
    assert (table.param.value[0] == 0.0).all()
    ok("architectural invariants: padding, zero channel, pooled dim 300, PAD row")


def test_probe_oracles():
    gen = np.random.default_rng(3)
    # knn3 against exhaustive sort, 200 queries
    train_x = gen.normal(size=(30, 4))
    train_y = gen.integers(0, 2, size=30)
    queries = gen.normal(size=(200, 4))

    def oracle(q):
        order = sorted(range(len(train_x)), key=lambda i: (float(np.linalg.norm(train_x[i] - q)), i))
        votes = [train_y[i] for i in order[:3]]
        return 1 if sum(votes) > 1 else 0

    preds = _knn3_predict(train_x, train_y, queries)
    assert preds.tolist() == [oracle(q) for q in queries]

    # PA-I against a hand-stepped oracle over 20 random updates
    x = gen.normal(size=(20, 5))
    y = gen.integers(0, 2, size=20)
    w_ref = np.zeros(5)
    for xi, label in zip(x, y):
        yi = 1.0 if label else -1.0
        hinge = max(0.0, 1.0 - yi * float(w_ref @ xi))
        if hinge > 0:
            w_ref = w_ref + min(1.0, hinge / float(xi @ xi)) * yi * xi
    w = _fit_passive_aggressive(x, y, C=1.0)
    assert np.abs(w - w_ref).max() <= 1e-12

    # logreg on a separable set
    lx = np.array([[-1.0], [1.0]])
    ly = np.array([0, 1])
    metrics = run_probe(Probe(kind="logreg"), lx, ly, lx, ly)
    assert metrics.f1 == 1.0
    ok("probe oracles: knn3 exact, PA-I <= 1e-12, logreg separable F1=1.0")


def test_format_roundtrips(tmp_path):
    # interchange
    gen = np.random.default_rng(4)
    store = PrecomputedStore(3, 5)
    for ex_id in range(6):
        store.add(ex_id, gen.normal(size=(int(gen.integers(1, 9)), 3, 5)).astype(np.float32),
                  label=ex_id % 2)
    spath = tmp_path / "store.tedbemb"
    write_interchange(store, spath)
    loaded = read_interchange(spath)
    for ex_id in store.grids:
        assert np.array_equal(store.grids[ex_id], loaded.grids[ex_id])
    blob = spath.read_bytes()
    (tmp_path / "trunc.tedbemb").write_bytes(blob[:-1])
    with pytest.raises(DataError):
        read_interchange(tmp_path / "trunc.tedbemb")
    (tmp_path / "magic.tedbemb").write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(DataError):
        read_interchange(tmp_path / "magic.tedbemb")

    # checkpoint
    examples = synthetic_examples(8, seed=1)
    vocab = build_vocab(examples)
    bundle = build_bundle([{"kind": "toy"}], KimCNNConfig(input_dim=48, dropout_p=0.0),
                          vocab, seed=0)
    cfgt = TrainConfig(batch_size=4, lr=1e-3, max_epochs=1, seed=0, max_len=16,
                       dropout_p=0.0, stopping="fixed")
    result = train(bundle, examples, cfgt)
    cpath = tmp_path / "model.tedb"
    save_checkpoint(result.checkpoint, cpath)
    reloaded = load_checkpoint(cpath)
    for name in result.checkpoint.params:
        assert np.array_equal(result.checkpoint.params[name], reloaded.params[name])
    cblob = cpath.read_bytes()
    (tmp_path / "ctrunc.tedb").write_bytes(cblob[:-1])
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "ctrunc.tedb")
    (tmp_path / "cmagic.tedb").write_bytes(b"YYYYYYYY" + cblob[8:])
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "cmagic.tedb")
    ok("format round trips bitwise; truncation and bad magic rejected")


def test_manifest_determinism(tmp_path):
    data_path = tmp_path / "train.csv"
    with open(data_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "label"])
        for ex in synthetic_examples(32, seed=1):
            writer.writerow([ex.id, ex.text, ex.label])
    config = {
        "task": "train",
        "train_data": str(data_path),
        "out": str(tmp_path / "a"),
        "frontends": [{"kind": "toy"}],
        "train": {"batch_size": 4, "lr": 2e-3, "max_epochs": 20, "seed": 0,
                  "dropout_p": 0.5, "stopping": "fixed", "schedule": "cosine_restarts",
                  "max_len": 16},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    assert cli.main(["train", "--config", str(cfg_path)]) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert cli.main(["train", "--config", str(manifest), "--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a" / "metrics.json").read_bytes()
    second = (tmp_path / "b" / "metrics.json").read_bytes()
    assert first == second
    ok("determinism: identical metrics.json bytes from the same manifest")
