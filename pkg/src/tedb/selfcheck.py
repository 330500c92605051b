"""Built-in property suites runnable from the command line.

Each check prints one line; the runner returns True only if every check
passes. These mirror the core guarantees: gradient correctness of every
primitive, scheduler closed forms, the optimizer hand-oracle, metric
identities, dropout identities, and container round trips.
"""

from __future__ import annotations

import math
import os
import tempfile
from fractions import Fraction

import numpy as np

from . import tensor
from .embed import PrecomputedStore, read_interchange, write_interchange
from .optim import AdamW, Schedule, lr_at
from .tensor import Node, Parameter, grad_check
from .train_eval import Metrics


def _check_primitive_grads() -> list[tuple[str, bool, str]]:
    rng = tensor.philox(2024)
    results = []

    def run(name, f, *shapes, points=5):
        worst = 0.0
        for _ in range(points):
            args = [rng.normal(size=s) for s in shapes]
            rep = grad_check(f, *args, eps=1e-5, tol=1e-4)
            worst = max(worst, rep.max_rel_err)
        results.append((f"grad {name}", worst <= 1e-4, f"max rel err {worst:.2e}"))

    run("add", lambda a, b: tensor.sum_(tensor.add(a, b)), (3, 4), (3, 4))
    run("add broadcast", lambda a, b: tensor.sum_(tensor.add(a, b)), (3, 4), (4,))
    run("mul", lambda a, b: tensor.sum_(tensor.mul(a, b)), (3, 4), (3, 4))
    run("matmul", lambda a, b: tensor.sum_(tensor.matmul(a, b)), (3, 4), (4, 2))
    run("matmul batched", lambda a, b: tensor.sum_(tensor.matmul(a, b)), (2, 3, 4), (2, 4, 2))
    ids = np.array([[0, 2], [1, 1]])
    run("embedding_lookup", lambda t: tensor.sum_(tensor.mul(tensor.embedding_lookup(t, ids), 1.5)), (3, 4))
    run("concat", lambda a, b: tensor.sum_(tensor.mul(tensor.concat([a, b], axis=1), 0.5)), (2, 3), (2, 2))
    run("conv1d_valid", lambda x, f: tensor.sum_(tensor.conv1d_valid(x, f)), (2, 7, 3), (4, 3, 3))
    run("relu", lambda a: tensor.sum_(tensor.relu(tensor.add(a, 0.05))), (3, 4))
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=float)
    run("max_over_time", lambda x: tensor.sum_(tensor.max_over_time(x, mask)), (2, 4, 3))
    run("mean", lambda a: tensor.mean(a), (3, 4))
    coeff = tensor.philox(3).normal(size=(3, 4))
    run("softmax", lambda a: tensor.sum_(tensor.mul(tensor.softmax(a), coeff)), (3, 4))
    labels = np.array([0, 2, 1])
    run("softmax_cross_entropy", lambda a: tensor.mean(tensor.softmax_cross_entropy(a, labels)), (3, 4))
    fixed_mask = (tensor.philox(7).random((3, 4)) >= 0.5) / 0.5
    run("dropout", lambda a: tensor.sum_(tensor.dropout(a, 0.5, True, mask=fixed_mask)), (3, 4))
    run("layer_norm", lambda x, g, b: tensor.sum_(tensor.layer_norm(x, g, b)), (3, 4), (4,), (4,))
    amask = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=float)
    run("attention", lambda q, k, v: tensor.sum_(tensor.mul(
        tensor.scaled_dot_product_attention(q, k, v, 2, key_mask=amask),
        amask[:, :, None])), (2, 4, 6), (2, 4, 6), (2, 4, 6))
    run("linear", lambda x, w, b: tensor.sum_(tensor.linear(x, w, b)), (3, 4), (4, 2), (2,))
    return results


def _check_schedulers() -> list[tuple[str, bool, str]]:
    out = []
    lin = Schedule(kind="linear", lr_max=2e-5, total_steps=1000)
    cos = Schedule(kind="cosine_restarts", lr_max=2e-5, lr_min=0.0, total_steps=1000, cycles=5)
    worst = 0.0
    for step in range(1001):
        worst = max(worst, abs(lr_at(lin, step) - 2e-5 * (1 - step / 1000)))
        c = step % 200
        expected = 0.5 * 2e-5 * (1 + math.cos(math.pi * c / 200))
        worst = max(worst, abs(lr_at(cos, step) - expected))
    out.append(("scheduler closed forms", worst <= 1e-12, f"max dev {worst:.1e}"))
    restarts_ok = all(lr_at(cos, k * 200) == 2e-5 for k in range(6))
    out.append(("cosine restarts hit lr_max", restarts_ok, ""))
    return out


def _check_adamw_oracle() -> list[tuple[str, bool, str]]:
    def one(wd, expected):
        p = Parameter("w", np.array([1.0]), decay=True)
        opt = AdamW([p], lr=0.1, weight_decay=wd)
        p.node.grad = np.array([0.5])
        opt.step()
        return abs(float(p.node.value[0]) - expected)

    err0 = one(0.0, 0.9)
    errd = one(0.01, 0.899)
    ok = err0 < 1e-6 and errd < 1e-6
    return [("adamw hand oracle", ok, f"errors {err0:.1e}, {errd:.1e}")]


def _check_metrics() -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(11)
    ok = True
    for _ in range(1000):
        tp, fp, fn, tn = (int(x) for x in rng.integers(0, 50, size=4))
        m = Metrics.from_counts(tp, fp, fn, tn)
        direct = Fraction(2 * tp, 2 * tp + fp + fn) if 2 * tp + fp + fn else Fraction(0)
        p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        via_pr = 2 * p * r / (p + r) if p + r else Fraction(0)
        if direct != via_pr or abs(m.f1 - float(direct)) > 1e-12:
            ok = False
            break
    return [("f1 identity on random confusions", ok, "")]


def _check_dropout_identity() -> list[tuple[str, bool, str]]:
    x = Node(np.arange(12, dtype=np.float64).reshape(3, 4))
    eval_mode = tensor.dropout(x, 0.5, train=False)
    p_zero = tensor.dropout(x, 0.0, train=True, rng=tensor.philox(0))
    ok = np.array_equal(eval_mode.value, x.value) and np.array_equal(p_zero.value, x.value)
    return [("dropout identities", ok, "")]


def _check_roundtrip() -> list[tuple[str, bool, str]]:
    rng = np.random.default_rng(5)
    store = PrecomputedStore(layer_count=3, hidden_dim=4)
    for ex_id in range(4):
        tokens = int(rng.integers(1, 9))
        store.add(ex_id, rng.normal(size=(tokens, 3, 4)).astype(np.float32), label=ex_id % 2)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "store.tedbemb")
        write_interchange(store, path)
        loaded = read_interchange(path)
        ok = all(
            np.array_equal(store.grids[i], loaded.grids[i]) and store.labels[i] == loaded.labels[i]
            for i in store.grids
        )
    return [("interchange round trip", ok, "")]


def run_all(verbose: bool = True) -> bool:
    checks = []
    checks.extend(_check_primitive_grads())
    checks.extend(_check_schedulers())
    checks.extend(_check_adamw_oracle())
    checks.extend(_check_metrics())
    checks.extend(_check_dropout_identity())
    checks.extend(_check_roundtrip())
    all_ok = True
    for name, ok, detail in checks:
        all_ok &= ok
        if verbose:
            status = "PASS" if ok else "FAIL"
            suffix = f"  ({detail})" if detail else ""
            print(f"[{status}] {name}{suffix}")
    return all_ok
