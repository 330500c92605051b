"""Command-line surface: train, eval, probe, stats, selfcheck, report.

A run is described by a JSON config; a handful of flags overlay it. Every
run writes a manifest.json with the fully resolved config so the exact run
can be reproduced from that file alone.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import __version__, selfcheck
from .corpus import length_histogram, load_dataset
from .errors import ConfigError, DataError, NumericError
from .kimcnn import KimCNNConfig
from .train_eval import (
    Metrics,
    Probe,
    TrainConfig,
    build_bundle,
    evaluate,
    load_checkpoint,
    pool_features,
    report,
    run_probe,
    save_checkpoint,
    train,
)

TASKS = ("train", "eval", "probe", "stats", "selfcheck", "report")

# schema: key -> (type, default). None default means optional/absent.
_TRAIN_KEYS = {
    "batch_size": (int, 16), "lr": (float, 2e-5), "schedule": (str, "cosine_restarts"),
    "cycles": (int, 5), "lr_min": (float, 0.0), "max_epochs": (int, 10),
    "seed": (int, 0), "dropout_p": (float, 0.5), "weight_decay": (float, 0.01),
    "max_len": (int, 150), "stopping": (str, "fixed"), "min_delta": (float, 1e-4),
    "metric": (str, "train_loss"),
}
_KIMCNN_KEYS = {
    "widths": (list, [3, 4, 5]), "maps_per_width": (int, 100), "num_classes": (int, 2),
    "dropout_p": (float, None),  # mirrored from train.dropout_p when resolving
}
_FRONTEND_KEYS = {
    "kind": (str, None), "path": (str, None), "trainable": (bool, True),
    "oov_seed": (int, 0), "embed_dim": (int, 16), "layers": (int, 2),
    "heads": (int, 2), "max_positions": (int, 150), "seed": (int, 0),
}
_PROBE_KEYS = {
    "train_store": (str, None), "test_store": (str, None),
    "kinds": (list, ["logreg", "passive_aggressive", "knn3", "mlp", "linear_svm"]),
    "pooling": (str, "mean_tokens"), "lr": (float, 2.5e-4),
    "max_epochs": (int, 3000), "min_delta": (float, 1e-6), "seed": (int, 0),
}
_TOP_KEYS = {
    "task": (str, None), "train_data": (str, None), "test_data": (str, None),
    "frontends": (list, None), "kimcnn": (dict, None), "train": (dict, None),
    "probe": (dict, None), "checkpoint": (str, None), "stores": (list, None),
    "out": (str, "out"), "bin_width": (int, 10), "runs": (list, None),
}


@dataclass
class RunConfig:
    task: str
    train_data: str | None = None
    test_data: str | None = None
    frontends: list[dict] = field(default_factory=lambda: [{"kind": "toy"}])
    kimcnn: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: dict = field(default_factory=dict)
    checkpoint: str | None = None
    stores: list[str] = field(default_factory=list)
    out: str = "out"
    bin_width: int = 10
    runs: list[dict] = field(default_factory=list)

    def resolved(self) -> dict:
        from dataclasses import asdict

        return {
            "task": self.task, "train_data": self.train_data, "test_data": self.test_data,
            "frontends": self.frontends, "kimcnn": self.kimcnn, "train": asdict(self.train),
            "probe": self.probe, "checkpoint": self.checkpoint, "stores": self.stores,
            "out": self.out, "bin_width": self.bin_width, "runs": self.runs,
        }


def _check_section(raw: dict, schema: dict, prefix: str, problems: list[str]) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            problems.append(f"unknown key {prefix}{key}")
            continue
        if value is None:  # explicit null means absent (manifests round-trip)
            continue
        expected, _ = schema[key]
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, expected) or isinstance(value, bool) and expected is not bool:
            problems.append(
                f"{prefix}{key}: expected {expected.__name__}, got {type(value).__name__}"
            )
            continue
        out[key] = value
    for key, (_, default) in schema.items():
        if key not in out and default is not None:
            out[key] = default
    return out


def validate_config(raw: dict) -> RunConfig:
    """Check types, fill defaults, and reject unknown keys, reporting every
    violation at once."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if "config" in raw:  # manifest wrapper
        raw = raw["config"]
    problems: list[str] = []
    top = _check_section(raw, _TOP_KEYS, "", problems)

    task = top.get("task")
    if task not in TASKS:
        problems.append(f"task must be one of {TASKS}, got {task!r}")

    train_section = _check_section(top.get("train") or {}, _TRAIN_KEYS, "train.", problems)
    cnn_section = _check_section(top.get("kimcnn") or {}, _KIMCNN_KEYS, "kimcnn.", problems)
    probe_section = _check_section(top.get("probe") or {}, _PROBE_KEYS, "probe.", problems)
    frontends = top.get("frontends") or [{"kind": "toy"}]
    checked_frontends = []
    for i, f in enumerate(frontends):
        if not isinstance(f, dict):
            problems.append(f"frontends[{i}] must be an object")
            continue
        checked = _check_section(f, _FRONTEND_KEYS, f"frontends[{i}].", problems)
        if checked.get("kind") not in ("static", "toy", "store"):
            problems.append(f"frontends[{i}].kind must be static, toy, or store")
        checked_frontends.append(checked)
    if not 1 <= len(checked_frontends) <= 2:
        problems.append(f"expected 1 or 2 frontends, got {len(checked_frontends)}")

    train_cfg = None
    if not problems:
        try:
            train_cfg = TrainConfig(**{k: v for k, v in train_section.items()})
        except ValueError as e:
            problems.append(str(e))
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    if not 4 <= train_cfg.batch_size <= 20:
        warnings.warn(
            f"batch_size {train_cfg.batch_size} is outside the usual 4-20 range", stacklevel=2
        )
    dropout = train_cfg.dropout_p
    cnn_section = {**cnn_section, "dropout_p": dropout}
    return RunConfig(
        task=task,
        train_data=top.get("train_data"),
        test_data=top.get("test_data"),
        frontends=checked_frontends,
        kimcnn=cnn_section,
        train=train_cfg,
        probe=probe_section,
        checkpoint=top.get("checkpoint"),
        stores=top.get("stores") or [],
        out=top["out"],
        bin_width=top["bin_width"],
        runs=top.get("runs") or [],
    )


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_manifest(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "manifest.json"),
                {"toolkit_version": __version__, "config": cfg.resolved()})


def _load_stores(paths):
    from .embed import read_interchange

    return [read_interchange(p) for p in paths]


def _cnn_config(cfg: RunConfig, input_dim: int) -> KimCNNConfig:
    return KimCNNConfig(
        input_dim=input_dim,
        widths=tuple(cfg.kimcnn.get("widths", [3, 4, 5])),
        maps_per_width=cfg.kimcnn.get("maps_per_width", 100),
        dropout_p=cfg.kimcnn.get("dropout_p", 0.5),
        num_classes=cfg.kimcnn.get("num_classes", 2),
    )


def _task_train(cfg: RunConfig) -> int:
    from .corpus import build_vocab

    if not cfg.train_data:
        raise DataError("train task needs train_data")
    examples, _ = load_dataset(cfg.train_data)
    needs_vocab = any(f["kind"] in ("static", "toy") for f in cfg.frontends)
    vocab = build_vocab(examples) if needs_vocab else None
    stores = _load_stores([f["path"] for f in cfg.frontends if f["kind"] == "store"])
    static_paths = [f["path"] for f in cfg.frontends if f["kind"] == "static"]
    if any(f["kind"] == "static" and not f.get("path") for f in cfg.frontends):
        raise DataError("static frontend needs a path")
    bundle = build_bundle(
        cfg.frontends, _cnn_config(cfg, 0), vocab,
        seed=cfg.train.seed, stores=stores, static_paths=static_paths,
    )
    result = train(bundle, examples, cfg.train)
    save_checkpoint(result.checkpoint, os.path.join(cfg.out, "checkpoint.tedb"))
    final = result.history[-1]
    _write_json(os.path.join(cfg.out, "metrics.json"), final.metrics.to_dict())
    _write_json(os.path.join(cfg.out, "history.json"),
                {"stopped_epoch": result.stopped_epoch,
                 "epochs": [h.to_dict() for h in result.history]})
    print(f"trained {final.epoch} epochs; final train f1 {final.metrics.f1:.4f}")
    return 0


def _task_eval(cfg: RunConfig) -> int:
    if not cfg.checkpoint or not cfg.test_data:
        raise DataError("eval task needs checkpoint and test_data")
    ckpt = load_checkpoint(cfg.checkpoint)
    examples, _ = load_dataset(cfg.test_data)
    stores = _load_stores(cfg.stores)
    metrics = evaluate(ckpt, examples, stores=stores)
    _write_json(os.path.join(cfg.out, "metrics.json"), metrics.to_dict())
    print(f"test f1 {metrics.f1:.4f} (precision {metrics.precision:.4f}, recall {metrics.recall:.4f})")
    return 0


def _task_probe(cfg: RunConfig) -> int:
    from .embed import read_interchange

    section = cfg.probe
    if not section.get("train_store") or not section.get("test_store"):
        raise DataError("probe task needs probe.train_store and probe.test_store")
    train_store = read_interchange(section["train_store"])
    test_store = read_interchange(section["test_store"])
    pooling = section["pooling"]
    train_ids = list(train_store.grids.keys())
    test_ids = list(test_store.grids.keys())
    train_x = pool_features(train_store, train_ids, pooling)
    train_y = np.array([train_store.labels[i] for i in train_ids])
    test_x = pool_features(test_store, test_ids, pooling)
    test_y = np.array([test_store.labels[i] for i in test_ids])
    named = []
    for kind in section["kinds"]:
        probe = Probe(kind=kind, pooling=pooling, lr=section["lr"],
                      max_epochs=section["max_epochs"], min_delta=section["min_delta"],
                      seed=section["seed"])
        metrics = run_probe(probe, train_x, train_y, test_x, test_y)
        named.append((kind, metrics))
        _write_json(os.path.join(cfg.out, f"metrics_{kind}.json"), metrics.to_dict())
        print(f"{kind}: test f1 {metrics.f1:.4f}")
    with open(os.path.join(cfg.out, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(report(named))
    return 0


def _task_stats(cfg: RunConfig) -> int:
    if not cfg.train_data:
        raise DataError("stats task needs train_data")
    examples, count = load_dataset(cfg.train_data)
    hist = length_histogram(examples, cfg.bin_width)
    path = os.path.join(cfg.out, "stats.tsv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin\tcount\n")
        for (lo, hi), c in hist:
            fh.write(f"{lo}-{hi}\t{c}\n")
    print(f"{count} examples; histogram written to {path}")
    return 0


def _task_report(cfg: RunConfig) -> int:
    if not cfg.runs:
        raise DataError("report task needs runs: [{name, metrics}]")
    named = []
    for entry in cfg.runs:
        with open(entry["metrics"], encoding="utf-8") as fh:
            payload = json.load(fh)
        named.append((entry["name"], Metrics(**payload)))
    table = report(named)
    with open(os.path.join(cfg.out, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tedb", description=__doc__)
    sub = parser.add_subparsers(dest="task", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task")
        if task != "selfcheck":
            p.add_argument("--config", help="JSON run config or manifest")
            p.add_argument("--out", help="output directory")
        if task in ("train", "stats"):
            p.add_argument("--data", help="training CSV path")
        if task == "train":
            p.add_argument("--seed", type=int)
            p.add_argument("--lr", type=float)
            p.add_argument("--batch-size", type=int)
            p.add_argument("--max-epochs", type=int)
        if task == "eval":
            p.add_argument("--checkpoint")
            p.add_argument("--test-data")
        if task == "stats":
            p.add_argument("--bin-width", type=int)
    return parser


def _overlay(raw: dict, args: argparse.Namespace) -> dict:
    raw = dict(raw)
    if getattr(args, "out", None):
        raw["out"] = args.out
    if getattr(args, "data", None):
        raw["train_data"] = args.data
    if getattr(args, "checkpoint", None):
        raw["checkpoint"] = args.checkpoint
    if getattr(args, "test_data", None):
        raw["test_data"] = args.test_data
    if getattr(args, "bin_width", None):
        raw["bin_width"] = args.bin_width
    train_over = {}
    for key in ("seed", "lr", "max_epochs"):
        if getattr(args, key, None) is not None:
            train_over[key] = getattr(args, key)
    if getattr(args, "batch_size", None) is not None:
        train_over["batch_size"] = args.batch_size
    if train_over:
        raw["train"] = {**raw.get("train", {}), **train_over}
    return raw


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.task == "selfcheck":
        return 0 if selfcheck.run_all() else 3

    raw: dict = {"task": args.task}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            print(f"config file not found: {args.config}", file=sys.stderr)
            return 1
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as e:
            print(f"config file {args.config} is not valid JSON: {e}", file=sys.stderr)
            return 2
        if "config" in loaded:
            loaded = loaded["config"]
        raw = {**loaded, "task": args.task}
    raw = _overlay(raw, args)

    try:
        cfg = validate_config(raw)
        _write_manifest(cfg)
        handler = {
            "train": _task_train, "eval": _task_eval, "probe": _task_probe,
            "stats": _task_stats, "report": _task_report,
        }[cfg.task]
        return handler(cfg)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(str(e), file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e} (step={e.step}, lr={e.lr}, loss={e.loss})", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
