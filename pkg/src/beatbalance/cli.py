"""Command-line front end chaining the pipeline stages.

Every subcommand reads one JSON config file, writes its artifacts under
``--out`` and records a ``run-manifest.json`` (config hash, seed, versions,
produced files). Reruns with identical inputs overwrite identically. Exit
codes: 0 success, 1 stage failure, 2 usage error, 3 config error.

Config schema (keys read per subcommand; paths resolve relative to the
config file):

  records          list of {"signal", "annotations", "record_id"?}  [preprocess]
  preprocess       {"window_slices", "slice_samples", "image_size"}  [preprocess]
  dataset_dir      dataset directory produced by `preprocess`  [most stages]
  split            {"fractions": [tr, va, te], "seed"}  [preprocess, optional]
  gan              InfoGanConfig fields  [train-gan]
  gan_dir          snapshot root (defaults to <out>/gan)  [select-snapshot]
  gan_epochs       override for max_epochs  [train-gan]
  scorer_model     CNN checkpoint stem used to score snapshots  [select-snapshot]
  snapshots        {"VEB": snapshot dir, ...}  [generate, balance, experiment]
  cnn              CnnConfig fields  [train-cnn, evaluate, experiment, injection-study]
  model_path       checkpoint stem  [train-cnn output, evaluate input]
  experiment       ExperimentConfig fields  [experiment, injection-study]
  pool_dir         dataset dir of pre-generated synthetics  [injection-study]
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import CnnConfig, CnnModel, evaluate_on_dataset, train_on_dataset
from .errors import ConfigError
from .harness import (
    ExperimentConfig,
    balance_to_target,
    injection_study,
    render_reports,
    run_comparison,
    stratified_split,
)
from .infogan import (
    InfoGanConfig,
    InfoGanState,
    binary_to_signed,
    load_snapshot,
    select_snapshot,
    signed_to_binary,
    adversarial_oversample,
    train as gan_train,
)
from .ingest import class_by_name, load_record
from .oversample import METHODS
from .preprocess import BeatDataset, PreprocessConfig, build_dataset, load_dataset, save_dataset
from .tensorio import write_json

SUBCOMMANDS = (
    "preprocess",
    "train-gan",
    "select-snapshot",
    "generate",
    "balance",
    "train-cnn",
    "evaluate",
    "experiment",
    "injection-study",
)


class Stage:
    """Resolved invocation context shared by the stage handlers."""

    def __init__(self, args):
        self.args = args
        self.config_path = Path(args.config)
        if not self.config_path.exists():
            raise ConfigError(f"config file not found: {self.config_path}")
        try:
            with open(self.config_path, "r", encoding="utf-8") as fh:
                self.config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(self.config, dict):
            raise ConfigError("config root must be a JSON object")
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.produced = []

    def path(self, value):
        p = Path(value)
        return p if p.is_absolute() else self.config_path.parent / p

    def need(self, key, kind=None):
        if key not in self.config:
            raise ConfigError(f"config key {key!r} is required for this subcommand")
        value = self.config[key]
        if kind is not None and not isinstance(value, kind):
            raise ConfigError(f"config key {key!r} must be {kind.__name__}")
        return value

    def seed(self, default=0):
        if self.args.seed is not None:
            return self.args.seed
        return int(self.config.get("seed", default))

    def section(self, key, cls, default=None):
        raw = self.config.get(key)
        if raw is None:
            return default if default is not None else cls()
        if not isinstance(raw, dict):
            raise ConfigError(f"config key {key!r} must be an object")
        try:
            return cls.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None

    def record(self, path):
        self.produced.append(Path(path))
        return path

    def beat_class(self):
        if not self.args.beat_class:
            raise ConfigError("this subcommand needs --class APC|VEB|...")
        try:
            return class_by_name(self.args.beat_class)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None

    def load_dataset_dir(self, key="dataset_dir"):
        return load_dataset(self.path(self.need(key, str)))

    def finish(self, subcommand):
        manifest = {
            "subcommand": subcommand,
            "config_path": str(self.config_path),
            "config_sha256": hashlib.sha256(self.config_path.read_bytes()).hexdigest(),
            "seed": self.args.seed,
            "versions": {"beatbalance": __version__, "numpy": np.__version__, "python": sys.version.split()[0]},
            "produced": sorted(str(p.relative_to(self.out)) if p.is_relative_to(self.out) else str(p) for p in self.produced),
        }
        write_json(self.out / "run-manifest.json", manifest)


def cmd_preprocess(stage):
    entries = stage.need("records", list)
    if not entries:
        raise ConfigError("config key 'records' must list at least one signal/annotation pair")
    pc_raw = stage.config.get("preprocess", {})
    config = PreprocessConfig(**pc_raw) if pc_raw else PreprocessConfig()
    records = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "signal" not in entry or "annotations" not in entry:
            raise ConfigError(f"records[{i}] must have 'signal' and 'annotations' paths")
        records.append(
            load_record(stage.path(entry["signal"]), stage.path(entry["annotations"]), record_id=entry.get("record_id"))
        )
    dataset = build_dataset(records, config)
    split = stage.config.get("split")
    if split:
        dataset = stratified_split(dataset, tuple(split.get("fractions", (0.7, 0.1, 0.2))), int(split.get("seed", stage.seed())))
    out_dir = stage.out / "dataset"
    stage.record(save_dataset(dataset, out_dir))
    print(f"dataset: {len(dataset)} beats -> {out_dir}")


def _train_split_images(dataset, cls):
    idx = dataset.indices(split="train", label=cls, real_only=True)
    if not idx:
        raise ConfigError(f"dataset has no train items of class {cls}")
    return np.stack([dataset.items[i].pixels for i in idx])


def cmd_train_gan(stage):
    cls = stage.beat_class()
    dataset = stage.load_dataset_dir()
    config = stage.section("gan", InfoGanConfig)
    h, w = dataset.image_size
    if h != config.image_size:
        raise ConfigError(f"gan.image_size {config.image_size} != dataset image size {h}")
    images = binary_to_signed(_train_split_images(dataset, cls))
    state = InfoGanState(config, seed=stage.seed(), beat_class=cls.value)
    max_epochs = int(stage.config.get("gan_epochs", config.max_epochs))
    snap_dir = stage.out / "gan" / cls.value
    snaps = gan_train(state, images, snapshot_dir=snap_dir, max_epochs=max_epochs, log_every=max(1, config.snapshot_period // 5))
    for snap in snaps:
        stage.record(Path(snap.path))
    print(f"trained {cls.value} GAN to epoch {state.epoch}; {len(snaps)} snapshots under {snap_dir}")


def _snapshot_dirs(root):
    return sorted(p for p in Path(root).iterdir() if p.is_dir() and p.name.isdigit())


def cmd_select_snapshot(stage):
    cls = stage.beat_class()
    root = stage.path(stage.config.get("gan_dir", stage.out / "gan")) / cls.value
    if not root.exists():
        raise ConfigError(f"no snapshot directory at {root}")
    snapshots = [load_snapshot(p) for p in _snapshot_dirs(root)]
    scorer_stem = stage.need("scorer_model", str)
    model = CnnModel.load(stage.path(scorer_stem))
    from .ingest import CLASS_INDEX

    target = CLASS_INDEX[cls]

    def scorer(images):
        return float((model.predict(images) == target).mean())

    chosen = select_snapshot(snapshots, scorer, interactive=stage.args.interactive)
    out_path = stage.out / f"selection_{cls.value}.json"
    write_json(out_path, {"beat_class": cls.value, "epoch": chosen.epoch, "path": chosen.path})
    stage.record(out_path)
    print(f"selected {cls.value} snapshot: epoch {chosen.epoch} ({chosen.path})")


def _selected_snapshot(stage, cls):
    snapshots = stage.config.get("snapshots", {})
    if cls.value not in snapshots:
        raise ConfigError(f"config key 'snapshots' must map {cls.value!r} to a snapshot directory")
    return load_snapshot(stage.path(snapshots[cls.value]))


def cmd_generate(stage):
    cls = stage.beat_class()
    if stage.args.count is None or stage.args.count < 0:
        raise ConfigError("generate needs --count >= 0")
    snapshot = _selected_snapshot(stage, cls)
    batch = adversarial_oversample(snapshot, cls, stage.args.count, rng_seed=stage.seed())
    out_dir = stage.out / "synthetic" / cls.value
    if not batch.images:
        out_dir.mkdir(parents=True, exist_ok=True)
        print(f"generated 0 images (empty batch) -> {out_dir}")
        return
    stage.record(save_dataset(BeatDataset(batch.images, ["train"] * len(batch.images)), out_dir))
    print(f"generated {len(batch)} {cls.value} images -> {out_dir}")


def cmd_balance(stage):
    method = stage.args.method or "original"
    if method not in ("original",) + METHODS:
        raise ConfigError(f"--method must be one of original, {', '.join(METHODS)}")
    dataset = stage.load_dataset_dir()
    exp = stage.section("experiment", ExperimentConfig)
    snapshots = None
    if method == "adversarial":
        snapshots = {name: _selected_snapshot(stage, class_by_name(name)) for name in exp.minority_classes}
    balanced = balance_to_target(
        dataset,
        method,
        target=exp.balance_target,
        minority_classes=exp.minority_classes,
        seed=stage.seed(),
        k_neighbors=exp.k_neighbors,
        snapshots=snapshots,
    )
    out_dir = stage.out / "balanced"
    stage.record(save_dataset(balanced, out_dir))
    print(f"balanced via {method}: {len(dataset)} -> {len(balanced)} items ({out_dir})")


def cmd_train_cnn(stage):
    dataset = stage.load_dataset_dir()
    config = stage.section("cnn", CnnConfig)
    model = CnnModel(config, seed=stage.seed())
    history = train_on_dataset(model, dataset, seed=stage.seed())
    stem = stage.out / "cnn" / "model"
    model.save(stem)
    stage.record(Path(str(stem) + ".bin"))
    stage.record(Path(str(stem) + ".json"))
    stage.record(Path(str(stem) + ".model.json"))
    hist_path = stage.out / "cnn" / "history.json"
    write_json(hist_path, history)
    stage.record(hist_path)
    print(f"trained CNN: best epoch {history['best_epoch']}/{history['epochs_run']} -> {stem}")


def cmd_evaluate(stage):
    dataset = stage.load_dataset_dir()
    model = CnnModel.load(stage.path(stage.need("model_path", str)))
    report = evaluate_on_dataset(model, dataset, metadata={"seed": stage.seed()})
    out_path = stage.out / "report.json"
    write_json(out_path, report.to_dict())
    stage.record(out_path)
    print(f"weighted F1 {report.weighted_f1:.4f}, macro F1 {report.macro_f1:.4f} -> {out_path}")


def cmd_experiment(stage):
    dataset = stage.load_dataset_dir()
    exp = stage.section("experiment", ExperimentConfig)
    if stage.args.seed is not None:
        exp = ExperimentConfig.from_dict({**exp.to_dict(), "master_seed": stage.args.seed})
    if stage.args.method:
        exp = ExperimentConfig.from_dict({**exp.to_dict(), "methods": [stage.args.method]})
    snapshots = None
    if "adversarial" in exp.methods:
        snapshots = {name: _selected_snapshot(stage, class_by_name(name)) for name in exp.minority_classes}
    table = run_comparison(dataset, exp, snapshots=snapshots)
    for p in render_reports(table, [], stage.out):
        stage.record(p)
    print(f"comparison over {exp.methods}: {len(table.runs)} runs, {len(table.failures)} failures -> {stage.out}")


def cmd_injection_study(stage):
    cls = stage.beat_class()
    dataset = stage.load_dataset_dir()
    exp = stage.section("experiment", ExperimentConfig)
    pool_ds = load_dataset(stage.path(stage.need("pool_dir", str)))
    pool = [item for item in pool_ds.items if item.label == cls]
    step = exp.injection_steps.get(cls.value)
    if step is None:
        raise ConfigError(f"experiment.injection_steps has no entry for {cls.value}")
    curves = injection_study(
        dataset,
        cls.value,
        pool,
        step=step,
        target=exp.balance_target,
        repeats=exp.repeats,
        cnn_config=exp.cnn,
        master_seed=exp.master_seed if stage.args.seed is None else stage.args.seed,
    )
    out_path = stage.out / f"injection_{cls.value}.json"
    write_json(out_path, curves.to_dict())
    stage.record(out_path)
    from .harness import plot_injection_curves

    plot_path = stage.out / f"injection_{cls.value}.svg"
    stage.record(plot_injection_curves(curves, plot_path))
    print(f"injection study {cls.value}: counts {curves.counts} -> {out_path}")


HANDLERS = {
    "preprocess": cmd_preprocess,
    "train-gan": cmd_train_gan,
    "select-snapshot": cmd_select_snapshot,
    "generate": cmd_generate,
    "balance": cmd_balance,
    "train-cnn": cmd_train_cnn,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "injection-study": cmd_injection_study,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="beatbalance",
        description="Heartbeat anomaly detection with GAN-based oversampling of rasterized ECG beats.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--class", dest="beat_class", default=None, help="beat class (e.g. APC, VEB)")
        p.add_argument("--method", default=None, help="oversampling method")
        p.add_argument("--count", type=int, default=None, help="sample count")
        p.add_argument("--interactive", action="store_true", help="interactive snapshot choice")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        stage = Stage(args)
        HANDLERS[args.subcommand](stage)
        stage.finish(args.subcommand)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # stage failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
