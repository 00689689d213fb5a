"""Experiment orchestration: splits, balancing, injection curves, comparisons.

The protocol under test: stratified 70/10/20 split per class, minority
classes (VEB, APC by default) topped up to 1000 train items by one of the
oversampling methods, a fresh CNN trained per (method, repeat), per-class F1
aggregated over repeats. Within one repeat every method sees the same split
and the same CNN init seed, so differences isolate the oversampler.
"""

import csv
import logging
from dataclasses import dataclass, field, asdict
from fractions import Fraction
from pathlib import Path

import numpy as np

from .classifier import CnnConfig, CnnModel, EvalReport, evaluate_on_dataset, train_on_dataset
from .errors import ConfigError, ContractError
from .ingest import CLASS_ORDER, class_by_name
from .infogan import adversarial_oversample
from .oversample import OversampleRequest, oversample_with
from .tensorio import write_json

log = logging.getLogger(__name__)

DEFAULT_METHODS = ("original", "adversarial", "adasyn", "smote", "random")


def derive_seed(*parts):
    """Deterministic child seed from integer parts."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    fractions: tuple = (0.7, 0.1, 0.2)  # train, val, test
    repeats: int = 10
    methods: tuple = DEFAULT_METHODS
    balance_target: int = 1000
    minority_classes: tuple = ("VEB", "APC")
    adversarial_counts: dict = field(default_factory=lambda: {"VEB": 600, "APC": 600})
    injection_steps: dict = field(default_factory=lambda: {"VEB": 150, "APC": 100})
    k_neighbors: int = 5
    master_seed: int = 0
    cnn: CnnConfig = CnnConfig()

    def __post_init__(self):
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {self.fractions}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        for m in self.methods:
            if m not in DEFAULT_METHODS:
                raise ConfigError(f"unknown method {m!r}")

    def to_dict(self):
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        d["methods"] = list(self.methods)
        d["minority_classes"] = list(self.minority_classes)
        d["cnn"] = self.cnn.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("fractions", "methods", "minority_classes"):
            if key in d:
                d[key] = tuple(d[key])
        if "cnn" in d:
            d["cnn"] = CnnConfig.from_dict(d["cnn"])
        return cls(**d)


def _round_half_up(n, frac):
    return int(Fraction(n) * frac + Fraction(1, 2))


def split_sizes(n, fractions=(0.7, 0.1, 0.2)):
    """(train, val, test) sizes: round test, round val, remainder to train."""
    f_val = Fraction(str(fractions[1]))
    f_test = Fraction(str(fractions[2]))
    n_test = _round_half_up(n, f_test)
    n_val = _round_half_up(n, f_val)
    return n - n_val - n_test, n_val, n_test


def stratified_split(dataset, fractions=(0.7, 0.1, 0.2), seed=0):
    """Assign train/val/test tags per class, randomly given ``seed``."""
    for item in dataset.items:
        if item.is_synthetic:
            raise ContractError("stratified_split expects an all-real dataset")
    rng = np.random.default_rng(seed)
    splits = ["train"] * len(dataset)
    for cls in CLASS_ORDER:
        idx = np.array(dataset.indices(label=cls), dtype=np.int64)
        if idx.size == 0:
            continue
        if idx.size < 3:
            raise ContractError(f"class {cls} has {idx.size} items; need >= 3 to split")
        _, n_val, n_test = split_sizes(idx.size, fractions)
        order = rng.permutation(idx.size)
        for j in order[:n_test]:
            splits[idx[j]] = "test"
        for j in order[n_test : n_test + n_val]:
            splits[idx[j]] = "val"
    return dataset.with_splits(splits)


def balance_to_target(dataset, method, target=1000, minority_classes=("VEB", "APC"), seed=0,
                      k_neighbors=5, snapshots=None, counts=None):
    """Top up each minority class's train split with synthetic items.

    ``counts`` optionally fixes the number of synthetics per class name
    (used for the best-injection-count protocol); otherwise each class is
    filled up to exactly ``target`` train items. ``snapshots`` maps class
    name -> selected generator snapshot and is required for the adversarial
    method. All batches are generated against the pre-balance dataset, so
    class order does not matter. Never touches val/test.
    """
    if method == "original":
        return dataset
    batches = []
    for ci, name in enumerate(minority_classes):
        cls = class_by_name(name)
        current = len(dataset.indices(split="train", label=cls))
        n = (counts or {}).get(name)
        if n is None:
            n = target - current
        if n < 0:
            raise ContractError(f"{name}: train count {current} already above target {target}")
        cls_seed = derive_seed(seed, ci)
        if method == "adversarial":
            if not snapshots or name not in snapshots:
                raise ConfigError(f"adversarial balancing needs a selected snapshot for {name}")
            batches.append(adversarial_oversample(snapshots[name], cls, n, rng_seed=cls_seed))
        else:
            req = OversampleRequest(
                dataset, target_class=cls, target_count=current + n, k_neighbors=k_neighbors, rng_seed=cls_seed
            )
            batches.append(oversample_with(method, req))
    out = dataset
    for batch in batches:
        out = out.extend(batch.images, split="train")
    return out


def _train_and_evaluate(dataset, cnn_config, init_seed, shuffle_seed, metadata):
    model = CnnModel(cnn_config, seed=init_seed)
    history = train_on_dataset(model, dataset, seed=shuffle_seed)
    report = evaluate_on_dataset(model, dataset, metadata=metadata)
    report.metadata["epochs_run"] = history["epochs_run"]
    report.metadata["best_epoch"] = history["best_epoch"]
    return report


def injection_steps(base, step, target=1000):
    """Synthetic counts 0, step, 2*step, ... capped at target - base."""
    cap = target - base
    if cap < 0:
        raise ContractError(f"train base {base} already above target {target}")
    counts = list(range(0, cap + 1, step))
    if counts[-1] != cap:
        counts.append(cap)
    return counts


@dataclass
class InjectionCurves:
    beat_class: str
    counts: list
    mean_f1: dict  # class name -> list aligned with counts
    runs: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def injection_study(dataset, beat_class, pool, step, target=1000, repeats=10,
                    cnn_config=CnnConfig(), master_seed=0):
    """Mean per-class F1 as synthetic samples are injected step by step.

    ``pool`` is a pre-generated list of synthetic BeatImages for
    ``beat_class``; the first k items are injected at count k, so curves are
    nested and deterministic.
    """
    cls = class_by_name(beat_class)
    base = len(dataset.indices(split="train", label=cls))
    counts = injection_steps(base, step, target)
    if len(pool) < counts[-1]:
        raise ContractError(f"synthetic pool has {len(pool)} items; need {counts[-1]}")
    per_class = {c.value: [] for c in CLASS_ORDER}
    runs = []
    for count in counts:
        grown = dataset.extend(pool[:count], split="train") if count else dataset
        f1s = {c.value: [] for c in CLASS_ORDER}
        for r in range(repeats):
            report = _train_and_evaluate(
                grown,
                cnn_config,
                init_seed=derive_seed(master_seed, r, 101),
                shuffle_seed=derive_seed(master_seed, r, 202),
                metadata={"beat_class": beat_class, "synthetic_count": count, "repeat": r},
            )
            runs.append(report.to_dict())
            for name, f1 in zip(report.class_names, report.f1):
                if f1 is not None:
                    f1s[name].append(f1)
        for name in per_class:
            per_class[name].append(float(np.mean(f1s[name])) if f1s[name] else None)
        log.info("injection %s count=%d done", beat_class, count)
    return InjectionCurves(beat_class=beat_class, counts=counts, mean_f1=per_class, runs=runs)


@dataclass
class ComparisonTable:
    methods: list
    class_names: list
    mean: dict  # method -> per-class list (None where undefined)
    std: dict
    total_mean: dict  # method -> support-weighted F1 mean
    total_std: dict
    repeats: int
    runs: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def cell(self, class_name, method):
        i = self.class_names.index(class_name)
        return self.mean[method][i], self.std[method][i]


def aggregate_runs(runs, methods, repeats):
    """Rebuild the per-cell mean/std table from raw run reports."""
    class_names = [c.value for c in CLASS_ORDER]
    mean, std, total_mean, total_std = {}, {}, {}, {}
    for method in methods:
        reports = [r for r in runs if r["metadata"]["method"] == method]
        per_class_mean, per_class_std = [], []
        for i, _ in enumerate(class_names):
            vals = [r["f1"][i] for r in reports if r["f1"][i] is not None]
            per_class_mean.append(float(np.mean(vals)) if vals else None)
            per_class_std.append(float(np.std(vals)) if vals else None)
        mean[method] = per_class_mean
        std[method] = per_class_std
        totals = [r["weighted_f1"] for r in reports]
        total_mean[method] = float(np.mean(totals)) if totals else None
        total_std[method] = float(np.std(totals)) if totals else None
    return ComparisonTable(
        methods=list(methods),
        class_names=class_names,
        mean=mean,
        std=std,
        total_mean=total_mean,
        total_std=total_std,
        repeats=repeats,
        runs=list(runs),
    )


def run_comparison(dataset, config=ExperimentConfig(), snapshots=None):
    """Train and evaluate every (method, repeat) pair on shared splits.

    Adversarial balancing injects the configured best counts (default 600
    per minority class); the classical methods fill up to the balance
    target. Failures are recorded per cell and do not abort the sweep.
    """
    runs = []
    failures = []
    for r in range(config.repeats):
        split_seed = derive_seed(config.master_seed, r, 1)
        init_seed = derive_seed(config.master_seed, r, 2)
        shuffle_seed = derive_seed(config.master_seed, r, 3)
        balance_seed = derive_seed(config.master_seed, r, 4)
        ds_split = stratified_split(dataset, config.fractions, split_seed)
        for method in config.methods:
            metadata = {
                "method": method,
                "repeat": r,
                "split_seed": split_seed,
                "init_seed": init_seed,
                "master_seed": config.master_seed,
            }
            try:
                balanced = balance_to_target(
                    ds_split,
                    method,
                    target=config.balance_target,
                    minority_classes=config.minority_classes,
                    seed=balance_seed,
                    k_neighbors=config.k_neighbors,
                    snapshots=snapshots,
                    counts=config.adversarial_counts if method == "adversarial" else None,
                )
                metadata["synthetic_counts"] = {
                    name: len(balanced.indices(split="train", label=class_by_name(name)))
                    - len(ds_split.indices(split="train", label=class_by_name(name)))
                    for name in config.minority_classes
                }
                report = _train_and_evaluate(balanced, config.cnn, init_seed, shuffle_seed, metadata)
                runs.append(report.to_dict())
            except Exception as exc:  # record the cell, keep sweeping
                log.exception("run failed: method=%s repeat=%d", method, r)
                failures.append({"method": method, "repeat": r, "error": f"{type(exc).__name__}: {exc}"})
        log.info("repeat %d/%d done", r + 1, config.repeats)
    table = aggregate_runs(runs, config.methods, config.repeats)
    table.failures = failures
    return table


# ------------------------------------------------------------------ reporting


def _format_cell(mean, std):
    if mean is None:
        return "n/a"
    return f"{mean:.4f}±{std:.4f}"


def write_comparison_csv(table, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class"] + list(table.methods))
        for i, name in enumerate(table.class_names):
            writer.writerow([name] + [_format_cell(table.mean[m][i], table.std[m][i]) for m in table.methods])
        writer.writerow(["Total"] + [_format_cell(table.total_mean[m], table.total_std[m]) for m in table.methods])
    return path


def plot_injection_curves(curves, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, series in curves.mean_f1.items():
        if all(v is None for v in series):
            continue
        ax.plot(curves.counts, series, marker="o", label=name)
    ax.set_xlabel(f"synthetic {curves.beat_class} samples in train set")
    ax.set_ylabel("mean F1")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)
    return path


def render_reports(table, curves_list, out_dir):
    """Write comparison.csv, runs.json and one curve plot per studied class."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = []
    csv_path = out_dir / "comparison.csv"
    write_comparison_csv(table, csv_path)
    produced.append(csv_path)
    archive = {
        "schema_version": 1,
        "table": table.to_dict(),
        "curves": [c.to_dict() for c in curves_list],
    }
    runs_path = out_dir / "runs.json"
    write_json(runs_path, archive)
    produced.append(runs_path)
    if curves_list:
        curves_dir = out_dir / "curves"
        curves_dir.mkdir(exist_ok=True)
        for curves in curves_list:
            produced.append(plot_injection_curves(curves, curves_dir / f"{curves.beat_class.lower()}_injection.svg"))
    return produced


def rerender_from_archive(archive_path, out_dir):
    """Rebuild reports from runs.json; the CSV comes out byte-identical."""
    from .tensorio import read_json

    archive = read_json(archive_path)
    table = ComparisonTable.from_dict(archive["table"])
    curves = [InjectionCurves.from_dict(c) for c in archive["curves"]]
    return render_reports(table, curves, out_dir)
