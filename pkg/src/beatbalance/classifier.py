"""Two-stage convolutional beat classifier with Adam and early stopping.

Architecture (defaults): two conv stages (5x5 kernels, He init, batch norm,
ReLU, 2x2 average pooling, dropout 0.25), a 128-unit dense layer with
dropout 0.5, and a softmax head over the seven beat classes. Training runs
at most ``max_epochs`` epochs of minibatch Adam and stops after the first
epoch whose validation loss does not improve on the best seen, restoring
the best-epoch weights.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import nn
from .errors import ContractError
from .ingest import CLASS_ORDER, NUM_CLASSES
from .tensorio import load_tensors, read_json, save_tensors, write_json

EVAL_REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CnnConfig:
    image_size: int = 112
    conv_filters: tuple = (16, 32)
    kernel: int = 5
    conv_dropout: float = 0.25
    dense_units: int = 128
    dense_dropout: float = 0.5
    num_classes: int = NUM_CLASSES
    batch_norm: bool = True
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 1

    def __post_init__(self):
        if len(self.conv_filters) != 2:
            raise ValueError("the model has exactly two conv stages")
        if self.image_size % 4:
            raise ValueError("image_size must be divisible by 4 (two 2x2 pools)")

    def to_dict(self):
        d = asdict(self)
        d["conv_filters"] = list(self.conv_filters)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "conv_filters" in d:
            d["conv_filters"] = tuple(d["conv_filters"])
        return cls(**d)


class CnnModel:
    """Beat classifier network plus its configuration."""

    def __init__(self, config=CnnConfig(), seed=0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c = config
        stages = []
        c_in = 1
        for filters in c.conv_filters:
            stages.append(nn.Conv2d(c_in, filters, c.kernel, rng, dtype=dtype))
            if c.batch_norm:
                stages.append(nn.BatchNorm(filters, spatial=True, dtype=dtype))
            stages.append(nn.ReLU())
            stages.append(nn.AvgPool2d(2))
            stages.append(nn.Dropout(c.conv_dropout))
            c_in = filters
        feat = (c.image_size // 4) ** 2 * c.conv_filters[-1]
        stages += [
            nn.Flatten(),
            nn.Dense(feat, c.dense_units, rng, dtype=dtype),
            nn.ReLU(),
            nn.Dropout(c.dense_dropout),
            nn.Dense(c.dense_units, c.num_classes, rng, dtype=dtype),
        ]
        self.net = nn.Sequential(stages)

    def _prep(self, images):
        x = np.asarray(images)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.config.image_size or x.shape[2] != self.config.image_size:
            raise ContractError(
                f"expected images (N, {self.config.image_size}, {self.config.image_size}), got {x.shape}"
            )
        return x[:, :, :, None].astype(self.dtype)

    def logits(self, images, ctx=nn.EVAL_CTX):
        return self.net.forward(self._prep(images), ctx)

    def forward(self, images):
        """Class probability rows for a batch of binary beat images."""
        return nn.softmax(self.logits(images))

    def predict(self, images, batch_size=256):
        out = []
        x = np.asarray(images)
        for start in range(0, len(x), batch_size):
            out.append(np.argmax(self.logits(x[start : start + batch_size]), axis=1))
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def save(self, stem):
        tensors = dict(self.net.state_items())
        save_tensors(stem, tensors)
        meta = {"format": "beatbalance-cnn", "version": 1, "config": self.config.to_dict()}
        write_json(Path(str(stem) + ".model.json"), meta)

    @classmethod
    def load(cls, stem, dtype=np.float32):
        meta = read_json(Path(str(stem) + ".model.json"))
        model = cls(CnnConfig.from_dict(meta["config"]), seed=0, dtype=dtype)
        nn.load_state_dict(model.net, load_tensors(stem))
        return model


def loss(probabilities, onehot_labels, eps=1e-12):
    """Mean categorical cross-entropy on probability rows (epsilon-clamped)."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    onehot_labels = np.asarray(onehot_labels, dtype=np.float64)
    if probabilities.shape != onehot_labels.shape:
        raise ContractError(f"shape mismatch {probabilities.shape} vs {onehot_labels.shape}")
    return nn.cross_entropy_probs(probabilities, onehot_labels, eps)


def should_stop(val_losses, patience=1):
    """True once the last ``patience`` epochs failed to improve the best."""
    if len(val_losses) <= patience:
        return False
    tail = val_losses[-patience:]
    best_before = min(val_losses[:-patience])
    return all(v >= best_before for v in tail)


def _dataset_loss(model, images, labels, batch_size=256):
    total = 0.0
    for start in range(0, len(images), batch_size):
        xb = images[start : start + batch_size]
        yb = labels[start : start + batch_size]
        batch_loss, _, _ = nn.softmax_cross_entropy(model.logits(xb), yb)
        total += batch_loss * len(xb)
    return total / len(images)


def train(model, train_images, train_labels, val_images, val_labels, seed=0):
    """Minibatch Adam with early stopping; returns the training history.

    The model is mutated in place and ends holding the weights of the epoch
    with the best validation loss.
    """
    if len(train_images) == 0 or len(val_images) == 0:
        raise ContractError("train and validation splits must be nonempty")
    c = model.config
    rng = np.random.default_rng(seed)
    opt = nn.Adam(model.net.params(), lr=c.learning_rate, beta1=c.beta1, beta2=c.beta2)
    history = {"train_loss": [], "val_loss": []}
    best_state = nn.state_dict(model.net)
    best_val = np.inf
    best_epoch = 0
    train_labels = np.asarray(train_labels, dtype=np.int64)
    val_labels = np.asarray(val_labels, dtype=np.int64)

    for epoch in range(1, c.max_epochs + 1):
        order = rng.permutation(len(train_images))
        epoch_loss = 0.0
        for start in range(0, len(order), c.batch_size):
            idx = order[start : start + c.batch_size]
            xb = np.asarray(train_images)[idx]
            yb = train_labels[idx]
            opt.zero_grad()
            logits = model.logits(xb, nn.train_ctx(rng))
            batch_loss, _, dlogits = nn.softmax_cross_entropy(logits, yb)
            if not np.isfinite(batch_loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            model.net.backward(dlogits.astype(model.dtype))
            opt.step()
            epoch_loss += batch_loss * len(idx)
        history["train_loss"].append(epoch_loss / len(order))

        val_loss = _dataset_loss(model, val_images, val_labels)
        if not np.isfinite(val_loss):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        history["val_loss"].append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = nn.state_dict(model.net)
        if should_stop(history["val_loss"], c.patience):
            break

    nn.load_state_dict(model.net, best_state)
    history["best_epoch"] = best_epoch
    history["epochs_run"] = len(history["val_loss"])
    return history


@dataclass
class EvalReport:
    """Per-class precision/recall/F1 plus aggregates and run metadata."""

    class_names: list
    precision: list  # None where the class is absent from the test split
    recall: list
    f1: list
    support: list
    confusion: list  # rows = true class, cols = predicted
    macro_f1: float
    weighted_f1: float
    metadata: dict = field(default_factory=dict)
    schema_version: int = EVAL_REPORT_SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def f1_of(self, class_name):
        return self.f1[self.class_names.index(class_name)]


def report_from_confusion(confusion, metadata=None, class_names=None):
    confusion = np.asarray(confusion, dtype=np.int64)
    m = confusion.shape[0]
    if class_names is None:
        class_names = [c.value for c in CLASS_ORDER[:m]]
    precision, recall, f1 = [], [], []
    support = confusion.sum(axis=1)
    for k in range(m):
        if support[k] == 0:
            precision.append(None)
            recall.append(None)
            f1.append(None)
            continue
        tp = confusion[k, k]
        col = confusion[:, k].sum()
        p = tp / col if col else 0.0
        r = tp / support[k]
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if (p + r) else 0.0)
    defined = [v for v in f1 if v is not None]
    macro = float(np.mean(defined)) if defined else 0.0
    weighted_num = sum(s * v for s, v in zip(support, f1) if v is not None)
    weighted = float(weighted_num / support.sum()) if support.sum() else 0.0
    return EvalReport(
        class_names=list(class_names),
        precision=precision,
        recall=recall,
        f1=f1,
        support=[int(s) for s in support],
        confusion=confusion.tolist(),
        macro_f1=macro,
        weighted_f1=weighted,
        metadata=dict(metadata or {}),
    )


def evaluate(model, test_images, test_labels, metadata=None):
    """Confusion matrix and per-class metrics on a held-out split."""
    if len(test_images) == 0:
        raise ContractError("test split must be nonempty")
    test_labels = np.asarray(test_labels, dtype=np.int64)
    preds = model.predict(test_images)
    m = model.config.num_classes
    confusion = np.zeros((m, m), dtype=np.int64)
    np.add.at(confusion, (test_labels, preds), 1)
    return report_from_confusion(confusion, metadata)


def dataset_arrays(dataset, split):
    """(images, integer labels) for one split of a BeatDataset."""
    idx = dataset.indices(split=split)
    if split in ("val", "test"):
        for i in idx:
            if dataset.items[i].is_synthetic:
                raise ContractError(f"synthetic item {dataset.items[i].source!r} in {split} split")
    images = np.stack([dataset.items[i].pixels for i in idx]) if idx else np.empty((0, 0, 0))
    return images, dataset.labels_index(idx)


def train_on_dataset(model, dataset, seed=0):
    xt, yt = dataset_arrays(dataset, "train")
    xv, yv = dataset_arrays(dataset, "val")
    return train(model, xt, yt, xv, yv, seed=seed)


def evaluate_on_dataset(model, dataset, metadata=None):
    xs, ys = dataset_arrays(dataset, "test")
    return evaluate(model, xs, ys, metadata)
