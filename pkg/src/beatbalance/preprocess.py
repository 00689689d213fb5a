"""Turn annotated ECG records into binary beat-image datasets.

Each annotated beat is cut out as a fixed window centered on the annotated
peak and rendered as a binary image of its polyline trace. A "time-slice" is
a block of ``slice_samples`` raw samples; the window spans ``window_slices``
such blocks (default 25 x 10 = 250 samples, ~0.7 s at 360 Hz, a full beat).

Rendering rule: amplitudes are min-max normalized per window, time is
resampled to ``size`` columns by linear interpolation, each column gets the
pixel at its mapped row, and consecutive columns are joined by a vertical
fill so the trace is a connected polyline. Row 0 is the top of the image and
holds the window maximum; a flat window renders as the center row.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, IntegrityError
from .ingest import CLASS_ORDER, HeartbeatClass, class_by_name
from .tensorio import read_json, read_pgm, write_json, write_pgm

log = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = 112
DEFAULT_WINDOW_SLICES = 25
DEFAULT_SLICE_SAMPLES = 10

#: Provenance tag carried by images cut from a real recording.
REAL = "real"

SPLITS = ("train", "val", "test", "none")

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class PreprocessConfig:
    window_slices: int = DEFAULT_WINDOW_SLICES
    slice_samples: int = DEFAULT_SLICE_SAMPLES
    image_size: int = DEFAULT_IMAGE_SIZE


@dataclass(frozen=True)
class BeatImage:
    """One binary raster of a single peak-centered beat."""

    pixels: np.ndarray  # (H, W) uint8 with values in {0, 1}
    label: HeartbeatClass
    source: str  # "record_id:annotation_index" or a synthetic tag
    provenance: str = REAL  # REAL or the generating method name

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        object.__setattr__(self, "pixels", px)
        if px.ndim != 2:
            raise ValueError(f"pixels must be 2-D, got shape {px.shape}")
        if px.max(initial=0) > 1:
            raise ValueError("pixels must be binary {0,1}")

    @property
    def is_synthetic(self):
        return self.provenance != REAL

    def __eq__(self, other):
        if not isinstance(other, BeatImage):
            return NotImplemented
        return (
            self.label == other.label
            and self.source == other.source
            and self.provenance == other.provenance
            and np.array_equal(self.pixels, other.pixels)
        )


class BeatDataset:
    """Ordered collection of beat images with per-item split tags."""

    def __init__(self, items=(), splits=None):
        self.items = list(items)
        if splits is None:
            splits = ["none"] * len(self.items)
        self.splits = list(splits)
        if len(self.splits) != len(self.items):
            raise ValueError("items and splits length mismatch")
        for s in self.splits:
            self._check_split(s)
        self._check_synthetic_splits()

    @staticmethod
    def _check_split(s):
        if s not in SPLITS:
            raise ValueError(f"unknown split tag {s!r}")

    def _check_synthetic_splits(self):
        for item, split in zip(self.items, self.splits):
            if item.is_synthetic and split in ("val", "test"):
                raise ValueError(f"synthetic item {item.source!r} tagged split={split}")

    def __len__(self):
        return len(self.items)

    def __eq__(self, other):
        if not isinstance(other, BeatDataset):
            return NotImplemented
        return self.items == other.items and self.splits == other.splits

    @property
    def image_size(self):
        if not self.items:
            raise EmptyDatasetError("dataset has no items")
        return self.items[0].pixels.shape

    def histogram(self, split=None):
        """Class counts, optionally restricted to one split."""
        counts = {c: 0 for c in CLASS_ORDER}
        for item, s in zip(self.items, self.splits):
            if split is None or s == split:
                counts[item.label] += 1
        return counts

    def indices(self, split=None, label=None, real_only=False):
        out = []
        for i, (item, s) in enumerate(zip(self.items, self.splits)):
            if split is not None and s != split:
                continue
            if label is not None and item.label != label:
                continue
            if real_only and item.is_synthetic:
                continue
            out.append(i)
        return out

    def subset(self, indices):
        return BeatDataset([self.items[i] for i in indices], [self.splits[i] for i in indices])

    def with_splits(self, splits):
        return BeatDataset(self.items, splits)

    def extend(self, items, split="train"):
        """Return a new dataset with ``items`` appended under ``split``."""
        self._check_split(split)
        return BeatDataset(self.items + list(items), self.splits + [split] * len(items))

    def pixel_matrix(self, indices=None):
        """Flattened {0,1} pixel vectors as a float64 (n, H*W) matrix."""
        if indices is None:
            indices = range(len(self.items))
        return np.stack([self.items[i].pixels.reshape(-1).astype(np.float64) for i in indices])

    def labels_index(self, indices=None):
        from .ingest import CLASS_INDEX

        if indices is None:
            indices = range(len(self.items))
        return np.array([CLASS_INDEX[self.items[i].label] for i in indices], dtype=np.int64)


def segment_beats(record, window_slices=DEFAULT_WINDOW_SLICES, slice_samples=DEFAULT_SLICE_SAMPLES):
    """Cut one window per annotation, centered on the annotated peak.

    Returns a list of ``((annotation_index, sample_index, label), window)``
    pairs. Annotations whose window would cross a signal boundary are
    skipped, not errors; the skipped count is logged.
    """
    if window_slices % 2 == 0:
        raise ValueError(f"window_slices must be odd, got {window_slices}")
    if slice_samples < 1:
        raise ValueError(f"slice_samples must be >= 1, got {slice_samples}")
    length = window_slices * slice_samples
    half = length // 2
    signal = record.signal
    out = []
    skipped = 0
    for ann_index, (peak, label) in enumerate(record.annotations):
        start = peak - half
        if start < 0 or start + length > signal.size:
            skipped += 1
            continue
        out.append(((ann_index, peak, label), signal[start : start + length].copy()))
    if skipped:
        log.info("%s: skipped %d boundary beats", record.record_id, skipped)
    return out


def rasterize_beat(window, size=DEFAULT_IMAGE_SIZE, label=HeartbeatClass.NORMAL, source="", provenance=REAL):
    """Render one amplitude window as a binary ``size`` x ``size`` image."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1 or window.size < 2:
        raise ValueError("window must be a 1-D sequence of at least 2 samples")
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")

    lo = window.min()
    hi = window.max()
    if hi > lo:
        norm = (window - lo) / (hi - lo)
    else:
        norm = np.full_like(window, 0.5)  # flat window -> center row
    # Resample time to `size` columns, then quantize to rows. Normalized
    # values are rounded to 9 decimals first so any a*w+b rescaling of the
    # window maps to the same rows despite float jitter.
    cols = np.interp(np.linspace(0.0, window.size - 1, size), np.arange(window.size), norm)
    cols = np.round(cols, 9)
    rows = np.rint((1.0 - cols) * (size - 1)).astype(np.int64)

    pixels = np.zeros((size, size), dtype=np.uint8)
    pixels[rows[0], 0] = 1
    for j in range(1, size):
        a, b = rows[j - 1], rows[j]
        lo_r, hi_r = (a, b) if a <= b else (b, a)
        pixels[lo_r : hi_r + 1, j] = 1
    return BeatImage(pixels=pixels, label=label, source=source, provenance=provenance)


def build_dataset(records, config=PreprocessConfig()):
    """Rasterize every in-bounds beat of every record, in input order."""
    items = []
    for rec in records:
        for (ann_index, _, label), window in segment_beats(rec, config.window_slices, config.slice_samples):
            items.append(
                rasterize_beat(
                    window,
                    size=config.image_size,
                    label=label,
                    source=f"{rec.record_id}:{ann_index}",
                )
            )
    if not items:
        raise EmptyDatasetError("no beats survive segmentation")
    return BeatDataset(items)


def save_dataset(dataset, directory):
    """Persist a dataset as ``manifest.json`` plus one PGM per item.

    Returns the manifest path. Writing the same dataset twice produces
    byte-identical files.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not dataset.items:
        raise EmptyDatasetError("refusing to save an empty dataset")
    h, w = dataset.image_size
    entries = []
    for i, (item, split) in enumerate(zip(dataset.items, dataset.splits)):
        if item.pixels.shape != (h, w):
            raise ValueError(f"item {i} has shape {item.pixels.shape}, dataset is {(h, w)}")
        fname = f"beat_{i:06d}.pgm"
        write_pgm(directory / fname, item.pixels * np.uint8(255))
        entries.append(
            {
                "id": i,
                "label": item.label.value,
                "split": split,
                "provenance": item.provenance,
                "source": item.source,
                "file": fname,
            }
        )
    manifest = {
        "format": "beatbalance-dataset",
        "version": 1,
        "image_size": [h, w],
        "items": entries,
    }
    manifest_path = directory / MANIFEST_NAME
    write_json(manifest_path, manifest)
    return manifest_path


def load_dataset(directory):
    """Load a dataset directory; inverse of :func:`save_dataset`."""
    directory = Path(directory)
    manifest = read_json(directory / MANIFEST_NAME)
    if manifest.get("format") != "beatbalance-dataset":
        raise IntegrityError(f"{directory}: not a dataset manifest")
    h, w = manifest["image_size"]
    items = []
    splits = []
    for entry in manifest["items"]:
        path = directory / entry["file"]
        try:
            raw = read_pgm(path)
        except FileNotFoundError:
            raise IntegrityError(f"item {entry['id']}: missing pixel file {entry['file']}") from None
        if raw.shape != (h, w):
            raise IntegrityError(f"item {entry['id']}: pixel file shape {raw.shape} != manifest {(h, w)}")
        if not np.isin(raw, (0, 255)).all():
            raise IntegrityError(f"item {entry['id']}: pixel file is not binary 0/255")
        items.append(
            BeatImage(
                pixels=(raw // 255).astype(np.uint8),
                label=class_by_name(entry["label"]),
                source=entry["source"],
                provenance=entry["provenance"],
            )
        )
        splits.append(entry["split"])
    return BeatDataset(items, splits)


def relabel_split(dataset, index_to_split):
    """Return a copy with split tags replaced per ``index_to_split``."""
    splits = list(dataset.splits)
    for i, s in index_to_split.items():
        splits[i] = s
    return dataset.with_splits(splits)
