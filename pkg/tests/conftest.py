import numpy as np
import pytest

from beatbalance.ingest import CLASS_ORDER, HeartbeatClass
from beatbalance.preprocess import BeatDataset, BeatImage
from beatbalance.sampledata import synthetic_record as _synthetic_record


def synthetic_record(record_id="synth", n_beats=20, labels=None, fs=360, seed=0, spacing=300):
    """ECG-like record; NORMAL-only by default to keep assertions simple."""
    if labels is None:
        labels = [HeartbeatClass.NORMAL] * n_beats
    return _synthetic_record(record_id=record_id, n_beats=n_beats, labels=labels, fs=fs, seed=seed, spacing=spacing)


def tiny_image(label, seed=0, size=8, provenance="real", source=None):
    rng = np.random.default_rng(seed)
    px = (rng.random((size, size)) > 0.6).astype(np.uint8)
    return BeatImage(
        pixels=px,
        label=label,
        source=source if source is not None else f"tiny:{seed}",
        provenance=provenance,
    )


def tiny_dataset(counts, size=8, split="train", seed=0):
    """Dataset with ``counts[cls]`` images per class, all under one split."""
    items = []
    k = 0
    for cls in CLASS_ORDER:
        for _ in range(counts.get(cls, 0)):
            items.append(tiny_image(cls, seed=seed + k, size=size, source=f"t:{k}"))
            k += 1
    return BeatDataset(items, [split] * len(items))


@pytest.fixture
def record():
    return synthetic_record()
