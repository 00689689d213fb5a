"""Heartbeat anomaly detection with GAN-based oversampling of beat images.

Pipeline: ingest annotated ECG channels, rasterize peak-centered beats into
binary images, balance minority classes (random/SMOTE/ADASYN duplication or
class-targeted GAN samples), train a small CNN, and compare per-class F1
across the balancing methods.
"""

__version__ = "0.1.0"

from .ingest import CLASS_ORDER, EcgRecord, HeartbeatClass, class_histogram, load_record
from .preprocess import (
    BeatDataset,
    BeatImage,
    PreprocessConfig,
    build_dataset,
    load_dataset,
    rasterize_beat,
    save_dataset,
    segment_beats,
)
from .oversample import OversampleRequest, SyntheticBatch, adasyn, random_oversample, smote

__all__ = [
    "CLASS_ORDER",
    "EcgRecord",
    "HeartbeatClass",
    "class_histogram",
    "load_record",
    "BeatDataset",
    "BeatImage",
    "PreprocessConfig",
    "build_dataset",
    "load_dataset",
    "rasterize_beat",
    "save_dataset",
    "segment_beats",
    "OversampleRequest",
    "SyntheticBatch",
    "adasyn",
    "random_oversample",
    "smote",
]
