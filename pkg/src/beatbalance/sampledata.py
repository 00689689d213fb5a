"""Synthetic ECG-like records for demos, tests and the bundled sample pair.

Not physiological data: Gaussian R-peak bumps on a drifting noisy baseline,
annotated at the bump centers. Enough structure for the pipeline to produce
plausible beat images without shipping any real recordings.
"""

import numpy as np

from .ingest import EcgRecord, HeartbeatClass, save_record

#: Beat-class mix used by the bundled sample record (repeats cyclically).
DEFAULT_PATTERN = (
    HeartbeatClass.NORMAL,
    HeartbeatClass.NORMAL,
    HeartbeatClass.LBBB,
    HeartbeatClass.NORMAL,
    HeartbeatClass.PVC,
    HeartbeatClass.RBB,
    HeartbeatClass.NORMAL,
    HeartbeatClass.APC,
    HeartbeatClass.PAB,
    HeartbeatClass.NORMAL,
    HeartbeatClass.VEB,
    HeartbeatClass.NORMAL,
)


def synthetic_record(record_id="synth", n_beats=20, labels=None, fs=360, seed=0, spacing=300):
    """One annotated record with ``n_beats`` Gaussian peaks."""
    rng = np.random.default_rng(seed)
    if labels is None:
        labels = [DEFAULT_PATTERN[i % len(DEFAULT_PATTERN)] for i in range(n_beats)]
    if len(labels) != n_beats:
        raise ValueError("labels length must equal n_beats")
    n_samples = spacing * (n_beats + 2)
    t = np.arange(n_samples, dtype=np.float64)
    signal = 0.05 * np.sin(2 * np.pi * t / 250.0) + 0.02 * rng.standard_normal(n_samples)
    annotations = []
    for b in range(n_beats):
        center = spacing * (b + 1) + int(rng.integers(-20, 21))
        width = 6.0 + 2.0 * rng.random()
        amp = 0.9 + 0.3 * rng.random()
        # small class-dependent morphology so classes are not identical
        amp *= 1.0 + 0.08 * (hash(labels[b].value) % 5)
        lo, hi = max(center - 60, 0), min(center + 60, n_samples)
        signal[lo:hi] += amp * np.exp(-0.5 * ((t[lo:hi] - center) / width) ** 2)
        annotations.append((center, labels[b]))
    return EcgRecord(record_id=record_id, sampling_rate=fs, signal=signal, annotations=annotations)


def write_sample_pair(directory, record_id="sample01", n_beats=36, seed=11):
    """Write one record as the two-file CSV pair; returns the two paths."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rec = synthetic_record(record_id=record_id, n_beats=n_beats, seed=seed)
    sig = directory / f"{record_id}.signal.csv"
    ann = directory / f"{record_id}.annotations.csv"
    save_record(rec, sig, ann)
    return sig, ann
