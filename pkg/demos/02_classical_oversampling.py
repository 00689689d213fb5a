"""Random, SMOTE, and ADASYN oversampling on a 2-D toy set and on beats.

The 2-D scatter makes the geometry visible: SMOTE fills straight segments
between minority neighbors, ADASYN concentrates samples near the class
border. The beat-image part runs the same code on flattened 112x112 pixel
vectors, exactly as the balancing protocol does.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from beatbalance import build_dataset, load_record
from beatbalance.harness import stratified_split
from beatbalance.oversample import OversampleRequest, adasyn_vectors, smote, smote_vectors

HERE = Path(__file__).resolve().parent
DATA = HERE.parent / "data" / "sample"
OUT = HERE / "output"


def toy_scatter():
    rng = np.random.default_rng(3)
    majority = rng.normal((0.0, 0.0), 0.8, size=(120, 2))
    minority = rng.normal((1.6, 1.2), 0.35, size=(14, 2))

    smote_new, _ = smote_vectors(minority, 60, 5, np.random.default_rng(1))
    adasyn_new, alloc, _ = adasyn_vectors(minority, majority, 60, 5, np.random.default_rng(1))
    print(f"ADASYN allocation per minority point: {alloc.tolist()} (sum {alloc.sum()})")

    fig, axes = plt.subplots(1, 2, figsize=(10, 4.2), sharex=True, sharey=True)
    for ax, synth, title in ((axes[0], smote_new, "SMOTE"), (axes[1], adasyn_new, "ADASYN")):
        ax.scatter(*majority.T, s=8, c="#bbbbbb", label="majority")
        ax.scatter(*synth.T, s=10, c="#d62728", marker="x", label="synthetic")
        ax.scatter(*minority.T, s=22, c="#1f77b4", label="minority")
        ax.set_title(title)
        ax.legend(fontsize=8)
    fig.tight_layout()
    OUT.mkdir(parents=True, exist_ok=True)
    fig.savefig(OUT / "oversampling_toy.png", dpi=120)
    print(f"wrote {OUT / 'oversampling_toy.png'}")


def beat_images():
    record = load_record(DATA / "sample01.signal.csv", DATA / "sample01.annotations.csv")
    dataset = stratified_split(build_dataset([record]), seed=0)
    from beatbalance.ingest import HeartbeatClass

    cls = HeartbeatClass.NORMAL
    train_count = len(dataset.indices(split="train", label=cls))
    req = OversampleRequest(dataset, cls, target_count=train_count + 6, k_neighbors=3, rng_seed=7)
    batch = smote(req)
    print(f"\nSMOTE on beats: {train_count} real {cls.value} train images -> +{len(batch)} synthetic")
    px = batch.images[0].pixels
    print(f"synthetic image is binary: values {sorted(np.unique(px).tolist())}, trace pixels {px.sum()}")


if __name__ == "__main__":
    toy_scatter()
    beat_images()
