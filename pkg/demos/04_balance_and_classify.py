"""The full comparison protocol at desk scale.

Builds an imbalanced two-class image set (majority vs 5%-prevalence
minority), balances the train split with random duplication and SMOTE,
trains the CNN per method, and prints the minority-class F1 side by side.
A quick, classical-methods-only version of the experiment harness; the
GAN-based method joins in once a snapshot is trained (see demo 03).
"""

import numpy as np

from beatbalance.classifier import CnnConfig
from beatbalance.harness import ExperimentConfig, run_comparison
from beatbalance.ingest import CLASS_ORDER, HeartbeatClass
from beatbalance.preprocess import BeatDataset, BeatImage
from beatbalance.toydata import textured_set


def imbalanced_dataset(majority=240, minority=12, seed=0):
    """Majority = horizontal-theme textures, minority (VEB) = vertical."""
    maj = textured_set(majority, vertical_theme=False, seed=seed)
    minr = textured_set(minority, vertical_theme=True, seed=seed + 1)
    items = [
        BeatImage(pixels=img, label=HeartbeatClass.NORMAL, source=f"maj:{i}") for i, img in enumerate(maj)
    ] + [BeatImage(pixels=img, label=HeartbeatClass.VEB, source=f"min:{i}") for i, img in enumerate(minr)]
    return BeatDataset(items)


def main():
    dataset = imbalanced_dataset()
    print(f"dataset: {len(dataset)} images, "
          f"{dataset.histogram()[HeartbeatClass.VEB]} minority ({HeartbeatClass.VEB.value})")

    config = ExperimentConfig(
        repeats=3,
        methods=("original", "random", "smote"),
        balance_target=120,
        minority_classes=("VEB",),
        k_neighbors=3,
        master_seed=11,
        cnn=CnnConfig(image_size=28, conv_filters=(8, 16), dense_units=32, kernel=3, max_epochs=8),
    )
    table = run_comparison(dataset, config)

    print(f"\nminority F1 over {config.repeats} repeats (mean ± std):")
    for method in config.methods:
        mean, std = table.cell("VEB", method)
        print(f"  {method:>9s}: {mean:.3f} ± {std:.3f}")
    print("\nsupport-weighted totals:")
    for method in config.methods:
        print(f"  {method:>9s}: {table.total_mean[method]:.3f} ± {table.total_std[method]:.3f}")


if __name__ == "__main__":
    main()
