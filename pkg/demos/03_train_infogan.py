"""Train the categorical-code GAN on a two-mode toy set, watch it learn.

Desk-scale run (28x28 bar images, a few thousand steps) showing the
training loop, periodic snapshots, resumability, and code-conditional
sampling. Writes sample grids per snapshot under demos/output/gan/.

Pass a step count to override the default 2000, e.g.:

    python demos/03_train_infogan.py 4000
"""

import sys
from pathlib import Path

import numpy as np

from beatbalance.infogan import (
    DESK_CONFIG,
    InfoGanConfig,
    InfoGanState,
    binary_to_signed,
    sample_images,
    signed_to_binary,
    train,
)
from beatbalance.toydata import two_mode_bars

HERE = Path(__file__).resolve().parent
OUT = HERE / "output" / "gan"


def ascii_grid(images, per_row=4):
    images = images[: per_row * 2]
    for block in range(0, len(images), per_row):
        rows = [img[::2] for img in images[block : block + per_row]]
        for r in range(rows[0].shape[0]):
            print("   ".join("".join(".#"[v] for v in img[r]) for img in rows))
        print()


def main():
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
    images, _ = two_mode_bars(100, size=28, seed=5)
    x = binary_to_signed(images)

    config = InfoGanConfig.from_dict({**DESK_CONFIG.to_dict(), "g_learning_rate": 1e-3})
    state = InfoGanState(config, seed=3, beat_class="toy")
    print(f"training {epochs} epochs (one D step + one frozen-D G step each) ...")
    snaps = train(state, x, snapshot_dir=OUT, max_epochs=epochs, snapshot_period=500, log_every=500)
    for snap in snaps:
        m = snap.metrics
        print(f"  epoch {snap.epoch}: d={m['d_loss']:.3f} g={m['g_loss']:.3f} info={m['info_loss']:.3f} -> {snap.path}")

    print("\nsamples conditioned on each code value:")
    for code in (0, 1):
        imgs, _ = sample_images(state, 4, np.random.default_rng(0), code_index=code)
        print(f"--- code {code}")
        ascii_grid(signed_to_binary(imgs))


if __name__ == "__main__":
    main()
