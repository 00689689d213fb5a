"""Deterministic toy image sets for desk-scale experiments and tests.

Two-mode bar images stand in for beat classes when exercising the training
stack: horizontal vs vertical bars with randomized position, thickness and
pixel noise. Small in every dimension so CPU-only runs stay fast.
"""

import numpy as np


def bar_image(rng, size=28, horizontal=True, thickness=None, noise=0.02):
    """One binary bar image with randomized geometry and salt noise."""
    img = np.zeros((size, size), dtype=np.uint8)
    if thickness is None:
        thickness = int(rng.integers(2, 5))
    pos = int(rng.integers(1, size - thickness - 1))
    if horizontal:
        img[pos : pos + thickness, :] = 1
    else:
        img[:, pos : pos + thickness] = 1
    if noise:
        flips = rng.random((size, size)) < noise
        img[flips] ^= 1
    return img


def bar_set(n, size=28, horizontal=True, noise=0.02, seed=0):
    rng = np.random.default_rng(seed)
    return np.stack([bar_image(rng, size, horizontal, noise=noise) for _ in range(n)])


def two_mode_bars(n_per_mode, size=28, noise=0.02, seed=0):
    """Balanced two-class set: label 0 horizontal, label 1 vertical."""
    rng = np.random.default_rng(seed)
    images = []
    labels = []
    for label, horizontal in ((0, True), (1, False)):
        for _ in range(n_per_mode):
            images.append(bar_image(rng, size, horizontal, noise=noise))
            labels.append(label)
    order = rng.permutation(len(images))
    return np.stack(images)[order], np.asarray(labels, dtype=np.int64)[order]


def textured_image(rng, size=28, vertical_theme=False, strokes=3, noise=0.05):
    """Harder class pair: several short strokes with a dominant orientation.

    Both classes contain strokes of both orientations; only the majority
    orientation differs, so small training sets genuinely confuse a
    classifier (unlike the clean single-bar images).
    """
    img = np.zeros((size, size), dtype=np.uint8)
    for s in range(strokes):
        length = int(rng.integers(size // 2, size))
        start = int(rng.integers(0, size - length + 1))
        lane = int(rng.integers(1, size - 2))
        thickness = int(rng.integers(1, 3))
        this_vertical = vertical_theme if s < strokes - 1 else not vertical_theme
        if this_vertical:
            img[start : start + length, lane : lane + thickness] = 1
        else:
            img[lane : lane + thickness, start : start + length] = 1
    if noise:
        flips = rng.random((size, size)) < noise
        img[flips] ^= 1
    return img


def textured_set(n, size=28, vertical_theme=False, seed=0, noise=0.05):
    rng = np.random.default_rng(seed)
    return np.stack([textured_image(rng, size, vertical_theme, noise=noise) for _ in range(n)])
