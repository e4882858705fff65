"""Deterministic synthetic RGB scenes for tests and desk-scale experiments.

Scenes are dominated by strong axis-aligned intensity steps (overlapping
rectangles) over gentle shading, then softly range-compressed. Bicubic
downsampling degrades such edges in a locally predictable way, which makes
the family a good desk-scale stand-in for super-resolution work: there is
real signal for a small network to recover. Channels share the luminance
structure with small constant tints.
"""

from __future__ import annotations

import numpy as np

from .image_core import RgbImage


def synthetic_rgb(height: int, width: int, seed: int) -> RgbImage:
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.arange(height) / height, np.arange(width) / width, indexing="ij"
    )

    base = np.full((height, width), 0.5)
    for _ in range(2):
        fy, fx = rng.uniform(0.5, 2.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        base += rng.uniform(0.03, 0.07) * np.sin(2.0 * np.pi * (fy * yy + fx * xx) + phase)

    for _ in range(14):
        r0 = int(rng.integers(0, max(1, height - 4)))
        c0 = int(rng.integers(0, max(1, width - 4)))
        rh = int(rng.integers(max(2, height // 10), max(3, height // 2)))
        cw = int(rng.integers(max(2, width // 10), max(3, width // 2)))
        base[r0 : r0 + rh, c0 : c0 + cw] += rng.uniform(0.3, 0.6) * rng.choice([-1.0, 1.0])

    # Compress into (0, 1) without flattening the step edges.
    base = 0.5 + 0.5 * np.tanh(1.8 * (base - 0.5))
    tints = rng.uniform(-0.03, 0.03, size=3)
    return RgbImage(
        np.clip(base + tints[0], 0.0, 1.0),
        np.clip(base + tints[1], 0.0, 1.0),
        np.clip(base + tints[2], 0.0, 1.0),
    )
