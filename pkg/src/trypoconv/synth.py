"""Synthetic hole-cluster images for desk-scale experiments.

Trypophobic images are a smooth colored texture with a cluster of dark,
soft-edged holes; neutral images share the texture family but carry stripes,
gradients or noise instead. Every image is generated from its own seed
sequence keyed by (seed, class, index), so the output does not depend on
generation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Sample, resize, write_png


@dataclass(frozen=True)
class SynthConfig:
    n_trypo: int = 200
    n_neutral: int = 200
    size: int = 64
    hole_count_range: tuple[int, int] = (10, 20)
    hole_radius_range: tuple[float, float] = (2.0, 4.5)
    seed: int = 0
    emit_masks: bool = True

    def __post_init__(self):
        if self.n_trypo <= 0 or self.n_neutral <= 0:
            raise ValueError("sample counts must be positive")
        lo, hi = self.hole_radius_range
        if not 0 < lo <= hi < self.size / 2:
            raise ValueError(f"hole radii must satisfy 0 < min <= max < size/2, got {self.hole_radius_range}")
        if not 0 < self.hole_count_range[0] <= self.hole_count_range[1]:
            raise ValueError(f"invalid hole_count_range {self.hole_count_range}")


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.45, 0.75, size=(3, 1, 1))
    coarse = rng.normal(0.0, 0.08, size=(3, 4, 4))
    texture = resize(coarse, size)
    fine = rng.normal(0.0, 0.02, size=(3, size, size))
    return base + texture + fine


def _holes(rng: np.random.Generator, cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Opacity map (soft discs) and binary mask of a hole cluster."""
    size = cfg.size
    n = rng.integers(cfg.hole_count_range[0], cfg.hole_count_range[1] + 1)
    center = rng.uniform(0.3 * size, 0.7 * size, size=2)
    spread = 0.11 * size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    alpha = np.zeros((size, size))
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(n):
        cy, cx = np.clip(center + rng.normal(0, spread, size=2), 0, size - 1)
        r = rng.uniform(*cfg.hole_radius_range)
        d = np.hypot(yy - cy, xx - cx)
        alpha = np.maximum(alpha, np.clip(r - d + 0.5, 0.0, 1.0))
        mask |= d <= r
    return alpha, mask


def _neutral_pattern(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    kind = rng.integers(3)
    if kind == 0:
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(2, 6)
        phase = rng.uniform(0, 2 * np.pi)
        u = np.cos(theta) * xx + np.sin(theta) * yy
        return 0.15 * np.sin(2 * np.pi * freq * u + phase)
    if kind == 1:
        theta = rng.uniform(0, 2 * np.pi)
        u = np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)
        return 0.3 * u
    return rng.uniform(-0.1, 0.1, size=(size, size))


def synth_sample(cfg: SynthConfig, label: int, index: int) -> tuple[Sample, np.ndarray]:
    """One image and its hole mask (all False for neutral images)."""
    rng = np.random.default_rng([cfg.seed, label, index])
    img = _background(rng, cfg.size)
    if label == 1:
        alpha, mask = _holes(rng, cfg)
        hole = rng.uniform(0.02, 0.12, size=(3, 1, 1))
        img = img * (1 - alpha) + hole * alpha
        prefix = "trypo"
    else:
        img = img + _neutral_pattern(rng, cfg.size)
        mask = np.zeros((cfg.size, cfg.size), dtype=bool)
        prefix = "neutral"
    img = np.clip(img, 0.0, 1.0).astype(np.float32)[None]
    return Sample(img, label, f"{prefix}_{index:05d}"), mask


def synth_generate(cfg: SynthConfig) -> tuple[list[Sample], list[np.ndarray] | None]:
    """All trypophobic samples followed by all neutral ones, plus masks if requested."""
    samples, masks = [], []
    for label, n in ((1, cfg.n_trypo), (0, cfg.n_neutral)):
        for i in range(n):
            s, m = synth_sample(cfg, label, i)
            samples.append(s)
            masks.append(m)
    return samples, (masks if cfg.emit_masks else None)


def write_dataset(root, samples, masks=None) -> Path:
    """Write samples in the ``<root>/{trypophobic,neutral}/*.png`` layout.

    Masks go to ``<root>/masks/<source_id>.png`` with 255 marking holes.
    Pixels are quantized to 8 bits, so reading the files back differs from
    the in-memory samples by at most 1/510.
    """
    root = Path(root)
    for cls in ("trypophobic", "neutral", *(("masks",) if masks is not None else ())):
        (root / cls).mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        cls = "trypophobic" if s.label == 1 else "neutral"
        name = Path(s.source_id).name
        write_png(root / cls / f"{name}.png", s.image)
        if masks is not None:
            write_png(root / "masks" / f"{name}.png", masks[i].astype(np.uint8) * 255)
    return root
