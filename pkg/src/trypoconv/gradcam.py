"""Grad-CAM heatmaps, overlays and a localization score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import resize
from .model import Model


@dataclass
class Heatmap:
    raw: np.ndarray  # ReLU(sum_k alpha_k A^k) at tap resolution, unnormalized
    values: np.ndarray  # raw / max(raw), tap resolution
    upsampled: np.ndarray  # values resized to the input resolution
    tap_name: str


def _tap_name(model: Model, tap) -> str:
    if tap is None:
        return f"block{model.config.blocks}"
    name = f"block{tap}" if isinstance(tap, (int, np.integer)) else str(tap)
    if name not in model.taps:
        raise ValueError(f"invalid tap {tap!r} for a {model.config.blocks}-block model; available: {sorted(model.taps)}")
    return name


def channel_weights(model: Model, image: np.ndarray, tap=None) -> tuple[np.ndarray, np.ndarray]:
    """Tap activations A (C, h, w) and alpha_k = spatial mean of d logit / d A^k.

    Parameter gradients touched by the backward pass are cleared afterwards.
    """
    name = _tap_name(model, tap)
    x = image if image.ndim == 4 else image[None]
    if x.shape[0] != 1:
        raise ValueError(f"gradcam expects a single image, got batch of {x.shape[0]}")
    logit = model.forward(x, training=False)
    model.backward(np.ones_like(logit), input_grad=False)
    acts = model.activations[name][0].astype(np.float64)
    grads = model.tap_grads[name][0].astype(np.float64)
    model.zero_grad()
    return acts, grads.mean(axis=(1, 2))


def gradcam(model: Model, image: np.ndarray, tap=None) -> Heatmap:
    """Grad-CAM of the raw trypophobia logit at a block tap (default: deepest block).

    The map is max-normalized, so an all-zero map stays zero.
    """
    name = _tap_name(model, tap)
    acts, alpha = channel_weights(model, image, name)
    raw = np.maximum(np.tensordot(alpha, acts, axes=1), 0.0)
    peak = raw.max()
    values = raw / peak if peak > 0 else np.zeros_like(raw)
    size = image.shape[-1]
    up = np.clip(resize(values, image.shape[-2], size), 0.0, 1.0)
    return Heatmap(raw=raw, values=values, upsampled=up, tap_name=name)


def jet(values: np.ndarray) -> np.ndarray:
    """Jet colormap: (H, W) in [0, 1] -> (H, W, 3) RGB in [0, 1]."""
    v = np.clip(values, 0.0, 1.0)[..., None]
    centers = np.array([3.0, 2.0, 1.0])  # red, green, blue
    return np.clip(1.5 - np.abs(4.0 * v - centers), 0.0, 1.0)


def overlay(image: np.ndarray, heatmap: Heatmap | np.ndarray, alpha: float = 0.4) -> np.ndarray:
    """Blend jet(heatmap) onto ``image`` (1, 3, H, W); returns uint8 (H, W, 3)."""
    heat = heatmap.upsampled if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    img = np.asarray(image, dtype=np.float64)
    img = img[0] if img.ndim == 4 else img
    if heat.shape != img.shape[-2:]:
        raise ValueError(f"heatmap shape {heat.shape} does not match image size {img.shape[-2:]}")
    blend = (1 - alpha) * img.transpose(1, 2, 0) + alpha * jet(heat)
    return np.clip(np.rint(blend * 255.0), 0, 255).astype(np.uint8)


def heatmap_image(heatmap: Heatmap) -> np.ndarray:
    """Grayscale uint8 rendering of the upsampled map."""
    return np.clip(np.rint(heatmap.upsampled * 255.0), 0, 255).astype(np.uint8)


def localization_score(heatmap: Heatmap | np.ndarray, mask: np.ndarray) -> float:
    """Fraction of total heatmap mass inside ``mask``; 0 for an all-zero map."""
    heat = heatmap.upsampled if isinstance(heatmap, Heatmap) else np.asarray(heatmap, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if mask.shape != heat.shape:
        raise ValueError(f"mask shape {mask.shape} does not match heatmap shape {heat.shape}")
    total = heat.sum()
    if total <= 0:
        return 0.0
    return float(heat[mask].sum() / total)
