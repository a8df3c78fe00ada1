"""Image ingestion, resizing and augmentation.

Images are float32 arrays of shape (1, 3, H, W) with values in [0, 1].
Resampling uses the pixel-center convention: output pixel i of an n -> m
resize reads source coordinate (i + 0.5) * n / m - 0.5.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

CLASSES = (("trypophobic", 1), ("neutral", 0))


@dataclass
class Sample:
    image: np.ndarray  # (1, 3, H, W) float32 in [0, 1]
    label: int  # 1 = trypophobic, 0 = neutral
    source_id: str = ""


@dataclass(frozen=True)
class AugmentConfig:
    hflip: bool = True
    vflip: bool = True
    rotation_max_deg: float = 45.0
    shear_range: float = 0.3
    zoom_range: float = 0.3

    def __post_init__(self):
        if self.rotation_max_deg < 0:
            raise ValueError("rotation_max_deg must be >= 0")
        if not 0 <= self.shear_range < 1 or not 0 <= self.zoom_range < 1:
            raise ValueError("shear_range and zoom_range must be in [0, 1)")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(False, False, 0.0, 0.0, 0.0)

    @property
    def enabled(self) -> bool:
        return self != AugmentConfig.disabled()


def stack(samples) -> tuple[np.ndarray, np.ndarray]:
    """(N, 3, H, W) images and (N,) labels from a sequence of samples."""
    images = np.concatenate([s.image for s in samples], axis=0)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels


# -- PNG I/O ----------------------------------------------------------------


def read_png(path) -> np.ndarray:
    """Decode an 8-bit PNG to a (1, 3, H, W) float32 array in [0, 1]."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return (rgb.astype(np.float32) / 255.0).transpose(2, 0, 1)[None]


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(…, H, W) float in [0, 1] -> uint8, HWC for 3-channel input."""
    arr = np.asarray(image)
    if arr.ndim == 4:
        arr = arr[0]
    if arr.ndim == 3:
        arr = arr.transpose(1, 2, 0)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_png(path, image: np.ndarray):
    """Write a float image ((1,3,H,W), (3,H,W) or (H,W)) or a uint8 array as PNG."""
    arr = image if image.dtype == np.uint8 else to_uint8(image)
    Image.fromarray(arr).save(path, format="PNG")


# -- resampling -------------------------------------------------------------


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1 - f)
    np.add.at(m, (rows, i1), f)
    return m


def resize(image: np.ndarray, height: int, width: int | None = None) -> np.ndarray:
    """Bilinear resize of the last two axes (edge-clamped, no antialiasing)."""
    width = height if width is None else width
    h, w = image.shape[-2:]
    if (h, w) == (height, width):
        return image.copy()
    rh = _interp_matrix(h, height)
    rw = _interp_matrix(w, width)
    out = rh @ image.astype(np.float64) @ rw.T
    return out.astype(image.dtype)


def downsample(sample: Sample, factor: int) -> Sample:
    """Reduce resolution by 2 or 4 via successive bilinear halvings.

    A centered bilinear halving is exactly a 2x2 mean, so factor 4 is the
    4x4 block mean and downsample(downsample(s, 2), 2) == downsample(s, 4).
    """
    if factor not in (1, 2, 4):
        raise ValueError(f"downsample factor must be 1, 2 or 4, got {factor}")
    h, w = sample.image.shape[-2:]
    if h % factor or w % factor:
        raise ValueError(f"image size {h}x{w} is not divisible by factor {factor}")
    image = sample.image
    while factor > 1:
        h, w = h // 2, w // 2
        image = resize(image, h, w)
        factor //= 2
    return Sample(image, sample.label, sample.source_id)


# -- augmentation -----------------------------------------------------------


@dataclass(frozen=True)
class AffineParams:
    hflip: bool = False
    vflip: bool = False
    angle_deg: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0


def sample_affine(cfg: AugmentConfig, rng: np.random.Generator) -> AffineParams:
    """Draw one set of augmentation parameters. Always consumes five draws."""
    u = rng.random(5)
    return AffineParams(
        hflip=cfg.hflip and u[0] < 0.5,
        vflip=cfg.vflip and u[1] < 0.5,
        angle_deg=cfg.rotation_max_deg * (2 * u[2] - 1),
        shear=cfg.shear_range * (2 * u[3] - 1),
        zoom=1 + cfg.zoom_range * (2 * u[4] - 1),
    )


def _inverse_matrix(p: AffineParams) -> np.ndarray:
    """Maps output coordinates (x right, y down, centered) to source coordinates.

    The forward map is zoom . shear . rotate . flip; positive angles rotate the
    content counter-clockwise on screen (np.rot90 direction).
    """
    flip = np.diag([-1.0 if p.hflip else 1.0, -1.0 if p.vflip else 1.0])
    t = math.radians(p.angle_deg)
    c, s = math.cos(t), math.sin(t)
    rot_inv = np.array([[c, -s], [s, c]])
    shear_inv = np.array([[1.0, -p.shear], [0.0, 1.0]])
    zoom_inv = np.diag([1.0 / p.zoom, 1.0 / p.zoom])
    return flip @ rot_inv @ shear_inv @ zoom_inv


def _reflect(u: np.ndarray, n: int) -> np.ndarray:
    # mirror about the outer pixel edges (-0.5 and n - 0.5)
    t = np.mod(u + 0.5, 2 * n)
    t = np.where(t >= n, 2 * n - t, t)
    return np.clip(t - 0.5, 0, n - 1)


def warp_affine(image: np.ndarray, params: AffineParams) -> np.ndarray:
    """Resample ``image`` (…, H, W) under one composed affine map about its center."""
    h, w = image.shape[-2:]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    m = _inverse_matrix(params)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = m[0, 0] * (xx - cx) + m[0, 1] * (yy - cy) + cx
    ys = m[1, 0] * (xx - cx) + m[1, 1] * (yy - cy) + cy
    xs, ys = _reflect(xs, w), _reflect(ys, h)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx, fy = xs - x0, ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    img = image.astype(np.float64)
    top = img[..., y0, x0] * (1 - fx) + img[..., y0, x1] * fx
    bottom = img[..., y1, x0] * (1 - fx) + img[..., y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return np.clip(out, 0.0, 1.0).astype(image.dtype)


def augment(sample: Sample, cfg: AugmentConfig, rng: np.random.Generator) -> Sample:
    params = sample_affine(cfg, rng)
    if params == AffineParams():
        return Sample(sample.image.copy(), sample.label, sample.source_id)
    return Sample(warp_affine(sample.image, params), sample.label, sample.source_id)


# -- directory datasets -----------------------------------------------------


def load_dataset(root, target_size: int, require_both: bool = True) -> list[Sample]:
    """Read ``root/{trypophobic,neutral}/*.png`` resized to ``target_size``.

    Trypophobic samples come first; files within a class are in lexicographic
    order. Undecodable files are skipped with a warning. With
    ``require_both=False`` a missing or empty class is tolerated (evaluation
    of single-class folders) as long as some image was read.
    """
    root = Path(root)
    samples = []
    skipped = 0
    for cls, label in CLASSES:
        d = root / cls
        if not d.is_dir():
            if require_both:
                raise FileNotFoundError(f"missing class directory {d}")
            continue
        count = 0
        for f in sorted(d.glob("*.png")):
            try:
                img = read_png(f)
            except Exception as e:  # PIL raises a zoo of types on bad data
                log.warning("skipping undecodable image %s: %s", f, e)
                skipped += 1
                continue
            img = resize(img, target_size)
            samples.append(Sample(img, label, f"{cls}/{f.name}"))
            count += 1
        if count == 0 and require_both:
            raise ValueError(f"class '{cls}' has no readable images in {d}")
    if skipped:
        log.warning("skipped %d undecodable files under %s", skipped, root)
    if not samples:
        raise ValueError(f"no readable images under {root}")
    return samples
