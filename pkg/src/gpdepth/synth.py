"""Synthetic ground-truth scenes for desk-scale experiments.

A scene is a tilted background plane, a facade plane on the right side and a
spherical object in front, all quantized to the PNG depth resolution so that
in-memory maps and files agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .depthmap import KITTI_DIVISOR, DepthMap, SparsePointSet
from .errors import InputError


@dataclass(frozen=True)
class SceneParams:
    width: int = 200
    height: int = 150
    noise_std: float = 0.5
    blur_sigma: float = 0.0
    scan_lines: int = 64
    col_step: int = 2
    seed: int = 0
    scale_divisor: float = KITTI_DIVISOR

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise InputError(f"scene must be at least 2x2, got {self.width}x{self.height}")
        if self.noise_std < 0 or self.blur_sigma < 0:
            raise InputError("noise_std and blur_sigma must be nonnegative")
        if self.scan_lines < 1 or self.col_step < 1:
            raise InputError("scan_lines and col_step must be positive")
        if not self.scale_divisor > 0:
            raise InputError("scale_divisor must be positive")


def _quantize(depth, divisor):
    return np.maximum(np.rint(depth * divisor), 1.0) / divisor


def scene_depth(width: int, height: int) -> np.ndarray:
    """Noise-free depth in meters, shape ``(height, width)``."""
    v, u = np.mgrid[0:height, 0:width] + 0.5
    x, y = u / width, v / height
    depth = 30.0 - 20.0 * y - 2.0 * x
    facade = np.where(x > 0.7, 12.0 + 4.0 * (x - 0.7), np.inf)
    radius = 0.15 * min(width, height)
    r2 = ((u - 0.35 * width) ** 2 + (v - 0.5 * height) ** 2) / radius ** 2
    sphere = np.where(r2 < 1.0, 10.0 - 3.0 * np.sqrt(np.clip(1.0 - r2, 0.0, None)), np.inf)
    return np.minimum(depth, np.minimum(facade, sphere))


def scan_pattern(width: int, height: int, scan_lines: int, col_step: int):
    """Pixel coordinates ``(u, v)`` of a LiDAR-like pattern of horizontal scan lines."""
    rows = np.unique(np.rint(np.linspace(0, height - 1, min(scan_lines, height))).astype(int))
    us, vs = [], []
    for k, row in enumerate(rows):
        cols = np.arange(k % col_step, width, col_step)
        us.append(cols)
        vs.append(np.full(len(cols), row))
    return np.concatenate(us), np.concatenate(vs)


def make_scene(params: SceneParams):
    """Return ``(gt, dense, sparse)`` for the given parameters."""
    w, h, div = params.width, params.height, params.scale_divisor
    gt_values = _quantize(scene_depth(w, h), div)
    gt = DepthMap(gt_values, np.ones((h, w), bool))
    rng = np.random.Generator(np.random.PCG64(params.seed))
    base = ndimage.gaussian_filter(gt_values, params.blur_sigma, mode="nearest") if params.blur_sigma else gt_values
    noisy = base + params.noise_std * rng.standard_normal((h, w)) if params.noise_std else base
    dense = DepthMap(_quantize(noisy, div), np.ones((h, w), bool))
    u, v = scan_pattern(w, h, params.scan_lines, params.col_step)
    sparse = SparsePointSet(u, v, gt_values[v, u], (w, h))
    return gt, dense, sparse
