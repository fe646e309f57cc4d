"""Depth-map and sparse-measurement data model, file I/O and training-set assembly.

Depth is stored in meters. Invalid pixels hold 0.0 and ``valid=False``; the
mask is authoritative. Pixel ``(u, v)`` is column ``u``, row ``v``; its center
sits at ``(u + 0.5, v + 0.5)`` in pixel units.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DepthOverflowError, InputError

KITTI_DIVISOR = 256.0
CSV_HEADER = ("u", "v", "depth_m")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Dense grid of depths, shape ``(height, width)``, with a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InputError(f"depth map must be a non-empty 2D array, got shape {values.shape}")
        if valid.shape != values.shape:
            raise InputError(f"mask shape {valid.shape} != values shape {values.shape}")
        good = values[valid]
        if not np.all(np.isfinite(good)) or np.any(good <= 0):
            raise InputError("valid depths must be finite and > 0")
        values = np.where(valid, values, 0.0)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_array(cls, depth) -> "DepthMap":
        """Build from an array where non-positive or non-finite entries mean invalid."""
        depth = np.asarray(depth, dtype=np.float64)
        valid = np.isfinite(depth) & (depth > 0)
        return cls(np.where(valid, depth, 0.0), valid)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def __eq__(self, other):
        if not isinstance(other, DepthMap):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.valid, other.valid)
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True, eq=False)
class SparsePointSet:
    """Sparse depth measurements on an image plane of size ``frame = (width, height)``."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    frame: tuple[int, int]

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64).ravel()
        v = np.asarray(self.v, dtype=np.int64).ravel()
        d = np.asarray(self.depth, dtype=np.float64).ravel()
        width, height = (int(x) for x in self.frame)
        if width < 1 or height < 1:
            raise InputError(f"invalid frame {self.frame}")
        if not (len(u) == len(v) == len(d)):
            raise InputError("u, v and depth must have equal length")
        if np.any((u < 0) | (u >= width) | (v < 0) | (v >= height)):
            raise InputError(f"sparse point outside the {width}x{height} frame")
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise InputError("sparse depths must be finite and > 0")
        if len(np.unique(v * width + u)) != len(u):
            raise InputError("duplicate pixel in sparse point set; use resolve_occlusions")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "depth", _frozen(d))
        object.__setattr__(self, "frame", (width, height))

    @classmethod
    def empty(cls, frame) -> "SparsePointSet":
        return cls(np.zeros(0, int), np.zeros(0, int), np.zeros(0), frame)

    def __len__(self) -> int:
        return len(self.u)

    def subset(self, index) -> "SparsePointSet":
        index = np.sort(np.asarray(index, dtype=np.int64))
        return SparsePointSet(self.u[index], self.v[index], self.depth[index], self.frame)

    def to_map(self) -> DepthMap:
        width, height = self.frame
        values = np.zeros((height, width))
        values[self.v, self.u] = self.depth
        valid = np.zeros((height, width), dtype=bool)
        valid[self.v, self.u] = True
        return DepthMap(values, valid)

    def __eq__(self, other):
        if not isinstance(other, SparsePointSet):
            return NotImplemented
        return (self.frame == other.frame
                and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v)
                and np.array_equal(self.depth, other.depth))


def resolve_occlusions(u, v, depth, frame) -> SparsePointSet:
    """Collapse duplicate pixels, keeping the closest depth at each."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    depth = np.asarray(depth, dtype=np.float64)
    key = v * int(frame[0]) + u
    order = np.lexsort((depth, key))
    key_sorted = key[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = key_sorted[1:] != key_sorted[:-1]
    keep = np.sort(order[first])
    return SparsePointSet(u[keep], v[keep], depth[keep], frame)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """GP training data: pixel-center inputs ``(N, 2)``, depths and per-row noise std."""

    inputs: np.ndarray
    outputs: np.ndarray
    noise: np.ndarray
    n_dense: int = field(default=0)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64).reshape(-1, 2)
        y = np.asarray(self.outputs, dtype=np.float64).ravel()
        s = np.asarray(self.noise, dtype=np.float64).ravel()
        if not (len(x) == len(y) == len(s)):
            raise InputError("inputs, outputs and noise must have equal length")
        object.__setattr__(self, "inputs", _frozen(x))
        object.__setattr__(self, "outputs", _frozen(y))
        object.__setattr__(self, "noise", _frozen(s))

    def __len__(self) -> int:
        return len(self.outputs)


# --- operations -------------------------------------------------------------

def _check_divisor(scale_divisor):
    if not (scale_divisor > 0 and math.isfinite(scale_divisor)):
        raise InputError(f"scale_divisor must be positive, got {scale_divisor}")


def load_depth_png(path, scale_divisor: float = KITTI_DIVISOR) -> DepthMap:
    """Read a single-channel 16-bit PNG; ``depth = raw / scale_divisor``, raw 0 is invalid."""
    _check_divisor(scale_divisor)
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    with Image.open(path) as im:
        if im.format != "PNG" or im.mode not in ("I;16", "I;16B", "I;16L", "I"):
            raise InputError(f"{path}: expected a 16-bit single-channel PNG, got {im.format} mode {im.mode}")
        raw = np.asarray(im)
    if raw.min(initial=0) < 0 or raw.max(initial=0) > 65535:
        raise InputError(f"{path}: raw values outside the 16-bit range")
    raw = raw.astype(np.uint16)
    valid = raw > 0
    return DepthMap(np.where(valid, raw / scale_divisor, 0.0), valid)


def encode_depth(depth_map: DepthMap, scale_divisor: float = KITTI_DIVISOR) -> np.ndarray:
    """Quantize to the raw uint16 image that ``save_depth_png`` writes."""
    _check_divisor(scale_divisor)
    raw = np.rint(depth_map.values * scale_divisor)
    raw[~depth_map.valid] = 0
    over = depth_map.valid & (raw > 65535)
    if over.any():
        v, u = np.argwhere(over)[0]
        raise DepthOverflowError(
            f"depth {depth_map.values[v, u]} m at (u={u}, v={v}) gives raw {int(raw[v, u])} > 65535 "
            f"at divisor {scale_divisor}")
    # a tiny positive depth must not collapse onto the invalid sentinel
    raw[depth_map.valid & (raw < 1)] = 1
    return raw.astype(np.uint16)


def save_depth_png(depth_map: DepthMap, path, scale_divisor: float = KITTI_DIVISOR) -> None:
    raw = encode_depth(depth_map, scale_divisor)
    Image.fromarray(raw).save(path, format="PNG")


def downsample_closest(depth_map: DepthMap, factor: int) -> DepthMap:
    """Downsample by taking the nearest valid depth in each ``factor x factor`` block."""
    if int(factor) != factor or factor < 1:
        raise InputError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return depth_map
    h, w = depth_map.shape
    oh, ow = -(-h // factor), -(-w // factor)
    padded = np.full((oh * factor, ow * factor), np.inf)
    padded[:h, :w] = np.where(depth_map.valid, depth_map.values, np.inf)
    blocks = padded.reshape(oh, factor, ow, factor).min(axis=(1, 3))
    valid = np.isfinite(blocks)
    return DepthMap(np.where(valid, blocks, 0.0), valid)


def sparse_from_map(depth_map: DepthMap) -> SparsePointSet:
    v, u = np.nonzero(depth_map.valid)
    return SparsePointSet(u, v, depth_map.values[v, u], (depth_map.width, depth_map.height))


def build_training_set(dense: DepthMap, sparse: SparsePointSet, hp) -> TrainingSet:
    """Stack valid dense pixels (noise ``sigma_dl``) then sparse points (noise ``sigma_meas``)."""
    if tuple(sparse.frame) != (dense.width, dense.height):
        raise InputError(f"sparse frame {sparse.frame} does not match dense map "
                         f"{dense.width}x{dense.height}")
    v, u = np.nonzero(dense.valid)
    x_dense = np.column_stack([u + 0.5, v + 0.5])
    x_meas = np.column_stack([sparse.u + 0.5, sparse.v + 0.5])
    inputs = np.vstack([x_dense, x_meas])
    outputs = np.concatenate([dense.values[v, u], sparse.depth])
    noise = np.concatenate([np.full(len(u), hp.sigma_dl), np.full(len(sparse), hp.sigma_meas)])
    return TrainingSet(inputs, outputs, noise, n_dense=len(u))


# --- sparse CSV --------------------------------------------------------------

def write_sparse_csv(points: SparsePointSet, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for u, v, d in zip(points.u.tolist(), points.v.tolist(), points.depth.tolist()):
        writer.writerow((u, v, repr(d)))
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


def read_sparse_csv(path, frame) -> SparsePointSet:
    """Read ``u,v,depth_m`` rows; duplicate pixels resolve to the closest depth."""
    if not os.path.exists(path):
        raise InputError(f"no such file: {path}")
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise InputError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        rows = [r for r in reader if r]
    try:
        u = [int(r[0]) for r in rows]
        v = [int(r[1]) for r in rows]
        d = [float(r[2]) for r in rows]
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed row ({exc})") from None
    return resolve_occlusions(u, v, d, frame)


def load_sparse(path, frame=None, scale_divisor: float = KITTI_DIVISOR) -> SparsePointSet:
    """Load sparse points from a ``.csv`` (needs ``frame``) or a 16-bit PNG."""
    if str(path).lower().endswith(".csv"):
        if frame is None:
            raise InputError("a frame (width, height) is required to read sparse CSV")
        return read_sparse_csv(path, frame)
    points = sparse_from_map(load_depth_png(path, scale_divisor))
    if frame is not None and tuple(frame) != points.frame:
        raise InputError(f"{path}: frame {points.frame} does not match expected {tuple(frame)}")
    return points


def save_sparse(points: SparsePointSet, path, scale_divisor: float = KITTI_DIVISOR) -> None:
    if str(path).lower().endswith(".csv"):
        write_sparse_csv(points, path)
    else:
        save_depth_png(points.to_map(), path, scale_divisor)
