"""Sparsity and field-of-view bias protocols for sparse depth measurements.

All randomness comes from numpy's PCG64 bit generator seeded with the
caller's seed, so selections reproduce across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .depthmap import DepthMap, SparsePointSet, sparse_from_map
from .errors import InputError

RATIOS = tuple(1.0 / 2 ** k for k in range(7))  # 1, 1/2, ..., 1/64
MODES = ("uniform", "horizontal", "vertical", "random_n")
SIDES = ("low", "high")


def parse_ratio(text) -> float:
    """Parse ``"1/8"``, ``"0.125"`` or ``"1"`` into an allowed sampling ratio."""
    try:
        ratio = float(Fraction(str(text).strip()))
    except (ValueError, ZeroDivisionError):
        raise InputError(f"cannot parse sampling ratio {text!r}") from None
    _check_ratio(ratio)
    return ratio


def format_ratio(ratio: float) -> str:
    return str(Fraction(ratio).limit_denominator(1 << 20))


def _check_ratio(ratio):
    if ratio not in RATIOS:
        raise InputError(f"ratio must be one of {[format_ratio(r) for r in RATIOS]}, got {ratio}")


def _rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed) & (2 ** 64 - 1)))


@dataclass(frozen=True)
class SamplingSpec:
    mode: str
    ratio: Optional[float] = None
    n_points: Optional[int] = None
    seed: int = 0
    side: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"sampling mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "random_n":
            if self.n_points is None or self.ratio is not None:
                raise InputError("random_n sampling takes n_points and no ratio")
            if int(self.n_points) != self.n_points or self.n_points < 0:
                raise InputError(f"n_points must be a nonnegative integer, got {self.n_points}")
        else:
            if self.ratio is None or self.n_points is not None:
                raise InputError(f"{self.mode} sampling takes a ratio and no n_points")
            _check_ratio(self.ratio)
        if self.side is not None and self.side not in SIDES:
            raise InputError(f"side must be one of {SIDES}, got {self.side!r}")


def default_side(axis: str) -> str:
    """Bottom rows for horizontal bias, left columns for vertical bias."""
    return "high" if axis == "horizontal" else "low"


def sample_uniform(points: SparsePointSet, ratio: float, seed: int) -> SparsePointSet:
    """Keep ``round(ratio * N)`` points drawn uniformly without replacement."""
    _check_ratio(ratio)
    if ratio == 1.0:
        return points
    keep = int(math.floor(ratio * len(points) + 0.5))
    index = _rng(seed).permutation(len(points))[:keep]
    return points.subset(index)


def sample_biased(points: SparsePointSet, axis: str, ratio: float,
                  side: Optional[str] = None) -> SparsePointSet:
    """Keep a contiguous band covering ``ratio`` of the occupied coordinate range.

    ``horizontal`` bands over rows (v), withholding whole scan lines;
    ``vertical`` bands over columns (u). ``side="high"`` keeps the band at the
    large-coordinate end (bottom or right of the image); ``None`` picks
    ``default_side(axis)``.
    """
    _check_ratio(ratio)
    if axis not in ("horizontal", "vertical"):
        raise InputError(f"axis must be horizontal or vertical, got {axis!r}")
    side = side or default_side(axis)
    if side not in SIDES:
        raise InputError(f"side must be one of {SIDES}, got {side!r}")
    if ratio == 1.0 or len(points) == 0:
        return points
    keep = biased_predicate(points, axis, ratio, side)
    return points.subset(np.flatnonzero(keep))


def bias_threshold(points: SparsePointSet, axis: str, ratio: float, side: str) -> float:
    """Coordinate bounding the kept band: keep ``>=`` it on the high side, ``<=`` on the low side."""
    coord = points.v if axis == "horizontal" else points.u
    lo, hi = int(coord.min()), int(coord.max())
    return hi - ratio * (hi - lo) if side == "high" else lo + ratio * (hi - lo)


def biased_predicate(points: SparsePointSet, axis: str, ratio: float, side: str) -> np.ndarray:
    """Boolean mask of the points ``sample_biased`` keeps."""
    coord = points.v if axis == "horizontal" else points.u
    cut = bias_threshold(points, axis, ratio, side)
    return coord >= cut if side == "high" else coord <= cut


def sample_random_n(depth_map: DepthMap, n: int, seed: int) -> SparsePointSet:
    """``n`` distinct valid pixels of ``depth_map`` chosen uniformly at random."""
    points = sparse_from_map(depth_map)
    if int(n) != n or n < 0:
        raise InputError(f"n must be a nonnegative integer, got {n}")
    if n > len(points):
        raise InputError(f"requested {n} points but the map has only {len(points)} valid pixels")
    index = _rng(seed).permutation(len(points))[:int(n)]
    return points.subset(index)


def apply_sampling(source, spec: SamplingSpec) -> SparsePointSet:
    """Dispatch on ``spec.mode``; ``random_n`` needs a ``DepthMap`` source."""
    if spec.mode == "random_n":
        if not isinstance(source, DepthMap):
            source = source.to_map()
        return sample_random_n(source, spec.n_points, spec.seed)
    if isinstance(source, DepthMap):
        source = sparse_from_map(source)
    if spec.mode == "uniform":
        return sample_uniform(source, spec.ratio, spec.seed)
    return sample_biased(source, spec.mode, spec.ratio, spec.side)
