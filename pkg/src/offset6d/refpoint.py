"""Reference-point generation from a depth map and instance mask.

The reference point ``(x0, y0, d0)`` anchors all relative-offset encodings.
Three strategies are provided:

  - CENTER_NEAREST_DEPTH: ROI-center pixel for (u0, v0), minimum valid
    masked depth for d0, then (x0, y0) from the pin-hole equations.
  - CENTER_MEAN_DEPTH:    same (u0, v0), d0 = mean of valid masked depths.
  - MEAN_VISIBLE:         componentwise mean of all lifted visible points.

A depth value of 0 encodes missing data and never enters a statistic.  The
ROI center is used as given even when it falls on background; occlusion can
push the box center off the object and that case is deliberately preserved.

Means are accumulated with exact compensated summation (``math.fsum``) in
row-major pixel order, so results are bit-stable and independent of how the
mask was produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyObjectError
from .geometry import CameraIntrinsics, backproject, backproject_pixels


class RefStrategy(Enum):
    CENTER_NEAREST_DEPTH = "center-nearest"
    CENTER_MEAN_DEPTH = "center-mean"
    MEAN_VISIBLE = "mean-visible"


@dataclass(frozen=True)
class DepthMap:
    """Row-major depth image in meters; 0 marks invalid/missing pixels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("depth values must be finite")
        if np.any(v < 0):
            raise ValueError("depth values must be >= 0")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class InstanceMask:
    """Row-major boolean foreground mask, same shape as its depth map."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=bool)
        if v.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Roi:
    """Box on the image plane: center pixel plus extent in pixels."""

    c_col: int
    c_row: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"roi extent must be positive, got w={self.w}, h={self.h}")

    def intersects(self, width: int, height: int) -> bool:
        half_w = self.w / 2.0
        half_h = self.h / 2.0
        return (
            self.c_col + half_w > 0
            and self.c_col - half_w < width
            and self.c_row + half_h > 0
            and self.c_row - half_h < height
        )


@dataclass(frozen=True)
class ReferencePoint:
    """Camera-frame anchor (x0, y0, d0) plus the strategy that produced it."""

    x0: float
    y0: float
    d0: float
    strategy: RefStrategy

    def __post_init__(self):
        if not (math.isfinite(self.d0) and self.d0 > 0):
            raise ValueError(f"reference depth must be positive, got {self.d0!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, self.y0, self.d0], dtype=np.float64)


def _check_pair(depth: DepthMap, mask: InstanceMask) -> None:
    if depth.values.shape != mask.values.shape:
        raise ValueError(
            f"depth {depth.values.shape} and mask {mask.values.shape} shapes differ"
        )


def _valid_masked_depths(depth: DepthMap, mask: InstanceMask) -> np.ndarray:
    """Valid masked depth values in row-major order."""
    _check_pair(depth, mask)
    valid = mask.values & (depth.values > 0)
    return depth.values[valid]


def fsum_mean(values: np.ndarray) -> float:
    """Mean via exact (compensated) summation; order-independent result."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyObjectError("mean of empty value set")
    return math.fsum(values.tolist()) / values.size


def _check_roi(roi: Roi, depth: DepthMap) -> None:
    if not roi.intersects(depth.width, depth.height):
        raise ValueError(
            f"roi {roi} does not intersect a {depth.width}x{depth.height} image"
        )


def ref_center_nearest(
    depth: DepthMap, mask: InstanceMask, roi: Roi, k: CameraIntrinsics
) -> ReferencePoint:
    """ROI-center pixel, depth of the closest valid masked point."""
    _check_roi(roi, depth)
    depths = _valid_masked_depths(depth, mask)
    if depths.size == 0:
        raise EmptyObjectError("no masked pixel with valid depth")
    d0 = float(depths.min())
    p = backproject(roi.c_col, roi.c_row, d0, k)
    return ReferencePoint(p.x, p.y, d0, RefStrategy.CENTER_NEAREST_DEPTH)


def ref_center_meandepth(
    depth: DepthMap, mask: InstanceMask, roi: Roi, k: CameraIntrinsics
) -> ReferencePoint:
    """ROI-center pixel, arithmetic mean of valid masked depths."""
    _check_roi(roi, depth)
    depths = _valid_masked_depths(depth, mask)
    if depths.size == 0:
        raise EmptyObjectError("no masked pixel with valid depth")
    d0 = fsum_mean(depths)
    p = backproject(roi.c_col, roi.c_row, d0, k)
    return ReferencePoint(p.x, p.y, d0, RefStrategy.CENTER_MEAN_DEPTH)


def ref_mean_visible(depth: DepthMap, mask: InstanceMask, k: CameraIntrinsics) -> ReferencePoint:
    """Componentwise mean of every lifted visible point."""
    _check_pair(depth, mask)
    valid = mask.values & (depth.values > 0)
    rows, cols = np.nonzero(valid)
    if rows.size == 0:
        raise EmptyObjectError("no masked pixel with valid depth")
    pts = backproject_pixels(cols, rows, depth.values[rows, cols], k)
    x0 = fsum_mean(pts[:, 0])
    y0 = fsum_mean(pts[:, 1])
    d0 = fsum_mean(pts[:, 2])
    return ReferencePoint(x0, y0, d0, RefStrategy.MEAN_VISIBLE)


def make_reference(
    depth: DepthMap,
    mask: InstanceMask,
    k: CameraIntrinsics,
    strategy: RefStrategy,
    roi: Roi | None = None,
) -> ReferencePoint:
    """Dispatch on strategy; ROI defaults to the mask bounding-box center."""
    if strategy is RefStrategy.MEAN_VISIBLE:
        return ref_mean_visible(depth, mask, k)
    if roi is None:
        roi = roi_from_mask(mask)
    if strategy is RefStrategy.CENTER_NEAREST_DEPTH:
        return ref_center_nearest(depth, mask, roi, k)
    if strategy is RefStrategy.CENTER_MEAN_DEPTH:
        return ref_center_meandepth(depth, mask, roi, k)
    raise ValueError(f"unknown strategy {strategy!r}")


def roi_from_mask(mask: InstanceMask) -> Roi:
    """Tight bounding box of the mask, center at the rounded-down midpoint."""
    rows, cols = np.nonzero(mask.values)
    if rows.size == 0:
        raise EmptyObjectError("mask has no foreground pixel")
    r0, r1 = int(rows.min()), int(rows.max())
    c0, c1 = int(cols.min()), int(cols.max())
    return Roi(c_col=(c0 + c1) // 2, c_row=(r0 + r1) // 2, w=c1 - c0 + 1, h=r1 - r0 + 1)
