"""Pose-accuracy metrics and the squared-loss decomposition.

Distance metrics (meters, unsquared):

  - ADD:   mean distance between matched model points under the two poses.
  - ADD-S: mean closest-point distance, for objects whose symmetry makes the
    matched pairing ambiguous.  Exhaustive O(m^2) nearest neighbor.
  - ADD(S): picks ADD-S when the model is flagged symmetric, ADD otherwise.

Threshold accuracy counts errors strictly below ``threshold_fraction *
diameter``.  AUC is the exact area under the accuracy-vs-threshold curve up
to ``auc_max_threshold``, i.e. the mean of ``max(0, 1 - e / M)``.

The training-style loss (squared distances) decomposes exactly into

    total = (1/m) sum ||dR p_j||^2  +  (2/m) (dR sum p_j) . dt  +  ||dt||^2

with ``dR``/``dt`` the pose differences; for a centroid-centered model the
cross term vanishes and the split is rotation part + translation part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyInputError
from .geometry import RigidPose, transform_points

DIAMETER_TOLERANCE = 1e-9

# Pairwise-distance chunk size; keeps the O(m^2) buffers at ~tens of MB.
_CHUNK = 1024


def max_pairwise_distance(points: np.ndarray) -> float:
    """Exhaustive maximum pairwise distance, chunked to bound memory."""
    pts = np.asarray(points, dtype=np.float64)
    best = 0.0
    for start in range(0, pts.shape[0], _CHUNK):
        block = cdist(pts[start : start + _CHUNK], pts)
        best = max(best, float(block.max()))
    return best


@dataclass(frozen=True)
class ObjectModel:
    """Object-frame point set with its diameter and symmetry flag.

    ``diameter`` must equal the true maximum pairwise distance of ``points``
    (within 1e-9); use :meth:`from_points` to compute it.
    """

    points: np.ndarray
    diameter: float
    symmetric: bool

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError(f"model needs >= 2 points of dim 3, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("model points must be finite")
        true_diameter = max_pairwise_distance(pts)
        if true_diameter <= 0:
            raise ValueError("model diameter must be positive (all points coincide?)")
        if abs(self.diameter - true_diameter) > DIAMETER_TOLERANCE:
            raise ValueError(
                f"declared diameter {self.diameter} != max pairwise distance {true_diameter}"
            )
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @staticmethod
    def from_points(points, symmetric: bool) -> "ObjectModel":
        pts = np.asarray(points, dtype=np.float64)
        return ObjectModel(pts, max_pairwise_distance(pts), symmetric)

    @property
    def point_count(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class MetricConfig:
    """Evaluation knobs: AUC threshold cap (meters) and the diameter fraction
    used for threshold accuracy."""

    auc_max_threshold: float = 0.1
    threshold_fraction: float = 0.1

    def __post_init__(self):
        if self.auc_max_threshold <= 0 or self.threshold_fraction <= 0:
            raise ValueError("metric config values must be positive")


@dataclass(frozen=True)
class LossDecomposition:
    """Split of the squared loss; ``total`` is the exact sum of the parts."""

    total: float
    rotation_part: float
    translation_part: float
    cross_term: float


def add(pred: RigidPose, gt: RigidPose, model: ObjectModel) -> float:
    """Mean matched-point distance between the two transformed models."""
    a = transform_points(pred, model.points)
    b = transform_points(gt, model.points)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def add_s(pred: RigidPose, gt: RigidPose, model: ObjectModel) -> float:
    """Mean closest-point distance (exhaustive nearest neighbor).

    Plain broadcast arithmetic (sqrt of coordinate-wise squared sums) so the
    result is bit-identical to a direct per-pair loop; chunked to bound the
    O(m^2) buffer.
    """
    a = transform_points(pred, model.points)
    b = transform_points(gt, model.points)
    m = a.shape[0]
    mins = np.empty(m)
    chunk = 256
    for start in range(0, m, chunk):
        diff = a[start : start + chunk, None, :] - b[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        mins[start : start + chunk] = dist.min(axis=1)
    return float(np.mean(mins))


def add_selective(pred: RigidPose, gt: RigidPose, model: ObjectModel) -> float:
    """ADD-S for symmetric models, ADD otherwise."""
    if model.symmetric:
        return add_s(pred, gt, model)
    return add(pred, gt, model)


def accuracy_at_threshold(errors, model: ObjectModel, cfg: MetricConfig = MetricConfig()) -> float:
    """Fraction of errors strictly below ``threshold_fraction * diameter``."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise EmptyInputError("no errors to evaluate")
    threshold = cfg.threshold_fraction * model.diameter
    return float(np.count_nonzero(e < threshold)) / e.size


def auc(errors, cfg: MetricConfig = MetricConfig()) -> float:
    """Exact area under the accuracy-threshold curve, normalized to [0, 1].

    Equals the mean over errors of ``max(0, 1 - e / M)`` with M the cap:
    each error contributes the area of the interval where it counts as
    accurate.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise EmptyInputError("no errors to evaluate")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite and >= 0")
    return float(np.mean(np.clip(1.0 - e / cfg.auc_max_threshold, 0.0, None)))


def add_loss(pred: RigidPose, gt: RigidPose, model: ObjectModel) -> float:
    """Mean *squared* matched-point distance (the training loss, meters^2)."""
    a = transform_points(pred, model.points)
    b = transform_points(gt, model.points)
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def decompose_add_loss(pred: RigidPose, gt: RigidPose, model: ObjectModel) -> LossDecomposition:
    """Exact rotation / cross / translation split of the squared loss."""
    d_rot = pred.rotation - gt.rotation
    d_t = pred.translation - gt.translation
    m = model.point_count
    rotated = model.points @ d_rot.T
    rotation_part = float(np.sum(rotated**2) / m)
    point_sum = np.array([math.fsum(model.points[:, i].tolist()) for i in range(3)])
    cross_term = float(2.0 / m * np.dot(d_rot @ point_sum, d_t))
    translation_part = float(np.dot(d_t, d_t))
    return LossDecomposition(
        total=rotation_part + cross_term + translation_part,
        rotation_part=rotation_part,
        translation_part=translation_part,
        cross_term=cross_term,
    )


def weighted_add_loss(
    pred: RigidPose,
    gt: RigidPose,
    model: ObjectModel,
    w_rot: float,
    w_trans: float,
) -> float:
    """Reweighted split: ``w_rot * rotation + cross + w_trans * translation``."""
    if w_rot < 0 or w_trans < 0:
        raise ValueError("weights must be >= 0")
    parts = decompose_add_loss(pred, gt, model)
    return w_rot * parts.rotation_part + parts.cross_term + w_trans * parts.translation_part
