"""Part/powder segmentation, powder contour extraction and progress estimation.

Heights are world ``z`` (the build box is gravity aligned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import RigidPose, as_cloud, transform_cloud

WIDEN_FACTOR = 1.5
WIDEN_ATTEMPTS = 4
MIN_EXTENT = 1e-3  # m


class ProgressError(ValueError):
    pass


class NoContour(ProgressError):
    pass


class DegenerateExtent(ProgressError):
    pass


@dataclass(frozen=True)
class Segmentation:
    part_points: np.ndarray
    powder_points: np.ndarray
    part_mask: np.ndarray  # per input scan point


@dataclass(frozen=True)
class PowderContour:
    contour_points: np.ndarray
    mean_height: float
    d_max_used: float


@dataclass(frozen=True)
class HeightExtent:
    h_max: float
    h_min: float

    @property
    def span(self) -> float:
        return self.h_max - self.h_min


def _bbox_mask(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.all((points >= lo) & (points <= hi), axis=1)


def segment_scan(scan, transformed_cad, xi: float, cad_tree: cKDTree | None = None) -> Segmentation:
    """Label scan points within ``xi`` (cm) of the posed CAD cloud as part.

    ``cad_tree`` may be a k-d tree already built over ``transformed_cad``.
    """
    scan = as_cloud(scan)
    cad = as_cloud(transformed_cad)
    if len(scan) == 0 or len(cad) == 0:
        raise ProgressError("segment_scan needs a non-empty scan and CAD cloud")
    radius = xi / 100.0
    mask = np.zeros(len(scan), dtype=bool)
    # points outside the CAD bounding box grown by xi cannot be within xi of it
    near = _bbox_mask(scan, cad.min(axis=0) - radius, cad.max(axis=0) + radius)
    if near.any():
        tree = cad_tree if cad_tree is not None else cKDTree(cad, balanced_tree=False)
        dist, _ = tree.query(scan[near], k=1, distance_upper_bound=radius)
        mask[near] = dist < radius
    return Segmentation(scan[mask], scan[~mask], mask)


def _height_stat(z: np.ndarray, stat: str) -> float:
    return float(np.median(z) if stat == "median" else np.mean(z))


def extract_contour(seg: Segmentation, d_min: float, d_max: float, stat: str = "mean",
                    widen: bool = True) -> PowderContour:
    """Powder points whose horizontal distance to the part lies in ``[d_min, d_max]``.

    When the band is empty ``d_max`` is widened by 1.5x, at most four times
    (never, if ``widen`` is False).
    """
    part = seg.part_points
    powder = seg.powder_points
    if len(part) == 0 or len(powder) == 0:
        raise ProgressError("contour extraction needs both part and powder points")
    if not 0 <= d_min < d_max:
        raise ProgressError("need 0 <= d_min < d_max")

    part_xy = part[:, :2]
    lo = part_xy.min(axis=0)
    hi = part_xy.max(axis=0)
    tree = cKDTree(part_xy, balanced_tree=False)
    powder_xy = powder[:, :2]

    limit = d_max
    for _ in range(WIDEN_ATTEMPTS + 1 if widen else 1):
        # only powder inside the part's xy box grown by ``limit`` can qualify
        cand = np.flatnonzero(np.all((powder_xy >= lo - limit) & (powder_xy <= hi + limit), axis=1))
        if len(cand):
            dist, _ = tree.query(powder_xy[cand], k=1, distance_upper_bound=limit * (1 + 1e-9))
            sel = cand[(dist >= d_min) & (dist <= limit)]
            if len(sel):
                pts = powder[sel]
                return PowderContour(pts, _height_stat(pts[:, 2], stat), limit)
        limit *= WIDEN_FACTOR
    raise NoContour(f"no powder point within [{d_min}, {limit / WIDEN_FACTOR}] m of the part")


def estimate_progress(h_pow: float | PowderContour, extent: HeightExtent) -> float:
    """Height-ratio progress, clamped to [0, 1]."""
    if isinstance(h_pow, PowderContour):
        h_pow = h_pow.mean_height
    if not extent.span > 0:
        raise DegenerateExtent("h_max must exceed h_min")
    h = min(max(float(h_pow), extent.h_min), extent.h_max)
    eta = (extent.h_max - h) / extent.span
    return min(max(eta, 0.0), 1.0)


def cad_height_extent(cad, pose: RigidPose | None = None) -> HeightExtent:
    pts = as_cloud(cad)
    if len(pts) == 0:
        raise ProgressError("CAD cloud is empty")
    z = transform_cloud(pts, pose)[:, 2] if pose is not None else pts[:, 2]
    ext = HeightExtent(float(z.max()), float(z.min()))
    if ext.span < MIN_EXTENT:
        raise DegenerateExtent(f"vertical extent {ext.span:.2e} m is below 1 mm")
    return ext


@dataclass(frozen=True)
class ProgressEstimate:
    eta: float
    h_pow: float
    extent: HeightExtent
    segmentation: Segmentation


def progress_from_scan(scan, transformed_cad, xi: float, d_min: float = 0.01, d_max: float = 0.03,
                       stat: str = "mean", region=None) -> ProgressEstimate:
    """Segment, extract the contour and evaluate progress in one call.

    Works on the scan cropped in xy to the CAD footprint grown by ``xi + d_max``
    and falls back to the full scan only when the annulus must be widened; the
    estimate is the same as running on the full scan. ``region`` may be a
    subset of ``scan`` that contains every point of that crop box (for example
    a coarser crop the caller already made); the returned segmentation then
    covers the crop only.
    """
    scan = as_cloud(scan)
    cad = as_cloud(transformed_cad)
    if len(cad) == 0:
        raise ProgressError("CAD cloud is empty")
    z = cad[:, 2]
    extent = HeightExtent(float(z.max()), float(z.min()))
    if extent.span < MIN_EXTENT:
        raise DegenerateExtent(f"vertical extent {extent.span:.2e} m is below 1 mm")

    margin = xi / 100.0 + d_max
    pool = scan if region is None else as_cloud(region)
    xy = pool[:, :2]
    keep = np.all((xy >= cad[:, :2].min(axis=0) - margin) & (xy <= cad[:, :2].max(axis=0) + margin), axis=1)
    local = segment_scan(pool[keep], cad, xi) if keep.any() else None
    contour = None
    if local is not None:
        if region is None:
            mask = np.zeros(len(scan), dtype=bool)
            mask[keep] = local.part_mask
            seg = Segmentation(local.part_points, scan[~mask], mask)
        else:
            seg = local
        try:
            contour = extract_contour(local, d_min, d_max, stat=stat, widen=False)
        except ProgressError:
            contour = None
    if contour is None:
        seg = segment_scan(scan, cad, xi)
        contour = extract_contour(seg, d_min, d_max, stat=stat)
    return ProgressEstimate(estimate_progress(contour.mean_height, extent), contour.mean_height, extent, seg)
