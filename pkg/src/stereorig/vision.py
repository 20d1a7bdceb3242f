"""Disparity pipeline: shift compensation, correlation matching, depth maps.

Images are (height, width) float arrays with values in [0, 1]; the left
panel is the reference everywhere.  The matcher pre-shifts the right
panel by the disparity predicted from a rangefinder distance so the
correlation search only has to cover a small residual window, then scores
zero-mean normalized cross-correlation and refines the winning offset
with a three-point parabola.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .geometry import CameraIntrinsics, parallax_px
from .scene import RangeReading, RigPose

__all__ = [
    "DisparityMap",
    "DepthMap",
    "shift_image",
    "compensation_shift",
    "match_correlation",
    "depth_map_from_disparity",
    "back_project",
    "pixel_to_world",
]

_VAR_EPS = 1e-12  # windows with (n * variance) below this cannot be scored


@dataclass(eq=False)
class DisparityMap:
    """Per-pixel disparity (NaN where unmatched) plus the parameters used."""

    disparity: np.ndarray
    shift_px: int
    window_px: int
    search_range_px: int
    min_score: float
    min_texture: float
    subpixel: bool
    shifted_panel: str = "right"

    @property
    def matched_count(self) -> int:
        return int(np.isfinite(self.disparity).sum())


@dataclass(eq=False)
class DepthMap:
    """Per-pixel distance in mm (NaN where unknown) with capture metadata."""

    depth_mm: np.ndarray
    baseline_mm: float
    intrinsics: CameraIntrinsics
    heading_deg: float = 0.0
    heading_index: int = 0


def _require_image(name: str, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"{name} must be a 2-D intensity grid, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains non-finite values")
    return img


def shift_image(img: np.ndarray, shift_px: int) -> np.ndarray:
    """Translate every row horizontally by ``shift_px``; vacated columns are 0.

    Positive shifts move content toward larger column indices.
    """
    img = _require_image("img", img)
    shift_px = int(shift_px)
    if abs(shift_px) >= img.shape[1]:
        raise ValueError(f"|shift| must be < width, got {shift_px} for width {img.shape[1]}")
    out = np.zeros_like(img)
    if shift_px == 0:
        out[:] = img
    elif shift_px > 0:
        out[:, shift_px:] = img[:, :-shift_px]
    else:
        out[:, :shift_px] = img[:, -shift_px:]
    return out


def compensation_shift(
    reading: RangeReading, baseline_mm: float, intrinsics: CameraIntrinsics
) -> int | None:
    """Whole-pixel pre-shift predicted from a rangefinder distance.

    Centers the correlation search on the ranged depth.  A no-return
    reading yields ``None``: the caller falls back to searching from 0.
    """
    if reading.distance_mm is None:
        return None
    d = parallax_px(reading.distance_mm, baseline_mm, intrinsics)
    return int(math.floor(d + 0.5))


def _window_sums(img: np.ndarray, half: int) -> np.ndarray:
    """Sum over the (2*half+1)^2 window around each interior pixel.

    Border pixels (within ``half`` of an edge) are left at 0; callers mask
    them out via the interior slice.
    """
    h, w = img.shape
    k = 2 * half + 1
    c = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=c[1:, 1:])
    out = np.zeros_like(img)
    out[half : h - half, half : w - half] = (
        c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]
    )
    return out


def match_correlation(
    left: np.ndarray,
    right: np.ndarray,
    shift_px: int,
    window_px: int = 7,
    search_range_px: int = 8,
    min_score: float = 0.6,
    min_texture: float = 0.02,
    subpixel: bool = True,
) -> DisparityMap:
    """Dense correspondence search between a stereo pair.

    Parameters
    ----------
    left, right : equal-shaped intensity grids; left is the reference.
    shift_px : parallax compensation applied to the right panel first.
    window_px : odd correlation window edge, >= 3.
    search_range_px : residual offsets examined are
        ``delta in [-search_range_px, +search_range_px]`` (offsets that
        would make the total disparity negative are skipped).
    min_score : smallest acceptable correlation peak.
    min_texture : smallest left-window standard deviation worth matching.
    subpixel : apply three-point parabolic refinement around the peak.

    Returns
    -------
    DisparityMap with ``disparity = shift_px + delta* (+ refinement)`` at
    matched pixels and NaN elsewhere.  Score ties prefer the smaller
    |delta|, then the negative delta, so results are reproducible.
    """
    left = _require_image("left", left)
    right = _require_image("right", right)
    if left.shape != right.shape:
        raise ValueError(f"image shapes differ: {left.shape} vs {right.shape}")
    if window_px % 2 == 0 or window_px < 3:
        raise ValueError(f"window_px must be odd and >= 3, got {window_px}")
    if search_range_px < 0:
        raise ValueError("search_range_px must be >= 0")
    shift_px = int(shift_px)

    h, w = left.shape
    half = window_px // 2
    n = float(window_px * window_px)
    disparity = np.full((h, w), np.nan)
    params = dict(
        shift_px=shift_px,
        window_px=window_px,
        search_range_px=search_range_px,
        min_score=min_score,
        min_texture=min_texture,
        subpixel=subpixel,
    )
    # candidate residuals, closest-to-zero first, negative before positive
    deltas = [
        d
        for d in sorted(range(-search_range_px, search_range_px + 1), key=lambda d: (abs(d), d))
        if shift_px + d >= 0
    ]
    if not deltas or h < window_px or w < window_px:
        return DisparityMap(disparity=disparity, **params)

    shifted = shift_image(right, shift_px)
    sum_l = _window_sums(left, half)
    var_l_n = _window_sums(left * left, half) - sum_l * sum_l / n  # n * variance
    sigma_l = np.sqrt(np.maximum(var_l_n / n, 0.0))

    interior = np.zeros((h, w), dtype=bool)
    interior[half : h - half, half : w - half] = True
    textured = interior & (sigma_l >= min_texture)

    lo = min(deltas)
    n_cand = max(deltas) - lo + 1
    scores = np.full((n_cand, h, w), -np.inf)
    for d in deltas:
        cand = shift_image(shifted, d) if d != 0 else shifted
        sum_r = _window_sums(cand, half)
        var_r_n = _window_sums(cand * cand, half) - sum_r * sum_r / n
        cov = _window_sums(left * cand, half) - sum_l * sum_r / n
        denom_sq = var_l_n * var_r_n
        ok = interior & (var_r_n > _VAR_EPS) & (var_l_n > _VAR_EPS)
        # the candidate window must come entirely from real shifted-panel columns
        x_lo, x_hi = max(half, half + d), min(w - 1 - half, w - 1 - half + d)
        if x_lo > x_hi:
            continue
        cols = np.zeros(w, dtype=bool)
        cols[x_lo : x_hi + 1] = True
        ok &= cols[None, :]
        s = scores[d - lo]
        s[ok] = cov[ok] / np.sqrt(denom_sq[ok])

    best_score = np.full((h, w), -np.inf)
    best_delta = np.zeros((h, w), dtype=np.int64)
    for d in deltas:  # already in tie-break order; strict '>' keeps the first best
        s = scores[d - lo]
        better = s > best_score
        best_score[better] = s[better]
        best_delta[better] = d
    matched = textured & (best_score >= min_score)

    result = shift_px + best_delta.astype(float)
    if subpixel:
        offs = np.zeros((h, w))
        idx = best_delta - lo
        has_nb = matched & (best_delta > lo) & (best_delta < max(deltas))
        ys, xs = np.nonzero(has_nb)
        if ys.size:
            s0 = scores[idx[ys, xs], ys, xs]
            sm = scores[idx[ys, xs] - 1, ys, xs]
            sp = scores[idx[ys, xs] + 1, ys, xs]
            denom = sm - 2.0 * s0 + sp
            valid = np.isfinite(sm) & np.isfinite(sp) & (denom < -_VAR_EPS)
            frac = np.zeros_like(s0)
            frac[valid] = 0.5 * (sm[valid] - sp[valid]) / denom[valid]
            offs[ys, xs] = np.clip(frac, -0.5, 0.5)
        result = result + offs

    disparity[matched] = result[matched]
    return DisparityMap(disparity=disparity, **params)


def depth_map_from_disparity(
    disp: DisparityMap,
    baseline_mm: float,
    intrinsics: CameraIntrinsics,
    heading_deg: float = 0.0,
    heading_index: int = 0,
) -> DepthMap:
    """Triangulate every matched pixel; zero or unmatched disparity has no depth."""
    d = disp.disparity
    depth = np.full(d.shape, np.nan)
    ok = np.isfinite(d) & (d > 0.0)
    depth[ok] = intrinsics.focal_px * baseline_mm / d[ok]
    return DepthMap(
        depth_mm=depth,
        baseline_mm=float(baseline_mm),
        intrinsics=intrinsics,
        heading_deg=float(heading_deg),
        heading_index=int(heading_index),
    )


def pixel_to_world(
    u,
    v,
    depth_mm,
    intrinsics: CameraIntrinsics,
    heading_deg: float,
):
    """Map reference-panel coordinates plus depth to world-frame points.

    Accepts scalars or arrays; ``u``/``v`` may be fractional.  The
    reference camera sits at the rig center, so the inverse pinhole ray is
    rotated by the heading and nothing else.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    z = np.asarray(depth_mm, dtype=float)
    x_cam = (u - intrinsics.cx) * z / intrinsics.focal_px
    y_cam = (v - intrinsics.cy) * z / intrinsics.focal_px
    h = math.radians(heading_deg)
    cos_h, sin_h = math.cos(h), math.sin(h)
    return np.stack(
        [
            x_cam * cos_h + z * sin_h,
            -y_cam,
            -x_cam * sin_h + z * cos_h,
        ],
        axis=-1,
    )


def back_project(
    depth: DepthMap,
    pose: RigPose,
    intensities: np.ndarray | None = None,
) -> PointCloud:
    """Lift every finite-depth pixel into the world frame.

    ``intensities`` (typically the reference panel) supplies per-point
    intensity; the fragment records the capture's heading index.
    """
    mask = np.isfinite(depth.depth_mm)
    vs, us = np.nonzero(mask)
    if us.size == 0:
        return PointCloud.empty()
    xyz = pixel_to_world(
        us.astype(float), vs.astype(float), depth.depth_mm[mask], depth.intrinsics, pose.heading_deg
    )
    if intensities is not None:
        intensity = np.asarray(intensities, dtype=float)[mask]
    else:
        intensity = np.ones(us.size)
    heading = np.full(us.size, depth.heading_index, dtype=np.int32)
    return PointCloud(xyz, intensity, heading)
