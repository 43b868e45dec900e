"""Pith estimation by orientation-normal voting, and CM pre-alignment."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .._geometry import screen_angle
from .._validation import check_binary_mask
from ..exceptions import InvalidInputError


@dataclass
class PithEstimate:
    position: np.ndarray  # (x, y) in patch pixels
    confidence: float = 1.0


def to_gray(pixels):
    arr = np.asarray(getattr(pixels, "pixels", pixels), dtype=np.float64)
    if arr.ndim == 3:
        arr = arr @ np.array([0.299, 0.587, 0.114])
    return arr


def mask_centroid(mask):
    rows, cols = np.nonzero(mask)
    return np.array([cols.mean(), rows.mean()])


def _snap_inside(point, mask):
    """Nearest foreground pixel center if ``point`` falls outside the mask."""
    c, r = int(round(point[0])), int(round(point[1]))
    h, w = mask.shape
    if 0 <= r < h and 0 <= c < w and mask[r, c]:
        return np.asarray(point, float)
    rows, cols = np.nonzero(mask)
    k = np.argmin((cols - point[0]) ** 2 + (rows - point[1]) ** 2)
    return np.array([float(cols[k]), float(rows[k])])


def estimate_pith(patch, mask=None, sigma_grad=1.0, sigma_tensor=3.0, stride=2, vote_sigma=2.0,
                  min_energy=1e-3):
    """Locate the pith as the point most ring normals pass through.

    Ring boundaries are locally tangent to circles around the pith, so the
    dominant gradient direction at each textured pixel points along a line
    through it. Every strided pixel inside the mask draws that line into an
    accumulator (weighted by orientation coherence); the smoothed maximum
    inside the mask is the estimate. ``confidence`` is the peak height
    relative to what all weighted lines passing through one point would give.
    """
    mask = check_binary_mask(getattr(patch, "mask", None) if mask is None else mask)
    if not mask.any():
        raise InvalidInputError("mask is empty")
    gray = to_gray(patch)
    if gray.shape != mask.shape:
        raise InvalidInputError("patch and mask shapes differ")

    gx = ndimage.gaussian_filter(gray, sigma_grad, order=(0, 1))
    gy = ndimage.gaussian_filter(gray, sigma_grad, order=(1, 0))
    jxx = ndimage.gaussian_filter(gx * gx, sigma_tensor)
    jyy = ndimage.gaussian_filter(gy * gy, sigma_tensor)
    jxy = ndimage.gaussian_filter(gx * gy, sigma_tensor)
    trace = jxx + jyy
    diff = np.sqrt((jxx - jyy) ** 2 + 4 * jxy**2)
    coherence = np.where(trace > 1e-12, diff / np.maximum(trace, 1e-12), 0.0)
    theta = 0.5 * np.arctan2(2 * jxy, jxx - jyy)  # dominant gradient direction

    # stay away from the CS outline, its gradient is not a ring normal
    inner = ndimage.binary_erosion(mask, iterations=max(2, int(3 * sigma_tensor)))
    sel = np.zeros_like(mask, dtype=bool)
    sel[::stride, ::stride] = True
    sel &= inner
    scale = np.percentile(trace[mask > 0], 99) if mask.sum() else 0.0
    if scale <= min_energy:
        return PithEstimate(mask_centroid(mask), 0.0)
    weight = coherence * np.minimum(trace / scale, 1.0)
    sel &= weight > 0.05
    rows, cols = np.nonzero(sel)
    if rows.size == 0:
        return PithEstimate(mask_centroid(mask), 0.0)
    w = weight[rows, cols]
    dx, dy = np.cos(theta[rows, cols]), np.sin(theta[rows, cols])

    h, wd = mask.shape
    reach = int(np.ceil(np.hypot(h, wd)))
    steps = np.arange(-reach, reach + 1, 1.0)
    acc = np.zeros(h * wd)
    for start in range(0, rows.size, 512):
        sl = slice(start, start + 512)
        xs = np.rint(cols[sl, None] + dx[sl, None] * steps).astype(int)
        ys = np.rint(rows[sl, None] + dy[sl, None] * steps).astype(int)
        ok = (xs >= 0) & (xs < wd) & (ys >= 0) & (ys < h)
        ww = np.broadcast_to(w[sl, None], xs.shape)
        acc += np.bincount(ys[ok] * wd + xs[ok], weights=ww[ok], minlength=h * wd)
    acc = ndimage.gaussian_filter(acc.reshape(h, wd), vote_sigma)
    acc[mask == 0] = -np.inf
    r, c = np.unravel_index(np.argmax(acc), acc.shape)
    peak = acc[r, c]
    confidence = float(np.clip(peak * np.sqrt(2 * np.pi) * vote_sigma / w.sum(), 0.0, 1.0))

    # sub-pixel refinement by a local weighted centroid
    r0, r1 = max(r - 2, 0), min(r + 3, h)
    c0, c1 = max(c - 2, 0), min(c + 3, wd)
    win = acc[r0:r1, c0:c1]
    win = np.where(np.isfinite(win), win, 0.0)
    win = np.maximum(win - win.min(), 0)
    if win.sum() > 0:
        yy, xx = np.mgrid[r0:r1, c0:c1]
        pos = np.array([(xx * win).sum() / win.sum(), (yy * win).sum() / win.sum()])
    else:
        pos = np.array([float(c), float(r)])
    return PithEstimate(_snap_inside(pos, mask), confidence)


def center_of_mass(mask):
    return mask_centroid(check_binary_mask(mask))


def prealign_cm(mask, pith):
    """Counterclockwise rotation (degrees) taking the CM->pith vector to "up".

    Returns 0 when the vector is shorter than one pixel. Angles are in
    (-180, 180].
    """
    mask = check_binary_mask(mask)
    if not mask.any():
        raise InvalidInputError("mask is empty")
    pos = np.asarray(getattr(pith, "position", pith), dtype=np.float64)
    vec = pos - center_of_mass(mask)
    if np.hypot(*vec) < 1.0:
        return 0.0
    angle = 90.0 - float(screen_angle(vec))
    angle = (angle + 180.0) % 360.0 - 180.0
    return 180.0 if angle == -180.0 else angle
