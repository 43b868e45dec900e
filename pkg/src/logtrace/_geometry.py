"""Small planar geometry helpers.

Conventions used everywhere in the package: points are ``(x, y)`` with ``x``
the column and ``y`` the row (pointing down); rotation angles are in degrees
and positive angles turn counterclockwise as the image is displayed.
"""

import numpy as np
from scipy import ndimage


def image_center(shape):
    """Pixel-center coordinates ``(x, y)`` of the middle of an ``H x W`` grid."""
    return np.array([(shape[1] - 1) / 2.0, (shape[0] - 1) / 2.0])


def rotate_vectors(vec, angle_deg):
    """Rotate ``(..., 2)`` displacement vectors counterclockwise on screen."""
    vec = np.asarray(vec, dtype=np.float64)
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    x, y = vec[..., 0], vec[..., 1]
    return np.stack([c * x + s * y, -s * x + c * y], axis=-1)


def screen_angle(vec):
    """Counterclockwise screen angle of ``(dx, dy)`` in degrees, 0 = +x."""
    vec = np.asarray(vec, dtype=np.float64)
    return np.rad2deg(np.arctan2(-vec[..., 1], vec[..., 0]))


def rotate_image(img, angle_deg, center=None, order=1, cval=0.0):
    """Rotate a 2-D or H x W x C array about ``center`` (default: grid middle).

    Output keeps the input shape and dtype; uncovered area is ``cval``.
    """
    img = np.asarray(img)
    h, w = img.shape[:2]
    c = image_center((h, w)) if center is None else np.asarray(center, float)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # inverse map: output pixel -> source pixel
    src = rotate_vectors(np.stack([xx - c[0], yy - c[1]], axis=-1), -angle_deg) + c
    coords = [src[..., 1], src[..., 0]]
    work = img.astype(np.float64)
    if img.ndim == 2:
        out = ndimage.map_coordinates(work, coords, order=order, mode="constant", cval=cval)
    else:
        out = np.stack(
            [
                ndimage.map_coordinates(work[..., k], coords, order=order, mode="constant", cval=cval)
                for k in range(img.shape[2])
            ],
            axis=-1,
        )
    if np.issubdtype(img.dtype, np.integer):
        info = np.iinfo(img.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(img.dtype)
