"""Iris-style baseline: polar unwrapping, 1-D log-Gabor phase code, shifted Hamming distance."""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .._validation import check_binary_mask, check_positive_int
from ..exceptions import IncomparableError, InvalidInputError
from .pith import to_gray


@dataclass(frozen=True)
class LGConfig:
    """Log-Gabor encoding parameters (defaults: 8 bands x 512 angles, wavelength 64)."""

    bands: int = 8
    angular_positions: int = 512
    wavelength: float = 64.0
    n_filters: int = 1
    scale_multiplier: float = 2.0
    sigma_on_f: float = 0.5

    def config_hash(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:16]


@dataclass
class IrisTemplate:
    code: np.ndarray  # uint8, bands x angular_positions x 2*n_filters
    valid: np.ndarray  # bool, same shape
    config_hash: str = ""

    @property
    def bands(self):
        return self.code.shape[0]

    @property
    def angular_positions(self):
        return self.code.shape[1]


def _ray_boundary(mask, origin, directions, step=0.5):
    """Distance from ``origin`` along each direction to the first background sample."""
    h, w = mask.shape
    r_max = np.hypot(h, w)
    radii = np.arange(0.0, r_max, step)
    xs = origin[0] + np.outer(directions[:, 0], radii)
    ys = origin[1] + np.outer(directions[:, 1], radii)
    xi, yi = np.rint(xs).astype(int), np.rint(ys).astype(int)
    inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    fg = np.zeros_like(inside)
    fg[inside] = mask[yi[inside], xi[inside]] > 0
    first_out = np.argmax(~fg, axis=1)
    first_out[fg.all(axis=1)] = len(radii) - 1
    return np.maximum(radii[first_out], step)


def polar_unwrap(patch, pith, bands=8, angular_positions=512, mask=None, start_angle=90.0,
                 return_valid=False):
    """Sample the CS on a ``bands x angular_positions`` polar grid around the pith.

    Column ``j`` looks along the screen angle ``start_angle + 360 * j / A``
    (counterclockwise). Along each ray the radius is normalized to the mask
    boundary; row ``i`` samples at ``(i + 0.5) / bands`` of that distance.
    """
    bands = check_positive_int(bands, "bands")
    angular_positions = check_positive_int(angular_positions, "angular_positions", minimum=8)
    mask = check_binary_mask(getattr(patch, "mask", None) if mask is None else mask)
    gray = to_gray(patch)
    if gray.shape != mask.shape:
        raise InvalidInputError("patch and mask shapes differ")
    origin = np.asarray(getattr(pith, "position", pith), dtype=np.float64)
    c, r = int(round(origin[0])), int(round(origin[1]))
    if not (0 <= r < mask.shape[0] and 0 <= c < mask.shape[1] and mask[r, c]):
        raise InvalidInputError("pith lies outside the mask")

    ang = np.deg2rad(start_angle + 360.0 * np.arange(angular_positions) / angular_positions)
    dirs = np.stack([np.cos(ang), -np.sin(ang)], axis=1)
    boundary = _ray_boundary(mask, origin, dirs)
    frac = (np.arange(bands) + 0.5) / bands
    radius = np.outer(frac, boundary)
    xs = origin[0] + radius * dirs[None, :, 0]
    ys = origin[1] + radius * dirs[None, :, 1]
    polar = ndimage.map_coordinates(gray, [ys, xs], order=1, mode="constant", cval=0.0)
    if not return_valid:
        return polar
    valid = ndimage.map_coordinates(mask.astype(float), [ys, xs], order=0, mode="constant", cval=0.0) > 0
    return polar, valid


def log_gabor_filters(n, config):
    """Frequency responses (n_filters x n) of one-sided 1-D log-Gabor filters."""
    freqs = np.fft.fftfreq(n)
    out = np.zeros((config.n_filters, n))
    pos = freqs > 0
    for k in range(config.n_filters):
        f0 = 1.0 / (config.wavelength * config.scale_multiplier**k)
        out[k, pos] = np.exp(-(np.log(freqs[pos] / f0) ** 2) / (2 * np.log(config.sigma_on_f) ** 2))
    return out


def log_gabor_encode(polar, config=None, valid=None):
    """Binary phase code: signs of the real and imaginary filter responses.

    Filtering is circular along the angular axis, so a circular column shift
    of ``polar`` shifts the code by the same amount. A zero response maps to 0.
    """
    config = config or LGConfig()
    polar = np.asarray(polar, dtype=np.float64)
    if polar.ndim != 2:
        raise InvalidInputError("polar image must be 2-D")
    n = polar.shape[1]
    spectrum = np.fft.fft(polar, axis=1)
    bits = []
    for h in log_gabor_filters(n, config):
        resp = np.fft.ifft(spectrum * h[None, :], axis=1)
        bits += [resp.real > 0, resp.imag > 0]
    code = np.stack(bits, axis=2).astype(np.uint8)
    if valid is None:
        valid = np.ones(polar.shape, dtype=bool)
    valid = np.repeat(np.asarray(valid, bool)[:, :, None], code.shape[2], axis=2)
    return IrisTemplate(code=code, valid=valid, config_hash=config.config_hash())


def shift_template(t, s):
    """Circularly shift a template ``s`` positions along the angular axis."""
    return IrisTemplate(np.roll(t.code, s, axis=1), np.roll(t.valid, s, axis=1), t.config_hash)


def iris_compare(t1, t2, max_shift=21):
    """Minimum fractional Hamming distance over shifts ``-max_shift..max_shift`` of ``t2``."""
    if t1.code.shape != t2.code.shape:
        raise InvalidInputError("template shapes differ")
    if t1.config_hash and t2.config_hash and t1.config_hash != t2.config_hash:
        raise IncomparableError("templates were built with different configurations")
    best = np.inf
    for s in range(-max_shift, max_shift + 1):
        code2 = np.roll(t2.code, s, axis=1)
        both = t1.valid & np.roll(t2.valid, s, axis=1)
        n = both.sum()
        if n == 0:
            continue
        best = min(best, np.count_nonzero((t1.code != code2) & both) / n)
    if not np.isfinite(best):
        raise IncomparableError("templates share no valid bits")
    return float(best)
