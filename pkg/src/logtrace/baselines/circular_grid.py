"""Circular-grid fingerprint-style baseline.

The CS is divided into concentric bands around the pith, each band into equal
angular cells. A cell is described by a joint histogram of local ring
orientation (relative to the radial direction) and ring frequency, so a
rotation of the log end only permutes the cells of every band circularly.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .._validation import check_positive_int
from ..exceptions import IncomparableError, InvalidInputError
from .iris import polar_unwrap


@dataclass(frozen=True)
class GridConfig:
    bands: int = 4
    cells_per_band: int = 32
    samples_per_cell: int = 8
    radial_samples: int = 96
    orientation_bins: int = 8
    frequency_edges: tuple = (10.0, 18.0, 28.0)  # cycles per CS radius
    min_valid_fraction: float = 0.5

    def config_hash(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha1(blob).hexdigest()[:16]


@dataclass
class CircularGridTemplate:
    descriptors: np.ndarray  # bands x cells x (orientation_bins * frequency bins)
    valid: np.ndarray  # bands x cells
    band_radii: list = field(default_factory=list)
    config_hash: str = ""

    @property
    def cells_per_band(self):
        return self.descriptors.shape[1]


def _zero_crossing_rate(segment):
    """Zero crossings per sample of each column of a mean-removed segment."""
    seg = segment - segment.mean(axis=0, keepdims=True)
    signs = np.signbit(seg)
    return np.count_nonzero(signs[1:] != signs[:-1], axis=0) / max(seg.shape[0], 1)


def circular_grid_features(patch, mask=None, pith=None, bands=None, cells_per_band=None, config=None,
                           start_angle=90.0):
    """Band x cell orientation/frequency histograms around the pith."""
    config = config or GridConfig()
    if bands is not None or cells_per_band is not None:
        config = GridConfig(**{**asdict(config), "bands": bands or config.bands,
                               "cells_per_band": cells_per_band or config.cells_per_band})
    nb = check_positive_int(config.bands, "bands")
    nc = check_positive_int(config.cells_per_band, "cells_per_band", minimum=2)
    if config.radial_samples % nb:
        raise InvalidInputError("radial_samples must be a multiple of bands")
    n_ang = nc * config.samples_per_cell
    polar, valid = polar_unwrap(patch, pith, config.radial_samples, n_ang, mask=mask,
                                start_angle=start_angle, return_valid=True)

    modes = ("nearest", "wrap")
    g_r = ndimage.gaussian_filter(polar, 1.0, order=(1, 0), mode=modes)
    g_a = ndimage.gaussian_filter(polar, 1.0, order=(0, 1), mode=modes)
    jrr = ndimage.gaussian_filter(g_r * g_r, 1.5, mode=modes)
    jaa = ndimage.gaussian_filter(g_a * g_a, 1.5, mode=modes)
    jra = ndimage.gaussian_filter(g_r * g_a, 1.5, mode=modes)
    energy = jrr + jaa
    # dominant gradient orientation relative to the radial axis, in [0, pi)
    orient = np.mod(0.5 * np.arctan2(2 * jra, jrr - jaa), np.pi)
    n_ob = config.orientation_bins
    o_bin = np.minimum((orient / np.pi * n_ob).astype(int), n_ob - 1)

    rows_per_band = config.radial_samples // nb
    edges = np.asarray(config.frequency_edges, float)
    n_fb = len(edges) + 1
    desc = np.zeros((nb, nc, n_ob * n_fb))
    cell_valid = np.zeros((nb, nc), dtype=bool)
    for b in range(nb):
        rows = slice(b * rows_per_band, (b + 1) * rows_per_band)
        # crossings per sample -> cycles per CS radius
        freq = _zero_crossing_rate(polar[rows]) / 2.0 * config.radial_samples
        f_bin = np.searchsorted(edges, freq, side="right")
        joint = o_bin[rows] * n_fb + f_bin[None, :]
        weight = energy[rows] * valid[rows]
        for c in range(nc):
            cols = slice(c * config.samples_per_cell, (c + 1) * config.samples_per_cell)
            w = weight[:, cols].ravel()
            frac_valid = valid[rows, cols].mean()
            total = w.sum()
            if frac_valid < config.min_valid_fraction or total <= 0:
                continue
            hist = np.bincount(joint[:, cols].ravel(), weights=w, minlength=n_ob * n_fb)
            desc[b, c] = hist / total
            cell_valid[b, c] = True
    radii = [(b + 1) / nb for b in range(nb)]
    return CircularGridTemplate(desc, cell_valid, radii, config.config_hash())


def shift_grid(t, k):
    """Rotate a template by ``k`` whole cells."""
    return CircularGridTemplate(np.roll(t.descriptors, k, axis=1), np.roll(t.valid, k, axis=1),
                                list(t.band_radii), t.config_hash)


def circular_grid_compare(t1, t2, max_shift=None):
    """Minimum over shared circular cell shifts of the mean L1 cell distance.

    ``max_shift=None`` searches every shift.
    """
    if t1.descriptors.shape != t2.descriptors.shape:
        raise InvalidInputError("grid geometries differ")
    if t1.config_hash and t2.config_hash and t1.config_hash != t2.config_hash:
        raise IncomparableError("templates were built with different configurations")
    nc = t1.cells_per_band
    shifts = range(nc) if max_shift is None or 2 * max_shift + 1 >= nc else range(-max_shift, max_shift + 1)
    best = np.inf
    for s in shifts:
        d2 = np.roll(t2.descriptors, s, axis=1)
        both = t1.valid & np.roll(t2.valid, s, axis=1)
        if not both.any():
            continue
        dist = np.abs(t1.descriptors - d2).sum(axis=2)
        best = min(best, float(dist[both].mean()))
    if not np.isfinite(best):
        raise IncomparableError("templates share no mutually valid cells")
    return best
