"""Baselines wrapped as stateless sklearn transformers."""

from sklearn.base import BaseEstimator, TransformerMixin

from .circular_grid import GridConfig, circular_grid_compare, circular_grid_features
from .iris import LGConfig, iris_compare, log_gabor_encode, polar_unwrap
from .pith import estimate_pith, prealign_cm


def _reference_angle(patch, pith, prealign):
    # column 0 of the polar grid follows the CM->pith direction
    return 90.0 - prealign_cm(patch.mask, pith) if prealign else 90.0


class _TemplateBaseline(TransformerMixin, BaseEstimator):
    def fit(self, X=None, y=None):
        """Nothing to learn; present so the baselines drop into cross-validation."""
        return self

    def transform(self, X, piths=None):
        X = list(X)
        piths = [None] * len(X) if piths is None else list(piths)
        return [self._template(p, pith if pith is not None else estimate_pith(p)) for p, pith in zip(X, piths)]


class IrisBaseline(_TemplateBaseline):
    """Log-Gabor iris code on the pith-centered polar image (CM pre-aligned)."""

    def __init__(self, bands=8, angular_positions=512, wavelength=64.0, n_filters=1, sigma_on_f=0.5,
                 max_shift=21, prealign=True):
        self.bands = bands
        self.angular_positions = angular_positions
        self.wavelength = wavelength
        self.n_filters = n_filters
        self.sigma_on_f = sigma_on_f
        self.max_shift = max_shift
        self.prealign = prealign

    @property
    def config(self):
        return LGConfig(bands=self.bands, angular_positions=self.angular_positions, wavelength=self.wavelength,
                        n_filters=self.n_filters, sigma_on_f=self.sigma_on_f)

    def _template(self, patch, pith):
        start = _reference_angle(patch, pith, self.prealign)
        polar, valid = polar_unwrap(patch, pith, self.bands, self.angular_positions, start_angle=start,
                                    return_valid=True)
        return log_gabor_encode(polar, self.config, valid)

    def compare(self, t1, t2):
        return iris_compare(t1, t2, self.max_shift)


class CircularGridBaseline(_TemplateBaseline):
    """Circular-grid orientation/frequency descriptor, compared with cell shifts."""

    def __init__(self, bands=4, cells_per_band=32, samples_per_cell=8, radial_samples=96, max_shift=2,
                 prealign=True):
        self.bands = bands
        self.cells_per_band = cells_per_band
        self.samples_per_cell = samples_per_cell
        self.radial_samples = radial_samples
        self.max_shift = max_shift
        self.prealign = prealign

    @property
    def config(self):
        return GridConfig(bands=self.bands, cells_per_band=self.cells_per_band,
                          samples_per_cell=self.samples_per_cell, radial_samples=self.radial_samples)

    def _template(self, patch, pith):
        start = _reference_angle(patch, pith, self.prealign)
        return circular_grid_features(patch, patch.mask, pith, config=self.config, start_angle=start)

    def compare(self, t1, t2):
        return circular_grid_compare(t1, t2, self.max_shift)
