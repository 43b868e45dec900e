"""Procedural log-end cross-section images with ground truth.

Each log end gets its own ring pattern (ring widths, latewood contrast, grain,
boundary shape). Acquisitions of an end re-render that pattern under a
rotation/translation about the image center, a background style, an
illumination gain and saw-cut noise. Everything is a pure function of the
specs and an integer seed.
"""

import json
import os
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from ._geometry import image_center, rotate_vectors
from .exceptions import InvalidInputError, InvalidSpecError
from .records import ENDS, AcquisitionId, ClassLabel

BACKGROUND_STYLES = ("forest", "sawmill", "studio")

# boundary harmonics k=2..5 and ring-distortion harmonics m=1..3, at irregularity 1
_BOUNDARY_AMPLITUDES = np.array([0.08, 0.04, 0.025, 0.015])
_RING_AMPLITUDES = np.array([0.05, 0.03, 0.02])
MAX_BOUNDARY_DEVIATION = float(_BOUNDARY_AMPLITUDES.sum())

_BACKGROUND_COLORS = {
    "forest": (72, 88, 52),
    "sawmill": (122, 112, 96),
    "studio": (28, 28, 30),
}
_BARK_COLORS = {
    "forest": (58, 42, 30),
    "sawmill": (70, 52, 38),
    "studio": (62, 44, 32),
}

# per dataset tag: background, saw-cut noise, illumination range, 45 degree camera turns
PROFILES = {
    "FH": dict(background_style="forest", sawcut_noise=0.45, gain=(0.8, 1.2), turn45=True),
    "FL": dict(background_style="forest", sawcut_noise=0.55, gain=(0.75, 1.25), turn45=True),
    "SM": dict(background_style="sawmill", sawcut_noise=0.7, gain=(0.8, 1.2), turn45=False),
    "R": dict(background_style="studio", sawcut_noise=0.35, gain=(0.95, 1.05), turn45=False),
    "S": dict(background_style="studio", sawcut_noise=0.05, gain=(0.95, 1.05), turn45=False),
    "MVA": dict(background_style="sawmill", sawcut_noise=0.4, gain=(0.85, 1.15), turn45=False),
}
_DEFAULT_PROFILE = dict(background_style="sawmill", sawcut_noise=0.5, gain=(0.8, 1.2), turn45=False)


@dataclass(frozen=True)
class LogSpec:
    log_id: str
    ring_count: int
    ring_width_profile: tuple
    pith_offset: tuple
    cs_radius: float
    shape_irregularity: float
    texture_seed: int
    end: str = "top"

    def validate(self):
        widths = np.asarray(self.ring_width_profile, dtype=np.float64)
        if self.ring_count < 3:
            raise InvalidSpecError("ring_count must be >= 3")
        if widths.ndim != 1 or len(widths) != self.ring_count:
            raise InvalidSpecError("ring_width_profile length must equal ring_count")
        if not np.all(np.isfinite(widths)) or np.any(widths <= 0):
            raise InvalidSpecError("ring widths must be positive")
        if not self.cs_radius > 0:
            raise InvalidSpecError("cs_radius must be positive")
        if widths.sum() > self.cs_radius + 1e-9:
            raise InvalidSpecError("sum of ring widths exceeds cs_radius")
        if not 0.0 <= self.shape_irregularity <= 1.0:
            raise InvalidSpecError("shape_irregularity must lie in [0, 1]")
        if len(self.pith_offset) != 2 or not np.all(np.isfinite(self.pith_offset)):
            raise InvalidSpecError("pith_offset must be a finite 2-vector")
        inner = self.cs_radius * (1.0 - MAX_BOUNDARY_DEVIATION * self.shape_irregularity)
        if np.hypot(*self.pith_offset) >= inner - 1.0:
            raise InvalidSpecError("pith_offset places the pith outside the cross-section")
        if self.end not in ENDS:
            raise InvalidSpecError(f"end must be one of {ENDS}")

    @property
    def max_radius(self):
        return self.cs_radius * (1.0 + MAX_BOUNDARY_DEVIATION * self.shape_irregularity)


@dataclass(frozen=True)
class AcquisitionSpec:
    rotation_deg: float = 0.0
    translation: tuple = (0.0, 0.0)
    background_style: str = "sawmill"
    illumination_gain: float = 1.0
    sawcut_noise: float = 0.0

    def validate(self):
        values = [self.rotation_deg, *self.translation, self.illumination_gain, self.sawcut_noise]
        if not np.all(np.isfinite(values)):
            raise InvalidSpecError("acquisition fields must be finite")
        if not 0.0 <= self.rotation_deg < 360.0:
            raise InvalidSpecError("rotation_deg must lie in [0, 360)")
        if self.background_style not in BACKGROUND_STYLES:
            raise InvalidSpecError(f"background_style must be one of {BACKGROUND_STYLES}")
        if not 0.5 <= self.illumination_gain <= 2.0:
            raise InvalidSpecError("illumination_gain must lie in [0.5, 2.0]")
        if not 0.0 <= self.sawcut_noise <= 1.0:
            raise InvalidSpecError("sawcut_noise must lie in [0, 1]")


@dataclass
class GroundTruth:
    mask: np.ndarray  # uint8, 1 = cross-section
    pith: np.ndarray  # (x, y)
    class_label: ClassLabel


def random_log_spec(rng, log_id, cs_radius, end="top"):
    """Draw a plausible LogSpec; ring widths vary strongly between ends."""
    ring_count = int(rng.integers(12, 29))
    widths = rng.lognormal(mean=0.0, sigma=0.45, size=ring_count)
    # slow growth trend, rings narrow or widen with age
    widths *= np.linspace(1.0, rng.uniform(0.45, 1.6), ring_count)
    widths *= rng.uniform(0.78, 0.95) * cs_radius / widths.sum()
    irregularity = float(rng.uniform(0.2, 0.7))
    inner = cs_radius * (1.0 - MAX_BOUNDARY_DEVIATION * irregularity)
    r = rng.uniform(0.04, 0.22) * inner
    phi = rng.uniform(0, 2 * np.pi)
    return LogSpec(
        log_id=log_id,
        ring_count=ring_count,
        ring_width_profile=tuple(float(w) for w in widths),
        pith_offset=(float(r * np.cos(phi)), float(r * np.sin(phi))),
        cs_radius=float(cs_radius),
        shape_irregularity=irregularity,
        texture_seed=int(rng.integers(0, 2**31 - 1)),
        end=end,
    )


class _EndTexture:
    """Identity-bearing parameters of one log end, derived from its texture seed."""

    def __init__(self, spec):
        rng = np.random.default_rng(spec.texture_seed)
        n_b, n_r = len(_BOUNDARY_AMPLITUDES), len(_RING_AMPLITUDES)
        self.boundary_amp = _BOUNDARY_AMPLITUDES * rng.uniform(0.5, 1.0, n_b)
        self.boundary_phase = rng.uniform(0, 2 * np.pi, n_b)
        self.ring_amp = _RING_AMPLITUDES * rng.uniform(0.5, 1.0, n_r)
        self.ring_phase = rng.uniform(0, 2 * np.pi, n_r)
        self.wobble_phase = rng.uniform(0, 2 * np.pi)
        self.wood = np.array([200.0, 160.0, 112.0]) + rng.uniform(-18, 18, 3)
        extra = max(8, int(np.ceil(spec.cs_radius / np.min(spec.ring_width_profile))))
        widths = np.concatenate(
            [spec.ring_width_profile, np.full(extra, spec.ring_width_profile[-1])]
        )
        self.ring_edges = np.concatenate([[0.0], np.cumsum(widths)])
        self.ring_widths = widths
        n_rings = len(widths)
        self.latewood = rng.uniform(0.2, 0.4, n_rings)
        self.contrast = rng.uniform(0.35, 0.75, n_rings)
        self.grain_extent = 1.4 * spec.max_radius
        side = int(np.ceil(2 * self.grain_extent)) + 3
        noise = rng.standard_normal((side, side))
        self.grain = ndimage.gaussian_filter(noise, 1.2) * 2.2
        self.blotch = ndimage.gaussian_filter(rng.standard_normal((side, side)), side / 12.0)
        self.blotch /= max(np.abs(self.blotch).max(), 1e-9)

    def boundary_radius(self, spec, phi):
        k = np.arange(2, 2 + len(self.boundary_amp))
        wave = np.cos(np.multiply.outer(phi, k) + self.boundary_phase) @ self.boundary_amp
        return spec.cs_radius * (1.0 + spec.shape_irregularity * wave)

    def sample_field(self, fld, u, v):
        coords = [v + self.grain_extent + 1, u + self.grain_extent + 1]
        return ndimage.map_coordinates(fld, coords, order=1, mode="nearest")


def _check_fits(spec, acq, image_size):
    if image_size < 2 * spec.cs_radius + 20:
        raise InvalidInputError("image_size must be >= 2 * cs_radius + 20")
    reach = spec.max_radius * 1.08 + np.hypot(*acq.translation)
    if reach > image_size / 2.0 - 1.0:
        raise InvalidSpecError("cross-section does not fit inside the image for this translation")


def generate_end(spec, acq, image_size=512, seed=0):
    """Render one acquisition of a log end.

    Returns ``(image, GroundTruth)`` with ``image`` a uint8 ``N x N x 3``
    array. The canonical cross-section is centered in the image, rotated
    counterclockwise by ``acq.rotation_deg`` about the image center and then
    translated by ``acq.translation``.
    """
    spec.validate()
    acq.validate()
    _check_fits(spec, acq, image_size)
    tex = _EndTexture(spec)
    rng = np.random.default_rng([seed, spec.texture_seed, 0x5EED])

    size = int(image_size)
    center = image_center((size, size))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    disp = np.stack([xx - center[0] - acq.translation[0], yy - center[1] - acq.translation[1]], -1)
    canon = rotate_vectors(disp, -acq.rotation_deg)
    u, v = canon[..., 0], canon[..., 1]

    rho_c = np.hypot(u, v)
    phi_c = np.arctan2(v, u)
    r_b = tex.boundary_radius(spec, phi_c)
    mask = rho_c <= r_b
    bark = (~mask) & (rho_c <= r_b * 1.07)

    # rings around the pith
    du, dv = u - spec.pith_offset[0], v - spec.pith_offset[1]
    rho = np.hypot(du, dv)
    psi = np.arctan2(dv, du)
    m = np.arange(1, 1 + len(tex.ring_amp))
    distort = np.cos(np.multiply.outer(psi, m) + tex.ring_phase) @ tex.ring_amp
    wobble = 0.03 * np.cos(2 * psi + 3.0 * rho / spec.cs_radius + tex.wobble_phase)
    rho_eff = rho / (1.0 + spec.shape_irregularity * (distort + wobble))
    idx = np.clip(np.searchsorted(tex.ring_edges, rho_eff, side="right") - 1, 0, len(tex.ring_widths) - 1)
    frac = np.clip((rho_eff - tex.ring_edges[idx]) / tex.ring_widths[idx], 0.0, 1.0)
    dark = 1.0 / (1.0 + np.exp(-(frac - (1.0 - tex.latewood[idx])) / 0.05))
    tone = 1.0 - 0.5 * tex.contrast[idx] * dark
    tone += 0.05 * tex.sample_field(tex.grain, u, v) + 0.08 * tex.sample_field(tex.blotch, u, v)
    tone *= 1.0 - 0.35 * np.exp(-rho / 3.0)  # darker pith spot
    wood = tone[..., None] * tex.wood

    # acquisition nuisances: saw-cut stripes, shading, illumination, sensor noise
    if acq.sawcut_noise > 0:
        theta = rng.uniform(0, np.pi)
        period = rng.uniform(0.12, 0.25) * spec.cs_radius
        proj = np.cos(theta) * xx + np.sin(theta) * yy
        bend = 0.002 * rng.uniform(-1, 1) * (xx - center[0]) ** 2
        stripes = np.sin(2 * np.pi * (proj + bend) / period + rng.uniform(0, 2 * np.pi))
        grit = ndimage.gaussian_filter(rng.standard_normal((size, size)), 0.8)
        wood *= (1.0 + acq.sawcut_noise * (0.18 * stripes + 0.12 * grit))[..., None]

    style = acq.background_style
    bg_noise = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 40.0)
    bg_noise /= max(np.abs(bg_noise).max(), 1e-9)
    bg_amp = 6.0 if style == "studio" else 30.0
    background = np.asarray(_BACKGROUND_COLORS[style], float) + bg_amp * bg_noise[..., None]
    bark_px = np.asarray(_BARK_COLORS[style], float) * (1 + 0.25 * tex.sample_field(tex.grain, u, v))[..., None]
    img = np.where(mask[..., None], wood, np.where(bark[..., None], bark_px, background))

    a, b = rng.uniform(-0.1, 0.1, 2)
    shade = 1.0 + a * (xx / size - 0.5) + b * (yy / size - 0.5)
    img = img * (acq.illumination_gain * shade)[..., None]
    img += rng.normal(0.0, 3.0, img.shape)
    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    pith = center + np.asarray(acq.translation, float) + rotate_vectors(spec.pith_offset, acq.rotation_deg)
    truth = GroundTruth(mask=mask.astype(np.uint8), pith=pith, class_label=ClassLabel(spec.log_id, spec.end))
    return image, truth


def _stable_hash(text):
    return zlib.crc32(str(text).encode("utf-8"))


def end_spec(seed, log_index, end, image_size=512, log_id=None):
    """LogSpec of one log end; same ``(seed, log_index, end)`` -> same wood."""
    rng = np.random.default_rng([seed, log_index, ENDS.index(end)])
    radius = rng.uniform(0.28, 0.36) * image_size
    return random_log_spec(rng, log_id or f"log{log_index:03d}", radius, end=end)


def acquisition_spec(seed, log_index, end, acq_index, dataset_tag, spec, image_size=512):
    """AcquisitionSpec for one repeat capture under a dataset profile."""
    profile = PROFILES.get(dataset_tag, _DEFAULT_PROFILE)
    rng = np.random.default_rng([seed, log_index, ENDS.index(end), 1000 + acq_index, _stable_hash(dataset_tag)])
    end_rng = np.random.default_rng([seed, log_index, ENDS.index(end), _stable_hash(dataset_tag)])
    if profile["turn45"]:
        # pairs of shots, then the camera turns by roughly 45 degrees
        rotation = end_rng.uniform(0, 360) + 45.0 * (acq_index // 2) + rng.normal(0, 3.0)
    else:
        rotation = rng.uniform(0, 360)
    room = image_size / 2.0 - 1.0 - spec.max_radius * 1.08 - 1.0
    shift = max(0.0, min(room, 0.05 * image_size))
    return AcquisitionSpec(
        rotation_deg=float(rotation % 360.0),
        translation=tuple(float(t) for t in rng.uniform(-shift, shift, 2) / np.sqrt(2)),
        background_style=profile["background_style"],
        illumination_gain=float(rng.uniform(*profile["gain"])),
        sawcut_noise=float(np.clip(profile["sawcut_noise"] * rng.uniform(0.7, 1.3), 0.0, 1.0)),
    )


def generate_samples(n_logs, acquisitions_per_end, dataset_tag, seed, image_size=512):
    """In-memory dataset: list of ``(AcquisitionId, image, GroundTruth)``."""
    if n_logs < 8:
        raise InvalidInputError("n_logs must be >= 8 so that 4 folds are nonempty")
    if acquisitions_per_end < 1:
        raise InvalidInputError("acquisitions_per_end must be >= 1")
    out = []
    for i in range(n_logs):
        for end in ENDS:
            spec = end_spec(seed, i, end, image_size)
            for j in range(acquisitions_per_end):
                acq = acquisition_spec(seed, i, end, j, dataset_tag, spec, image_size)
                image, truth = generate_end(
                    spec, acq, image_size, seed=_stable_hash((seed, dataset_tag, i, end, j))
                )
                out.append((AcquisitionId(dataset_tag, spec.log_id, end, j), image, truth))
    return out


@dataclass
class ManifestEntry:
    log_id: str
    end: str
    acq_index: int
    dataset_tag: str
    image: str
    mask: str
    pith: str

    @property
    def acquisition_id(self):
        return AcquisitionId(self.dataset_tag, self.log_id, self.end, self.acq_index)


@dataclass
class DatasetManifest:
    root: Path
    dataset_tag: str
    seed: int
    image_size: int
    n_logs: int
    acquisitions_per_end: int
    entries: list = field(default_factory=list)

    @property
    def path(self):
        return Path(self.root) / self.dataset_tag / "manifest.json"

    def _resolve(self, rel):
        return Path(self.root) / self.dataset_tag / rel

    def load_image(self, entry):
        return np.asarray(Image.open(self._resolve(entry.image)).convert("RGB"))

    def load_mask(self, entry):
        return (np.asarray(Image.open(self._resolve(entry.mask))) > 127).astype(np.uint8)

    def load_pith(self, entry):
        with open(self._resolve(entry.pith)) as fh:
            d = json.load(fh)
        return np.array([d["x"], d["y"]])

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("dataset_tag", "seed", "image_size", "n_logs", "acquisitions_per_end")}
        d["entries"] = [asdict(e) for e in self.entries]
        return d

    def save(self):
        with open(self.path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
        return self.path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path) as fh:
            d = json.load(fh)
        entries = [ManifestEntry(**e) for e in d.pop("entries")]
        return cls(root=path.parent.parent, entries=entries, **d)


def generate_dataset(n_logs, acquisitions_per_end, dataset_tag, seed, root, image_size=512):
    """Generate a dataset on disk and return its manifest.

    Layout: ``<root>/<tag>/<log_id>/<end>/<acq>.png`` with ``<acq>.mask.png``
    and ``<acq>.pith.json`` beside each image, plus ``<root>/<tag>/manifest.json``.
    """
    base = Path(root) / dataset_tag
    try:
        base.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {base}: {exc}") from exc
    if not os.access(base, os.W_OK):
        raise OSError(f"output directory {base} is not writable")
    manifest = DatasetManifest(
        root=Path(root), dataset_tag=dataset_tag, seed=seed, image_size=image_size,
        n_logs=n_logs, acquisitions_per_end=acquisitions_per_end,
    )
    for acq_id, image, truth in generate_samples(n_logs, acquisitions_per_end, dataset_tag, seed, image_size):
        rel = Path(acq_id.log_id) / acq_id.end
        (base / rel).mkdir(parents=True, exist_ok=True)
        stem = rel / str(acq_id.acq_index)
        entry = ManifestEntry(
            log_id=acq_id.log_id, end=acq_id.end, acq_index=acq_id.acq_index, dataset_tag=dataset_tag,
            image=f"{stem}.png", mask=f"{stem}.mask.png", pith=f"{stem}.pith.json",
        )
        Image.fromarray(image).save(base / entry.image, optimize=False)
        Image.fromarray(truth.mask * 255).save(base / entry.mask)
        with open(base / entry.pith, "w") as fh:
            json.dump({"x": float(truth.pith[0]), "y": float(truth.pith[1])}, fh)
        manifest.entries.append(entry)
    manifest.save()
    return manifest
