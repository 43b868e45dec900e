"""Cross-section segmentation and square patch extraction.

A small encoder-decoder predicts a per-pixel CS probability. The probability
mask is binarized at a threshold ``t`` (values equal to ``t`` count as CS),
optionally reduced to its largest connected component, and used to black out
the background and cut the smallest square that holds the whole CS plus a
black border.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage
from sklearn.base import BaseEstimator
from torch import nn

from . import __version__
from ._validation import (
    check_binary_mask,
    check_image,
    check_is_fitted,
    check_open_unit,
    check_positive_int,
    check_probability_mask,
)
from .exceptions import InvalidInputError, SegmentationFailedError

# binarization thresholds by dataset tag (forest images use the lower one)
DEFAULT_THRESHOLDS = {"SM": 0.5, "MVA": 0.5, "FH": 0.25, "FL": 0.25}
MIN_IMAGE_SIDE = 16
MAX_IMAGE_SIDE = 8192


def threshold_for(dataset_tag, overrides=None):
    table = dict(DEFAULT_THRESHOLDS)
    table.update(overrides or {})
    return float(table.get(dataset_tag, 0.5))


@dataclass
class SquarePatch:
    """Square, black-background crop around the cross-section.

    ``offset`` is the ``(row, col)`` of the patch's top-left corner in the
    source image; it can be negative when the square reaches past the border.
    """

    pixels: np.ndarray
    mask: np.ndarray
    source_id: str = ""
    offset: tuple = (0, 0)

    @property
    def side(self):
        return self.pixels.shape[0]


def binarize(mask, t=0.5):
    """1 where ``mask >= t``, else 0."""
    t = check_open_unit(t, "t")
    mask = check_probability_mask(mask)
    return (mask >= t).astype(np.uint8)


def largest_component(mask):
    """Keep only the largest 8-connected foreground component."""
    mask = check_binary_mask(mask)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n <= 1:
        return mask
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return (labels == np.argmax(sizes)).astype(np.uint8)


def bounding_box(mask):
    """Inclusive ``(r0, r1, c0, c1)`` of the foreground, or None when empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return rows[0], rows[-1], cols[0], cols[-1]


def extract_patch(image, mask, border=5, source_id=""):
    """Black out the background and cut the minimal square around the CS.

    The square side is ``max(bbox height, bbox width) + 2 * border``. The
    square is centered on the bounding box and anything outside the source
    image is padded black.
    """
    image = check_image(image)
    mask = check_binary_mask(mask, image.shape[:2])
    border = check_positive_int(border, "border", minimum=0)
    box = bounding_box(mask)
    if box is None:
        raise SegmentationFailedError(f"empty segmentation mask for {source_id or 'image'}")
    r0, r1, c0, c1 = box
    h, w = r1 - r0 + 1, c1 - c0 + 1
    s0 = max(h, w)
    side = s0 + 2 * border
    top = r0 - (s0 - h) // 2 - border
    left = c0 - (s0 - w) // 2 - border

    pixels = np.zeros((side, side, 3), dtype=np.uint8)
    out_mask = np.zeros((side, side), dtype=np.uint8)
    H, W = mask.shape
    sr0, sr1 = max(top, 0), min(top + side, H)
    sc0, sc1 = max(left, 0), min(left + side, W)
    src_mask = mask[sr0:sr1, sc0:sc1]
    dst = (slice(sr0 - top, sr1 - top), slice(sc0 - left, sc1 - left))
    out_mask[dst] = src_mask
    pixels[dst] = image[sr0:sr1, sc0:sc1] * src_mask[..., None]
    return SquarePatch(pixels=pixels, mask=out_mask, source_id=source_id, offset=(int(top), int(left)))


def pixel_accuracy(pred, truth):
    """Fraction of pixels on which two binary masks agree."""
    pred = check_binary_mask(pred, name="pred")
    truth = check_binary_mask(truth, pred.shape, name="truth")
    return float(np.mean(pred == truth))


def _conv_block(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class TinyUNet(nn.Module):
    """Three-level U-Net emitting one logit per pixel."""

    def __init__(self, width=16):
        super().__init__()
        self.enc1 = _conv_block(3, width)
        self.enc2 = _conv_block(width, 2 * width)
        self.enc3 = _conv_block(2 * width, 4 * width)
        self.dec2 = _conv_block(6 * width, 2 * width)
        self.dec1 = _conv_block(3 * width, width)
        self.head = nn.Conv2d(width, 1, 1)

    def forward(self, x):
        e1 = self.enc1(x)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        e3 = self.enc3(F.max_pool2d(e2, 2))
        d2 = self.dec2(torch.cat([F.interpolate(e3, scale_factor=2.0, mode="bilinear", align_corners=False), e2], 1))
        d1 = self.dec1(torch.cat([F.interpolate(d2, scale_factor=2.0, mode="bilinear", align_corners=False), e1], 1))
        return self.head(d1)


def _to_tensor(images, size):
    batch = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float() / 255.0
    if batch.shape[-2:] != (size, size):
        batch = F.interpolate(batch, size=(size, size), mode="bilinear", align_corners=False, antialias=True)
    return batch - 0.5


class CrossSectionSegmenter(BaseEstimator):
    """Per-pixel cross-section/background classifier.

    Parameters
    ----------
    epochs : int
        Passes over the training set.
    input_size : int
        Side of the square network input; images are resized to it and the
        predicted probabilities are resized back.
    threshold : float
        Binarization threshold used by :meth:`predict` and :meth:`transform`.
    border : int
        Black frame width of extracted patches.
    keep_largest : bool
        Drop all but the largest connected component after binarization.
    """

    def __init__(self, epochs=30, input_size=96, width=12, batch_size=8, learning_rate=1e-2,
                 threshold=0.5, border=5, keep_largest=True, seed=0):
        self.epochs = epochs
        self.input_size = input_size
        self.width = width
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.threshold = threshold
        self.border = border
        self.keep_largest = keep_largest
        self.seed = seed

    def _build(self):
        if self.input_size % 4 or self.input_size < MIN_IMAGE_SIDE:
            raise InvalidInputError("input_size must be a multiple of 4 and >= 16")
        torch.manual_seed(self.seed)
        return TinyUNet(self.width)

    def fit(self, images, masks):
        images = [check_image(im) for im in images]
        if not images:
            raise InvalidInputError("train_set is empty")
        if len(masks) != len(images):
            raise InvalidInputError("images and masks differ in length")
        masks = [check_binary_mask(m, im.shape[:2]) for im, m in zip(images, masks)]
        for im in images:
            self._check_size(im)
        epochs = check_positive_int(self.epochs, "epochs", minimum=0)

        model = self._build()
        x = torch.cat([_to_tensor([im], self.input_size) for im in images])
        y = torch.cat([
            F.interpolate(torch.from_numpy(m[None, None].astype(np.float32)), size=(self.input_size,) * 2,
                          mode="bilinear", align_corners=False, antialias=True)
            for m in masks
        ])
        opt = torch.optim.Adam(model.parameters(), lr=self.learning_rate)
        gen = torch.Generator().manual_seed(self.seed)
        self.history_ = []
        model.train()
        for _ in range(epochs):
            order = torch.randperm(len(x), generator=gen)
            total = 0.0
            for start in range(0, len(x), self.batch_size):
                idx = order[start:start + self.batch_size]
                xb, yb = x[idx], y[idx]
                # dihedral flips keep the mask aligned with the image
                k = int(torch.randint(0, 4, (1,), generator=gen))
                xb, yb = torch.rot90(xb, k, (2, 3)), torch.rot90(yb, k, (2, 3))
                loss = F.binary_cross_entropy_with_logits(model(xb), yb)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(idx)
            self.history_.append(total / len(x))
        model.eval()
        self.model_ = model
        return self

    def _check_size(self, image):
        h, w = image.shape[:2]
        if min(h, w) < MIN_IMAGE_SIDE or max(h, w) > MAX_IMAGE_SIDE:
            raise InvalidInputError(f"image size {h}x{w} outside the accepted range")

    def predict_proba(self, images):
        """Probability masks, one per image, each shaped like its image."""
        check_is_fitted(self, "model_")
        single = isinstance(images, np.ndarray) and images.ndim == 3
        images = [images] if single else list(images)
        out = []
        with torch.no_grad():
            for im in images:
                im = check_image(im)
                self._check_size(im)
                logits = self.model_(_to_tensor([im], self.input_size))
                logits = F.interpolate(logits, size=im.shape[:2], mode="bilinear", align_corners=False)
                out.append(torch.sigmoid(logits)[0, 0].double().numpy().clip(0.0, 1.0))
        return out[0] if single else out

    def predict(self, images, threshold=None):
        t = self.threshold if threshold is None else threshold
        single = isinstance(images, np.ndarray) and images.ndim == 3
        probs = self.predict_proba([images] if single else images)
        masks = []
        for p in probs:
            m = binarize(p, t)
            masks.append(largest_component(m) if self.keep_largest else m)
        return masks[0] if single else masks

    def transform(self, images, threshold=None):
        """Square patches for each image; raises on an empty prediction."""
        single = isinstance(images, np.ndarray) and images.ndim == 3
        images = [images] if single else list(images)
        masks = self.predict(images, threshold)
        patches = [extract_patch(im, m, self.border) for im, m in zip(images, masks)]
        return patches[0] if single else patches

    def score(self, images, masks, threshold=None):
        """Mean pixel accuracy against ground-truth masks."""
        preds = self.predict(list(images), threshold)
        return float(np.mean([pixel_accuracy(p, m) for p, m in zip(preds, masks)]))

    def save(self, path):
        """Write ``<path>`` (state dict) and ``<path>.json`` (sidecar)."""
        check_is_fitted(self, "model_")
        path = Path(path)
        torch.save(self.model_.state_dict(), path)
        sidecar = {"input_size": self.input_size, "version": __version__, "params": self.get_params()}
        with open(str(path) + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=1)
        return path

    @classmethod
    def load(cls, path):
        with open(str(path) + ".json") as fh:
            sidecar = json.load(fh)
        est = cls(**sidecar["params"])
        model = est._build()
        model.load_state_dict(torch.load(path, weights_only=True))
        model.eval()
        est.model_ = model
        est.history_ = []
        return est


SegmenterModel = CrossSectionSegmenter


def train_segmenter(train_set, epochs=30, seed=0, **params):
    """Fit a segmenter on ``[(image, mask), ...]``."""
    train_set = list(train_set)
    if not train_set:
        raise InvalidInputError("train_set is empty")
    images, masks = zip(*train_set)
    return CrossSectionSegmenter(epochs=epochs, seed=seed, **params).fit(list(images), list(masks))


def predict_mask(model, image):
    return model.predict_proba(check_image(image))
