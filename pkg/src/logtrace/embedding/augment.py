"""Training-time rotation and random-crop augmentation."""

import numpy as np
from PIL import Image

from ..exceptions import InvalidInputError


def _pixels(patch):
    return np.asarray(getattr(patch, "pixels", patch), dtype=np.uint8)


def resize_square(pixels, side):
    img = Image.fromarray(_pixels(pixels))
    if img.size != (side, side):
        img = img.resize((side, side), Image.BILINEAR)
    return np.asarray(img)


def augment_with(patch, angle, offset=(0, 0), input_side=224, jitter=10):
    """Rotate, resize to ``input_side + jitter`` and crop ``input_side``.

    ``offset`` is the ``(dx, dy)`` crop displacement from the centered crop;
    each component must lie in ``[-jitter // 2, jitter - jitter // 2]``.
    """
    half = jitter // 2
    dx, dy = (int(o) for o in offset)
    if not (-half <= dx <= jitter - half and -half <= dy <= jitter - half):
        raise InvalidInputError(f"crop offset {offset} outside the valid range for jitter={jitter}")
    img = Image.fromarray(_pixels(patch))
    if angle:
        img = img.rotate(float(angle), resample=Image.BILINEAR, fillcolor=(0, 0, 0))
    big = input_side + jitter
    img = img.resize((big, big), Image.BILINEAR)
    arr = np.asarray(img)
    r, c = half + dy, half + dx
    return arr[r:r + input_side, c:c + input_side].copy()


def augment(patch, seed, input_side=224, jitter=10):
    """Random rotation in [0, 360) plus a uniformly random valid crop."""
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0.0, 360.0)
    half = jitter // 2
    dx, dy = rng.integers(-half, jitter - half + 1, size=2)
    return augment_with(patch, angle, (dx, dy), input_side, jitter)
