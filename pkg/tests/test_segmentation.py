import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from logtrace.exceptions import InvalidInputError, SegmentationFailedError
from logtrace.segmentation import (
    CrossSectionSegmenter,
    binarize,
    extract_patch,
    largest_component,
    pixel_accuracy,
    predict_mask,
    threshold_for,
    train_segmenter,
)
from logtrace.synthgen import generate_samples

from oracles import bbox_oracle

prob_masks = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                    elements=st.floats(0.0, 1.0, allow_nan=False))


def test_binarize_rule_and_tie():
    out = binarize(np.array([[0.6, 0.4], [0.5, 0.1]]), 0.5)
    assert out.tolist() == [[1, 0], [1, 0]]
    assert not binarize(np.zeros((3, 4)), 0.3).any()


@pytest.mark.parametrize("t", [0.0, 1.0, -0.2, 1.5])
def test_binarize_rejects_threshold(t):
    with pytest.raises(InvalidInputError):
        binarize(np.zeros((2, 2)), t)


@given(prob_masks, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_threshold_monotone(m, t1, t2):
    lo, hi = sorted((t1, t2))
    assert np.all(binarize(m, lo) >= binarize(m, hi))


@given(arrays(np.uint8, (6, 7), elements=st.integers(0, 1)), st.floats(0.01, 0.99))
def test_binarize_binary_mask_is_identity(m, t):
    assert np.array_equal(binarize(m.astype(float), t), m)


def test_default_thresholds():
    assert threshold_for("SM") == 0.5 and threshold_for("MVA") == 0.5
    assert threshold_for("FH") == 0.25 and threshold_for("FL") == 0.25
    assert threshold_for("unknown") == 0.5
    assert threshold_for("FH", {"FH": 0.4}) == 0.4


def test_patch_rectangle_example():
    img = np.full((100, 100, 3), 200, np.uint8)
    mask = np.zeros((100, 100), np.uint8)
    mask[20:40, 30:60] = 1
    p = extract_patch(img, mask, border=5)
    r0, r1, c0, c1 = bbox_oracle(mask)
    assert p.side == max(r1 - r0 + 1, c1 - c0 + 1) + 10 == 40
    assert p.mask.sum() == mask.sum()
    assert (p.pixels[:5] == 0).all() and (p.pixels[-5:] == 0).all()
    assert (p.pixels[:, :5] == 0).all() and (p.pixels[:, -5:] == 0).all()


def test_patch_full_mask():
    img = np.random.default_rng(0).integers(1, 255, (50, 50, 3)).astype(np.uint8)
    p = extract_patch(img, np.ones((50, 50), np.uint8))
    assert p.side == 60
    assert np.array_equal(p.pixels[5:55, 5:55], img)
    assert p.offset == (-5, -5)


def test_patch_empty_mask():
    with pytest.raises(SegmentationFailedError):
        extract_patch(np.zeros((10, 10, 3), np.uint8), np.zeros((10, 10), np.uint8))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_patch_invariants(data):
    h, w = data.draw(st.integers(3, 40)), data.draw(st.integers(3, 40))
    mask = data.draw(arrays(np.uint8, (h, w), elements=st.integers(0, 1)))
    if not mask.any():
        mask[data.draw(st.integers(0, h - 1)), data.draw(st.integers(0, w - 1))] = 1
    border = data.draw(st.integers(0, 8))
    img = data.draw(arrays(np.uint8, (h, w, 3), elements=st.integers(1, 255)))
    p = extract_patch(img, mask, border)
    r0, r1, c0, c1 = bbox_oracle(mask)
    assert p.pixels.shape == (p.side, p.side, 3)
    assert p.side == max(r1 - r0 + 1, c1 - c0 + 1) + 2 * border
    assert p.mask.sum() == mask.sum()
    inner = p.mask[border:p.side - border, border:p.side - border]
    assert inner.sum() == mask.sum()
    assert (p.pixels[p.mask == 0] == 0).all()
    # foreground pixels are copied unchanged
    top, left = p.offset
    rr, cc = np.nonzero(mask)
    assert np.array_equal(p.pixels[rr - top, cc - left], img[rr, cc])


def test_pixel_accuracy():
    a = np.array([[1, 0], [0, 1]], np.uint8)
    assert pixel_accuracy(a, a) == 1.0
    assert pixel_accuracy(a, 1 - a) == 0.0
    b = np.array([[1, 1], [0, 1]], np.uint8)
    assert pixel_accuracy(a, b) == pixel_accuracy(b, a) == 0.75
    with pytest.raises(InvalidInputError):
        pixel_accuracy(a, np.zeros((3, 3), np.uint8))


def test_largest_component_keeps_biggest_blob():
    m = np.zeros((20, 20), np.uint8)
    m[2:10, 2:10] = 1
    m[15:17, 15:17] = 1
    out = largest_component(m)
    assert out.sum() == 64 and out[16, 16] == 0


@pytest.fixture(scope="module")
def trained(request):
    train = generate_samples(8, 3, "SM", seed=21, image_size=128)
    test = generate_samples(8, 1, "SM", seed=22, image_size=128)
    model = train_segmenter([(im, gt.mask) for _, im, gt in train], epochs=30, seed=0, input_size=64)
    return model, train, test


def test_trained_segmenter_accuracy(trained):
    model, train, test = trained
    assert len(train) == 48
    train_acc = model.score([im for _, im, _ in train], [gt.mask for _, _, gt in train])
    test_acc = model.score([im for _, im, _ in test], [gt.mask for _, _, gt in test], threshold=0.5)
    baseline = np.mean([1 - gt.mask.mean() for _, _, gt in train])
    assert train_acc >= 0.95 and train_acc > baseline
    assert test_acc >= 0.95


def test_predict_mask_contract(trained):
    model, _, test = trained
    im = test[0][1]
    p1, p2 = predict_mask(model, im), predict_mask(model, im)
    assert p1.shape == im.shape[:2]
    assert p1.min() >= 0 and p1.max() <= 1
    assert np.array_equal(p1, p2)
    patch = model.transform(im)
    assert patch.side == patch.pixels.shape[1]


def test_predict_rejects_bad_size(trained):
    model, _, _ = trained
    with pytest.raises(InvalidInputError):
        predict_mask(model, np.zeros((8, 8, 3), np.uint8))
    with pytest.raises(InvalidInputError):
        predict_mask(model, np.zeros((32, 32, 4), np.uint8))


def test_save_load_roundtrip(trained, tmp_path):
    model, _, test = trained
    path = model.save(tmp_path / "seg.pt")
    again = CrossSectionSegmenter.load(path)
    im = test[1][1]
    assert np.array_equal(again.predict_proba(im), model.predict_proba(im))
    assert (tmp_path / "seg.pt.json").exists()


def test_zero_epochs_returns_untrained_model(small_samples):
    _, im, gt = small_samples[0]
    model = train_segmenter([(im, gt.mask)], epochs=0, input_size=32)
    prob = predict_mask(model, im)
    assert prob.shape == im.shape[:2]


def test_training_input_errors(small_samples):
    _, im, gt = small_samples[0]
    with pytest.raises(InvalidInputError):
        train_segmenter([], epochs=1)
    with pytest.raises(InvalidInputError):
        train_segmenter([(im, gt.mask[:-1])], epochs=1)


def test_training_is_seed_deterministic(small_samples):
    data = [(im, gt.mask) for _, im, gt in small_samples[:4]]
    a = train_segmenter(data, epochs=2, seed=5, input_size=32)
    b = train_segmenter(data, epochs=2, seed=5, input_size=32)
    assert np.array_equal(a.predict_proba(data[0][0]), b.predict_proba(data[0][0]))
