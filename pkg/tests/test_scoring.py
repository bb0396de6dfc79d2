import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jenga.errors import DimensionMismatch, EmptyMask, EmptySampleSet, SlotMismatch
from jenga.scoring import (
    Bounds,
    DiversityScore,
    Embedding,
    Slot,
    diversity_from_similarities,
    diversity_score,
    extract_crop,
    normalized_similarity,
    pairwise_order,
    square_bounds,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def emb(v, slot=Slot.S):
    return Embedding(unit(v), slot)


def score(value, n=1):
    return DiversityScore(value, (1.0,) * n, (1.0 - value,) * n, n, 1.0)


def noisy_image(h, w, seed=0):
    return np.random.default_rng(seed).integers(1, 256, size=(h, w, 3), dtype=np.uint8)


# -- crops --------------------------------------------------------------------


def test_full_mask_crop_is_resized_image():
    img = noisy_image(10, 10)
    crop = extract_crop(img, np.ones((10, 10), bool), resolution=40)
    assert crop.area_fraction == 1.0
    assert crop.pixels.shape == (40, 40, 3)
    assert crop.mask.all()
    assert crop.source_bounds == Bounds(0, 0, 10, 10)


def test_left_half_mask_on_4x4():
    mask = np.zeros((4, 4), bool)
    mask[:, :2] = True
    assert square_bounds(mask) == Bounds(0, 0, 4, 4)
    crop = extract_crop(noisy_image(4, 4), mask, resolution=32)
    assert crop.area_fraction == 0.5


def test_single_pixel_mask():
    mask = np.zeros((9, 9), bool)
    mask[4, 4] = True
    crop = extract_crop(noisy_image(9, 9), mask, resolution=32)
    assert crop.source_bounds == Bounds(4, 4, 5, 5)
    assert crop.area_fraction == 1.0
    assert crop.mask.all()


def test_square_grows_symmetrically_and_shifts_inward():
    mask = np.zeros((20, 20), bool)
    mask[5:8, 2:12] = True  # 3 tall, 10 wide
    b = square_bounds(mask)
    assert (b.height, b.width) == (10, 10)
    # 7 extra rows: 3 before, 4 after
    assert (b.top, b.bottom) == (2, 12)
    edge = np.zeros((20, 20), bool)
    edge[0:2, 0:8] = True
    assert square_bounds(edge) == Bounds(0, 0, 8, 8)


def test_square_larger_than_image_overhangs_with_zeros():
    mask = np.zeros((4, 12), bool)
    mask[1:3, 0:12] = True
    b = square_bounds(mask)
    assert b.height == b.width == 12
    crop = extract_crop(noisy_image(4, 12), mask, resolution=48)
    assert crop.area_fraction == pytest.approx(24 / 144)


def test_crop_errors():
    img = noisy_image(5, 5)
    with pytest.raises(EmptyMask):
        extract_crop(img, np.zeros((5, 5), bool))
    with pytest.raises(DimensionMismatch):
        extract_crop(img, np.ones((4, 5), bool))


def test_default_resolution_is_224():
    mask = np.zeros((30, 30), bool)
    mask[3:20, 5:9] = True
    crop = extract_crop(noisy_image(30, 30), mask)
    assert crop.pixels.shape == (224, 224, 3)
    assert crop.mask.shape == (224, 224)


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(1, 7),
    w=st.integers(1, 7),
    bits=st.integers(1, 2**49 - 1),
    res=st.sampled_from([32, 37, 64]),
)
def test_no_nonzero_pixels_outside_mask(h, w, bits, res):
    flat = np.array([(bits >> i) & 1 for i in range(h * w)], bool)
    mask = flat.reshape(h, w)
    if not mask.any():
        mask[0, 0] = True
    crop = extract_crop(noisy_image(h, w, bits % 97), mask, resolution=res)
    assert not crop.pixels[~crop.mask].any()


def test_no_nonzero_pixels_outside_mask_exhaustive_3x3():
    img = noisy_image(3, 3, 5)
    for bits in range(1, 2**9):
        mask = np.array([(bits >> i) & 1 for i in range(9)], bool).reshape(3, 3)
        crop = extract_crop(img, mask, resolution=32)
        assert not crop.pixels[~crop.mask].any()


# -- similarity ---------------------------------------------------------------


def test_similarity_examples():
    a = emb([1, 0, 0])
    assert normalized_similarity(a, a, 1.0) == 1.0
    assert normalized_similarity(a, emb([-1, 0, 0]), 0.3) == 0.0
    assert normalized_similarity(a, emb([0, 1, 0]), 0.5) == pytest.approx(0.25)


def test_similarity_modes():
    a, b = emb([1, 0]), emb([0, 1])
    assert normalized_similarity(a, b, 0.25, "none") == 0.5
    assert normalized_similarity(a, b, 0.25, "divide-clamped") == 1.0
    assert normalized_similarity(a, b, 0.8, "divide-clamped") == pytest.approx(0.625)


def test_similarity_errors():
    with pytest.raises(SlotMismatch):
        normalized_similarity(emb([1, 0]), emb([1, 0], Slot.V), 1.0)
    with pytest.raises(DimensionMismatch):
        normalized_similarity(emb([1, 0]), emb([1, 0, 0]), 1.0)
    with pytest.raises(ValueError):
        normalized_similarity(emb([1, 0]), emb([1, 0]), 0.0)


vectors = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3
)


@settings(max_examples=100, deadline=None)
@given(a=vectors, b=vectors, af=st.floats(0.01, 1.0))
def test_similarity_symmetric_and_in_range(a, b, af):
    s1 = normalized_similarity(emb(a), emb(b), af)
    s2 = normalized_similarity(emb(b), emb(a), af)
    assert s1 == pytest.approx(s2, abs=1e-12)
    assert 0.0 <= s1 <= 1.0


@settings(max_examples=100, deadline=None)
@given(t1=st.floats(0, np.pi), t2=st.floats(0, np.pi), af=st.floats(0.01, 1.0))
def test_similarity_monotone_in_cosine(t1, t2, af):
    ref = emb([1, 0])
    lo, hi = sorted((t1, t2), reverse=True)  # larger angle, smaller cosine
    s_lo = normalized_similarity(ref, emb([np.cos(lo), np.sin(lo)]), af)
    s_hi = normalized_similarity(ref, emb([np.cos(hi), np.sin(hi)]), af)
    assert s_lo <= s_hi + 1e-12


# -- diversity ----------------------------------------------------------------


def test_worked_example_two_samples():
    assert diversity_from_similarities((0.8, 0.6), (0.5, 0.7)) == pytest.approx(0.58, abs=1e-12)


def test_zero_similarity_slot_gives_one():
    assert diversity_from_similarities((0.0, 0.0, 0.0), (0.9, 0.2, 0.4)) == 1.0


def test_identical_counterfactuals_give_zero():
    img = noisy_image(8, 8)
    crop = extract_crop(img, np.ones((8, 8), bool), resolution=32)

    def embed(slot):
        return lambda c: Embedding(unit(c.pixels.reshape(-1).astype(float) + 1), slot)

    s = diversity_score(crop, [crop] * 5, embed(Slot.S), embed(Slot.V))
    assert s.value == pytest.approx(0.0, abs=1e-12)
    assert s.n == 5


def test_orthogonal_slot_s_bounds_value():
    img = noisy_image(8, 8)
    mask = np.zeros((8, 8), bool)
    mask[2:6, 1:7] = True
    orig = extract_crop(img, mask, resolution=32)
    cfs = [extract_crop(noisy_image(8, 8, k), mask, resolution=32, bounds=orig.source_bounds) for k in range(4)]

    def embed_s(c):
        return Embedding(np.array([1.0, 0.0]) if c is orig else np.array([0.0, 1.0]), Slot.S)

    def embed_v(c):
        return Embedding(unit(c.pixels.reshape(-1).astype(float) + 1), Slot.V)

    s = diversity_score(orig, cfs, embed_s, embed_v)
    assert s.value >= 0.5
    assert all(v == pytest.approx(0.5 * orig.area_fraction) for v in s.per_sample_sim_s)


def test_disabled_slot_contributes_one():
    crop = extract_crop(noisy_image(6, 6), np.ones((6, 6), bool), resolution=32)
    s = diversity_score(crop, [crop, crop], lambda c: Embedding(np.array([1.0, 0.0]), Slot.S), None)
    assert s.per_sample_sim_v == (1.0, 1.0)
    assert s.slots == ("S",)
    assert s.value == pytest.approx(0.0)


def test_empty_sample_set():
    crop = extract_crop(noisy_image(6, 6), np.ones((6, 6), bool), resolution=32)
    with pytest.raises(EmptySampleSet):
        diversity_score(crop, [], lambda c: None, lambda c: None)
    with pytest.raises(EmptySampleSet):
        diversity_from_similarities((), (0.5,))


@settings(max_examples=200, deadline=None)
@given(
    sims=st.integers(1, 20).flatmap(
        lambda n: st.tuples(
            st.lists(st.floats(0, 1), min_size=n, max_size=n),
            st.lists(st.floats(0, 1), min_size=n, max_size=n),
        )
    )
)
def test_value_in_unit_interval_and_recomputable(sims):
    s, v = sims
    value = diversity_from_similarities(s, v)
    assert 0.0 <= value <= 1.0
    stored = DiversityScore(value, tuple(s), tuple(v), len(s), 1.0)
    assert abs(stored.recompute() - value) <= 1e-12


# -- pairwise order -----------------------------------------------------------


def test_higher_score_first():
    d = pairwise_order(score(0.9), score(0.3), 100, 10, "A", "B")
    assert d.first == "A" and not d.tie_broken


def test_tie_goes_to_smaller_area():
    d = pairwise_order(score(0.5), score(0.5), 10, 40, "A", "B")
    assert d.first == "A" and d.tie_broken
    d = pairwise_order(score(0.5), score(0.5), 40, 10, "A", "B")
    assert d.first == "B"


def test_full_tie_goes_to_smaller_id():
    assert pairwise_order(score(0.5), score(0.5), 10, 10, "B", "A").first == "A"


@settings(max_examples=200, deadline=None)
@given(
    va=st.sampled_from([0.0, 0.25, 0.5, 1.0]),
    vb=st.sampled_from([0.0, 0.25, 0.5, 1.0]),
    aa=st.integers(1, 5),
    ab=st.integers(1, 5),
    ids=st.sampled_from(list(itertools.permutations("ABC", 2))),
)
def test_pairwise_antisymmetric(va, vb, aa, ab, ids):
    ia, ib = ids
    d1 = pairwise_order(score(va), score(vb), aa, ab, ia, ib)
    d2 = pairwise_order(score(vb), score(va), ab, aa, ib, ia)
    assert d1.first == d2.first
    assert d1.tie_broken == d2.tie_broken
