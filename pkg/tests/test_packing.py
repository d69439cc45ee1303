import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cipherconv.errors import ShapeMismatchError, SlotCapacityError
from cipherconv.packing.layout import KernelTensor, flatten, repeated_kernel_vector, unflatten
from cipherconv.packing.masks import (
    build_all_masks,
    build_mask,
    compaction_mask,
    extraction_mask,
    stride_aligned_mask,
)

from .conftest import make_backend


def test_flatten_is_channel_major(backend):
    tensor = np.arange(2 * 3 * 3, dtype=float).reshape(2, 3, 3)
    packed = flatten(backend, tensor)
    slots = backend.decode(packed.data)
    c, i, j = 1, 2, 0
    assert slots[c * 9 + i * 3 + j] == tensor[c, i, j]
    assert np.all(slots[18:] == 0)
    assert packed.shape == (2, 3, 3)


@given(st.integers(1, 4), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_unflatten_inverts_flatten(channels, width, seed):
    b = make_backend(256)
    tensor = np.random.default_rng(seed).normal(size=(channels, width, width))
    np.testing.assert_array_equal(unflatten(b, flatten(b, tensor)), tensor)


def test_flatten_rejects_bad_shapes():
    b = make_backend(16)
    with pytest.raises(ShapeMismatchError):
        flatten(b, np.zeros((1, 2, 3)))
    with pytest.raises(SlotCapacityError):
        flatten(b, np.zeros((2, 3, 3)))


def test_repeated_kernel_vector_copies_weight_per_channel_block():
    weights = np.arange(2 * 3 * 2 * 2, dtype=float).reshape(2, 3, 2, 2)
    kern = KernelTensor(weights, np.zeros(2))
    vec = repeated_kernel_vector(kern, 1, (0, 1), channels=3, width=2, slot_count=16).values
    expected = np.concatenate([np.repeat(weights[1, :, 0, 1], 4), np.zeros(4)])
    np.testing.assert_array_equal(vec, expected)


def test_kernel_tensor_validates_bias():
    with pytest.raises(ShapeMismatchError):
        KernelTensor(np.zeros((2, 1, 3, 3)), np.zeros(3))


def test_build_mask_all_ones_row():
    assert build_mask(0, 0, 4, 4, 1).values.tolist() == [1, 1, 1, 1]


def test_build_mask_top_left_tap():
    mask = build_mask(5, 0, 3, 16, 1).values.reshape(4, 4)
    expected = np.ones((4, 4))
    expected[0, :] = 0
    expected[:, 0] = 0
    np.testing.assert_array_equal(mask, expected)


def test_special_masks_cover_valid_taps():
    width = 4
    masks = build_all_masks(width * width, 1, width)
    assert len(masks) == 9
    assert all(len(m) == 16 for m in masks)
    for t, mask in enumerate(masks):
        di, dj = divmod(t, 3)
        grid = mask.values.reshape(width, width)
        for i in range(width):
            for j in range(width):
                inside = 0 <= i + di - 1 < width and 0 <= j + dj - 1 < width
                assert grid[i, j] == (1.0 if inside else 0.0), (t, i, j)


def test_center_mask_is_all_ones_per_channel():
    masks = build_all_masks(9, 2, 3)
    assert masks[4].values.tolist() == [1.0] * 18


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(1, 20), st.integers(1, 3))
@settings(max_examples=80, deadline=None)
def test_masks_are_binary_with_expected_length(sp, ep, w, m, channels):
    values = build_mask(sp, ep, w, m, channels).values
    assert values.shape == (m * channels,)
    assert set(np.unique(values)) <= {0.0, 1.0}


def test_extraction_mask_keeps_first_block():
    assert extraction_mask(2, 3).values.tolist() == [1, 1, 1, 1] + [0] * 8


def test_stride_masks_select_sampled_positions():
    aligned = stride_aligned_mask(64, 1, 8, 64, 4, 2).reshape(8, 8)
    assert aligned[::2, ::2].all()
    assert aligned.sum() == 16
    # after the last round each row is one contiguous run
    final = compaction_mask(64, 1, 8, 64, 4, 2, 1).reshape(8, 8)
    assert final[0, :4].all() and final[0, 4:].sum() == 0
    assert final[1].sum() == 0
