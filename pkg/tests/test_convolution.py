import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cipherconv.errors import ModelBuildError, ShapeMismatchError
from cipherconv.layers.convolution import (
    conv_depth,
    conv_generic,
    conv_grouped_stride,
    conv_keys,
    conv_special_3x3,
    convolve,
    pad_input,
    pad_keys,
)
from cipherconv.layers.geometry import conv_output_width
from cipherconv.packing.layout import KernelTensor, flatten, unflatten

from .conftest import make_backend, naive_conv, random_kernel


@pytest.mark.parametrize(
    "width,kernel,stride,padding,expected",
    [(28, 5, 1, 0, 24), (32, 3, 1, 1, 32), (32, 4, 2, 1, 16), (9, 3, 2, 0, 4), (4, 4, 1, 0, 1)],
)
def test_output_width(width, kernel, stride, padding, expected):
    assert conv_output_width(width, kernel, stride, padding) == expected


@settings(max_examples=500, deadline=None)
@given(st.integers(1, 32), st.integers(1, 7), st.integers(1, 4), st.integers(0, 3))
def test_output_width_inverts_the_input_size(out_width, kernel, stride, padding):
    width = (out_width - 1) * stride + kernel - 2 * padding
    assume(width >= 1)
    assert conv_output_width(width, kernel, stride, padding) == out_width


def test_non_divisible_geometry_is_rejected():
    with pytest.raises(ModelBuildError):
        conv_output_width(8, 3, 2, 0)
    with pytest.raises(ModelBuildError):
        conv_output_width(2, 5, 1, 0)


def test_pad_input_matches_numpy_pad(rng):
    b = make_backend(256)
    b.attach_recorder()
    x = rng.normal(size=(3, 4, 4))
    packed = pad_input(b, flatten(b, x), 1)
    assert packed.shape == (3, 6, 6)
    np.testing.assert_allclose(unflatten(b, packed), np.pad(x, ((0, 0), (1, 1), (1, 1))), atol=1e-12)
    assert packed.level == b.depth_budget - 1
    assert b.recorder.rotation_indices() <= pad_keys(3, 4, 1)


def test_pad_keys_count_is_channels_plus_three():
    assert len(pad_keys(3, 4, 1)) == 6
    assert pad_keys(3, 4, 0) == set()


@pytest.mark.parametrize(
    "channels,filters,width,kernel,stride,padding,mode,variant",
    [
        (1, 2, 6, 3, 1, 0, "generic", "extract"),
        (2, 3, 6, 3, 1, 1, "generic", "extract"),
        (2, 2, 8, 2, 2, 0, "generic", "extract"),
        (2, 2, 8, 2, 2, 0, "generic", "masked"),
        (3, 2, 7, 3, 2, 0, "generic", "masked"),
        (2, 4, 9, 3, 2, 0, "grouped", "extract"),
        (2, 4, 7, 3, 2, 1, "grouped", "masked"),
        (3, 2, 5, 1, 1, 0, "generic", "extract"),
    ],
)
def test_convolution_matches_direct_evaluation(rng, channels, filters, width, kernel, stride, padding,
                                               mode, variant):
    b = make_backend(1024)
    recorder = b.attach_recorder()
    x = rng.normal(size=(channels, width, width))
    kern = random_kernel(rng, filters, channels, kernel)
    out = convolve(b, flatten(b, x), kern, stride=stride, padding=padding, grouped=mode == "grouped",
                   stride_variant=variant)

    np.testing.assert_allclose(unflatten(b, out), naive_conv(x, kern, stride, padding), atol=1e-9)
    depth = conv_depth(kernel=kernel, stride=stride, padding=padding, width=width, mode=mode,
                       stride_variant=variant, channels=channels, slot_count=1024)
    assert out.level == b.depth_budget - depth
    keys = conv_keys(channels=channels, filters=filters, width=width, kernel=kernel, stride=stride,
                     padding=padding, mode=mode, stride_variant=variant, slot_count=1024)
    assert recorder.rotation_indices() <= keys


def _random_conv_cases(count, seed=7):
    draw = np.random.default_rng(seed)
    cases = []
    while len(cases) < count:
        width, kernel = int(draw.choice([4, 6, 8])), int(draw.choice([2, 3, 5]))
        channels, filters = (int(v) for v in draw.integers(1, 5, size=2))
        stride, padding = int(draw.integers(1, 3)), int(draw.integers(0, 2))
        span = width + 2 * padding - kernel
        if span < 0 or span % stride:
            continue
        grouped = stride > 1 and filters % channels == 0 and bool(draw.integers(0, 2))
        variant = str(draw.choice(["extract", "masked"]))
        cases.append((channels, filters, width, kernel, stride, padding,
                      "grouped" if grouped else "generic", variant))
    return cases


@pytest.mark.parametrize("channels,filters,width,kernel,stride,padding,mode,variant", _random_conv_cases(200))
def test_random_convolutions_match_direct_evaluation(rng, channels, filters, width, kernel, stride, padding,
                                                     mode, variant):
    b = make_backend(2048)
    recorder = b.attach_recorder()
    x = rng.normal(size=(channels, width, width))
    kern = random_kernel(rng, filters, channels, kernel)
    out = convolve(b, flatten(b, x), kern, stride=stride, padding=padding, grouped=mode == "grouped",
                   stride_variant=variant)
    np.testing.assert_allclose(unflatten(b, out), naive_conv(x, kern, stride, padding), atol=1e-9)
    keys = conv_keys(channels=channels, filters=filters, width=width, kernel=kernel, stride=stride,
                     padding=padding, mode=mode, stride_variant=variant, slot_count=2048)
    assert recorder.rotation_indices() <= keys


def test_generic_convolution_worked_example():
    b = make_backend(64)
    kern = KernelTensor(np.ones((1, 1, 2, 2)), np.zeros(1))
    x = np.arange(1.0, 10.0).reshape(1, 3, 3)
    out = conv_generic(b, flatten(b, x), kern)
    assert out.shape == (1, 2, 2)
    np.testing.assert_allclose(unflatten(b, out)[0], [[12.0, 16.0], [24.0, 28.0]], atol=1e-12)


@pytest.mark.parametrize("width", [4, 6, 8])
def test_conv_generic_is_the_unpadded_unit_stride_case(rng, width):
    b = make_backend(512)
    x = rng.normal(size=(2, width, width))
    kern = random_kernel(rng, 3, 2, 3)
    np.testing.assert_allclose(unflatten(b, conv_generic(b, flatten(b, x), kern)), naive_conv(x, kern),
                               atol=1e-9)


def test_output_slots_past_the_tensor_are_zero(rng):
    b = make_backend(512)
    x = rng.normal(size=(2, 6, 6))
    out = convolve(b, flatten(b, x), random_kernel(rng, 3, 2, 3), stride=1)
    slots = b.decode(out.data)
    np.testing.assert_allclose(slots[out.size:], 0.0, atol=1e-12)


def test_grouped_striding_needs_fewer_keys_than_per_channel():
    common = dict(channels=2, filters=4, width=9, kernel=3, stride=2, padding=0, slot_count=1024)
    grouped = conv_keys(mode="grouped", **common)
    per_channel = conv_keys(mode="generic", **common)
    assert len(grouped) < len(per_channel)


def test_grouped_falls_back_when_groups_do_not_fit(rng):
    b = make_backend(256)
    x = rng.normal(size=(3, 9, 9))
    kern = random_kernel(rng, 3, 3, 1)
    out = convolve(b, flatten(b, x), kern, stride=2, grouped=True)
    np.testing.assert_allclose(unflatten(b, out), naive_conv(x, kern, 2), atol=1e-9)
    assert out.level == b.depth_budget - 2
    assert conv_depth(kernel=1, stride=2, width=9, mode="grouped", channels=3, slot_count=256) == 2


def test_grouped_requires_filter_multiple(rng):
    b = make_backend(256)
    x = flatten(b, rng.normal(size=(2, 4, 4)))
    with pytest.raises(ShapeMismatchError):
        conv_grouped_stride(b, x, random_kernel(rng, 3, 2, 2), stride=2)


@pytest.mark.parametrize("channels,filters,width", [(1, 1, 4), (2, 3, 5), (3, 2, 6)])
def test_special_convolution_matches_padded_direct_evaluation(rng, channels, filters, width):
    b = make_backend(256)
    recorder = b.attach_recorder()
    x = rng.normal(size=(channels, width, width))
    kern = random_kernel(rng, filters, channels, 3)
    out = conv_special_3x3(b, flatten(b, x), kern)
    np.testing.assert_allclose(unflatten(b, out), naive_conv(x, kern, 1, 1), atol=1e-9)
    assert out.level == b.depth_budget - 2
    keys = conv_keys(channels=channels, filters=filters, width=width, kernel=3, padding=1,
                     mode="special3x3")
    assert recorder.rotation_indices() == keys
    assert len(keys) == 4 + (1 if channels > 1 else 0) + (filters - 1)


def _random_special_cases(count, seed=11):
    draw = np.random.default_rng(seed)
    return [
        (int(draw.integers(1, 5)), int(draw.integers(1, 5)), int(draw.choice([4, 6, 8])))
        for _ in range(count)
    ]


@pytest.mark.parametrize("channels,filters,width", _random_special_cases(100))
def test_random_special_convolutions_match_padded_direct_evaluation(rng, channels, filters, width):
    b = make_backend(2048)
    recorder = b.attach_recorder()
    x = rng.normal(size=(channels, width, width))
    kern = random_kernel(rng, filters, channels, 3)
    out = conv_special_3x3(b, flatten(b, x), kern)
    np.testing.assert_allclose(unflatten(b, out), naive_conv(x, kern, 1, 1), atol=1e-9)
    assert out.level == b.depth_budget - 2
    assert recorder.rotation_indices() <= conv_keys(channels=channels, filters=filters, width=width, kernel=3,
                                                    padding=1, mode="special3x3")


def test_single_tap_example():
    b = make_backend(16)
    kern = KernelTensor(np.array([[[[0.5]]]]), np.array([0.25]))
    out = convolve(b, flatten(b, np.arange(4.0).reshape(1, 2, 2)), kern)
    np.testing.assert_allclose(unflatten(b, out)[0], [[0.25, 0.75], [1.25, 1.75]])


def test_channel_mismatch_is_rejected(rng):
    b = make_backend(64)
    with pytest.raises(ShapeMismatchError):
        convolve(b, flatten(b, rng.normal(size=(2, 3, 3))), random_kernel(rng, 1, 3, 3))
