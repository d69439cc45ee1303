import numpy as np
import pytest

from cipherconv.errors import ShapeMismatchError
from cipherconv.layers.geometry import window_sum_plan
from cipherconv.layers.pooling import (
    avg_pool,
    avg_pool_depth,
    avg_pool_keys,
    global_avg_pool,
    global_avg_pool_keys,
    whole_channel_pool,
    whole_channel_pool_keys,
    window_sum,
)
from cipherconv.packing.layout import flatten, unflatten
from cipherconv.services.reference import avg_pool2d

from .conftest import make_backend


@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 25])
def test_window_sum_adds_consecutive_slots(n):
    b = make_backend(64)
    values = np.arange(64, dtype=float)
    out = b.decode(window_sum(b, b.encode(values), n))
    assert out[0] == values[:n].sum()
    assert out[10] == values[10:10 + n].sum()


def test_window_sum_plan_uses_logarithmic_steps():
    doubling, offsets = window_sum_plan(25)
    assert doubling == [1, 2, 4, 8]
    assert offsets == [0, 1, 9]


@pytest.mark.parametrize(
    "channels,width,kernel,stride,variant",
    [(2, 8, 2, 2, "extract"), (2, 8, 2, 2, "masked"), (3, 6, 3, 3, "extract"), (1, 5, 3, 1, "extract")],
)
def test_avg_pool_matches_windowed_mean(rng, channels, width, kernel, stride, variant):
    b = make_backend(256)
    recorder = b.attach_recorder()
    x = rng.normal(size=(channels, width, width))
    out = avg_pool(b, flatten(b, x), kernel, stride, variant)
    np.testing.assert_allclose(unflatten(b, out), avg_pool2d(x, kernel, stride), atol=1e-12)
    assert out.level == b.depth_budget - avg_pool_depth(width=width, kernel=kernel, stride=stride,
                                                        stride_variant=variant)
    assert recorder.rotation_indices() <= avg_pool_keys(channels=channels, width=width, kernel=kernel,
                                                        stride=stride, stride_variant=variant)


def test_global_pool_packs_channel_means(rng):
    b = make_backend(256)
    recorder = b.attach_recorder()
    x = rng.normal(size=(4, 5, 5))
    out = global_avg_pool(b, flatten(b, x))
    assert out.shape == (4, 1, 1)
    assert out.level == b.depth_budget - 1
    np.testing.assert_allclose(b.decode(out.data)[:4], x.mean(axis=(1, 2)), atol=1e-12)
    assert recorder.rotation_indices() <= global_avg_pool_keys(channels=4, width=5)


def test_whole_channel_pool_packs_channel_means(rng):
    b = make_backend(256)
    recorder = b.attach_recorder()
    x = rng.normal(size=(3, 4, 4))
    out = whole_channel_pool(b, flatten(b, x), 4)
    assert out.level == b.depth_budget - 2
    np.testing.assert_allclose(b.decode(out.data)[:3], x.mean(axis=(1, 2)), atol=1e-12)
    np.testing.assert_allclose(b.decode(out.data)[3:], 0.0, atol=1e-12)
    assert recorder.rotation_indices() <= whole_channel_pool_keys(channels=3, width=4)


def test_whole_channel_pool_needs_full_window(rng):
    b = make_backend(64)
    with pytest.raises(ShapeMismatchError):
        whole_channel_pool(b, flatten(b, rng.normal(size=(1, 4, 4))), 2)
