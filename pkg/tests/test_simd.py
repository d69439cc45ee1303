import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cipherconv.errors import (
    DepthExhaustedError,
    InvalidRotationError,
    MissingRotationKeyError,
    ShapeMismatchError,
    SlotCapacityError,
)
from cipherconv.simd.trace import TraceRecorder
from cipherconv.simd.vectors import MaskVector, SlotVector

from .conftest import make_backend


def test_rotate_moves_slots_left():
    b = make_backend(8)
    v = b.encode(np.arange(8))
    assert b.decode(b.rotate(v, 3)).tolist() == [3, 4, 5, 6, 7, 0, 1, 2]
    assert b.decode(b.rotate(v, -1)).tolist() == [7, 0, 1, 2, 3, 4, 5, 6]


def test_rotate_by_zero_is_identity_and_unrecorded():
    b = make_backend(8)
    recorder = b.attach_recorder()
    v = b.encode(np.arange(8))
    assert b.rotate(v, 0) is v
    assert len(recorder) == 0


@pytest.mark.parametrize("t", [8, -8, 100])
def test_rotation_outside_range_is_rejected(t):
    b = make_backend(8)
    with pytest.raises(InvalidRotationError):
        b.rotate(b.encode([1.0]), t)


@given(st.integers(-63, 63), st.integers(-63, 63))
@settings(max_examples=60, deadline=None)
def test_rotations_compose(a, c):
    b = make_backend(64)
    values = np.arange(64, dtype=float)
    v = b.encode(values)
    out = b.decode(b.rotate(b.rotate(v, a), c))
    np.testing.assert_array_equal(out, np.roll(values, -(a + c)))


def test_rotation_keeps_level():
    b = make_backend(8, depth=3)
    v = b.encode(np.ones(8), level=2)
    assert b.rotate(v, 1).level == 2


def test_multiplication_consumes_levels():
    b = make_backend(8, depth=2)
    v = b.encode(np.arange(8))
    once = b.mult_plain(v, np.full(8, 2.0))
    assert once.level == 1
    twice = b.mult_cipher(once, once)
    assert twice.level == 0
    np.testing.assert_allclose(b.decode(twice), (2 * np.arange(8)) ** 2)
    with pytest.raises(DepthExhaustedError):
        b.mult_plain(twice, np.ones(8))


def test_add_takes_lower_level_and_add_plain_is_free():
    b = make_backend(4, depth=5)
    hi = b.encode([1, 2, 3, 4])
    lo = b.mult_const(hi, 1.0)
    assert b.add(hi, lo).level == lo.level
    assert b.sub(hi, lo).level == lo.level
    assert b.add_plain(hi, np.ones(4)).level == hi.level
    np.testing.assert_allclose(b.decode(b.sub(hi, lo)), 0.0)


def test_bootstrap_restores_budget():
    b = make_backend(4, depth=3)
    v = b.mult_const(b.mult_const(b.encode([1, 2]), 2.0), 0.5)
    assert v.level == 1
    fresh = b.bootstrap(v)
    assert fresh.level == 3
    np.testing.assert_allclose(b.decode(fresh)[:2], [1, 2])


def test_encode_rejects_oversize_and_pads_with_zeros():
    b = make_backend(4)
    np.testing.assert_array_equal(b.decode(b.encode([5.0])), [5, 0, 0, 0])
    with pytest.raises(SlotCapacityError):
        b.encode(np.ones(5))


def test_plaintext_length_must_match():
    b = make_backend(4)
    with pytest.raises(ShapeMismatchError):
        b.mult_plain(b.encode([1.0]), np.ones(3))


def test_resident_keys_are_enforced():
    b = make_backend(8)
    b.set_resident_keys([1, -1])
    v = b.encode(np.arange(8))
    b.rotate(v, 1)
    with pytest.raises(MissingRotationKeyError) as info:
        b.rotate(v, 2)
    assert info.value.index == 2
    b.set_resident_keys(None)
    b.rotate(v, 2)


def test_recorder_scopes_tag_events():
    b = make_backend(8)
    recorder = b.attach_recorder(TraceRecorder())
    v = b.encode(np.arange(8))
    with recorder.scope(layer=3, label="conv1"):
        b.rotate(v, 2)
        with recorder.scope(label="inner"):
            b.mult_const(v, 2.0)
    b.rotate(v, -2)
    rotate, mult, outside = recorder.events
    assert (rotate.kind, rotate.index, rotate.layer, rotate.label) == ("rotate", 2, 3, "conv1")
    assert (mult.kind, mult.layer, mult.label) == ("mult_plain", 3, "inner")
    assert (mult.level_before, mult.level_after) == (25, 24)
    assert outside.layer is None
    assert recorder.rotation_indices() == {2, -2}


def test_noise_is_seeded_and_small():
    a = make_backend(16, noise_sigma=1e-6, seed=7)
    c = make_backend(16, noise_sigma=1e-6, seed=7)
    va = a.decode(a.mult_const(a.encode(np.ones(16)), 3.0))
    vc = c.decode(c.mult_const(c.encode(np.ones(16)), 3.0))
    np.testing.assert_array_equal(va, vc)
    assert not np.array_equal(va, np.full(16, 3.0))
    np.testing.assert_allclose(va, 3.0, atol=1e-4)


def test_vectors_are_immutable():
    v = SlotVector(np.arange(4.0), 1)
    with pytest.raises(ValueError):
        v.slots[0] = 9.0
    with pytest.raises(ValueError):
        SlotVector(np.zeros(4), -1)
    with pytest.raises(ValueError):
        MaskVector(np.array([0.0, 0.5]))
