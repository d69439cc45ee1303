"""Average, global average and whole-channel pooling."""

from __future__ import annotations

from typing import Set

from ..errors import ShapeMismatchError
from ..packing.layout import PackedTensor
from ..packing.masks import range_mask, scale_mask
from ..simd.backend import SlotBackend
from ..simd.vectors import SlotVector
from .geometry import conv_output_width, nonzero, tap_offsets, window_sum_plan
from .striding import EXTRACT, horner_merge, stride_depth, stride_extract, stride_keys


def window_sum(backend: SlotBackend, v: SlotVector, n: int) -> SlotVector:
    """Slot ``p`` of the result holds ``v[p] + ... + v[p + n - 1]``."""
    partial, result = v, None
    offset, span = 0, 1
    bits = bin(n)[2:][::-1]
    for r, bit in enumerate(bits):
        if bit == "1":
            term = backend.rotate(partial, offset)
            result = term if result is None else backend.add(result, term)
            offset += span
        if r < len(bits) - 1:
            partial = backend.add(partial, backend.rotate(partial, span))
            span *= 2
    return result


def window_sum_keys(n: int) -> Set[int]:
    doubling, offsets = window_sum_plan(n)
    return nonzero(doubling + offsets)


def avg_pool(backend: SlotBackend, x: PackedTensor, kernel: int, stride: int,
             stride_variant: str = EXTRACT) -> PackedTensor:
    """k x k average: sum the k^2 shifted copies, scale by 1/k^2, then stride."""
    out_width = conv_output_width(x.width, kernel, stride, 0)
    total = x.data
    for off in tap_offsets(x.width, kernel)[1:]:
        total = backend.add(total, backend.rotate(x.data, off))
    scaled = backend.mult_plain(total, scale_mask(backend.slot_count, x.size, 1.0 / (kernel * kernel)))
    out = stride_extract(backend, scaled, stride_variant, channels=x.channels, width=x.width,
                         out_width=out_width, stride=stride)
    return PackedTensor(out, x.channels, out_width)


def avg_pool_keys(*, channels: int, width: int, kernel: int, stride: int,
                  stride_variant: str = EXTRACT) -> Set[int]:
    out_width = conv_output_width(width, kernel, stride, 0)
    keys = set(tap_offsets(width, kernel))
    keys |= stride_keys(stride_variant, channels=channels, width=width, out_width=out_width, stride=stride)
    return nonzero(keys)


def avg_pool_depth(*, width: int, kernel: int, stride: int, stride_variant: str = EXTRACT) -> int:
    return 1 + stride_depth(stride_variant, conv_output_width(width, kernel, stride, 0), stride)


def global_avg_pool(backend: SlotBackend, x: PackedTensor) -> PackedTensor:
    """Per-channel mean packed into slots ``0 .. C-1``."""
    block, slots = x.channel_stride, backend.slot_count
    summed = window_sum(backend, x.data, block)
    parts = [
        backend.mult_plain(summed, range_mask(slots, c * block, 1, 1.0 / block))
        for c in range(x.channels)
    ]
    return PackedTensor(horner_merge(backend, parts, block - 1), x.channels, 1)


def global_avg_pool_keys(*, channels: int, width: int) -> Set[int]:
    block = width * width
    keys = window_sum_keys(block)
    if channels > 1:
        keys.add(block - 1)
    return nonzero(keys)


def whole_channel_pool(backend: SlotBackend, x: PackedTensor, kernel: int) -> PackedTensor:
    """Average pooling whose window covers the whole channel (k = W)."""
    if kernel != x.width:
        raise ShapeMismatchError(
            f"whole-channel pooling needs kernel == width, got kernel {kernel} and width {x.width}"
        )
    block, slots = x.channel_stride, backend.slot_count
    scaled = backend.mult_plain(x.data, scale_mask(slots, x.size, 1.0 / block))
    summed = window_sum(backend, scaled, block)
    first = range_mask(slots, 0, 1)
    parts = []
    cur = summed
    for c in range(x.channels):
        if c > 0:
            cur = backend.rotate(cur, block)
        parts.append(backend.mult_plain(cur, first))
    return PackedTensor(horner_merge(backend, parts, -1), x.channels, 1)


def whole_channel_pool_keys(*, channels: int, width: int) -> Set[int]:
    block = width * width
    keys = window_sum_keys(block)
    if channels > 1:
        keys |= {block, -1}
    return nonzero(keys)
