"""Packed convolution: padding, generic taps, grouped striding, special 3x3."""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Set

import numpy as np

from ..errors import ShapeMismatchError, SlotCapacityError
from ..packing.layout import KernelTensor, PackedTensor, repeated_kernel_vector
from ..packing.masks import build_all_masks, extraction_mask, pad_to, range_mask, valid_region_mask
from ..simd.backend import SlotBackend
from ..simd.vectors import SlotVector
from .geometry import conv_output_width, nonzero, tap_offsets
from .striding import EXTRACT, horner_merge, stride_depth, stride_extract, stride_keys

logger = logging.getLogger(__name__)


def _check_kernel(x: PackedTensor, kern: KernelTensor) -> None:
    if not kern.is_conv:
        raise ShapeMismatchError("convolution needs (F, C, k, k) weights")
    if kern.in_channels != x.channels:
        raise ShapeMismatchError(
            f"kernel expects {kern.in_channels} input channels, tensor has {x.channels}"
        )


def _check_fits(channels: int, width: int, slot_count: int) -> None:
    if channels * width * width > slot_count:
        raise SlotCapacityError(
            f"output {channels}x{width}x{width} needs {channels * width * width} slots, "
            f"only {slot_count} available"
        )


def _bias_vector(bias: np.ndarray, block: int, slot_count: int) -> np.ndarray:
    return pad_to(np.repeat(bias, block), slot_count)


def _channel_sum(backend: SlotBackend, v: SlotVector, channels: int, block: int) -> SlotVector:
    """Fold the C channel blocks into block 0 with the single key ``block``."""
    acc, moving = v, v
    for _ in range(1, channels):
        moving = backend.rotate(moving, block)
        acc = backend.add(acc, moving)
    return acc


def _place(backend: SlotBackend, parts: List[SlotVector], block: int) -> SlotVector:
    """Move part ``f`` to slot ``f * block`` and sum."""
    out = parts[0]
    for f, part in enumerate(parts[1:], start=1):
        out = backend.add(out, backend.rotate(part, -f * block))
    return out


def pad_input(backend: SlotBackend, x: PackedTensor, padding: int) -> PackedTensor:
    """Surround every channel with ``padding`` rows and columns of zeros.

    Channel ``c`` is brought to the front with the key W^2, its rows are cut
    out with the key W and a first-row mask, re-spaced at the padded width
    with the key -W_p, and finally dropped at ``c*W_p^2 + P*W_p + P``.
    """
    if padding == 0:
        return x
    width, channels = x.width, x.channels
    padded = width + 2 * padding
    slots = backend.slot_count
    _check_fits(channels, padded, slots)
    row_mask = range_mask(slots, 0, width)

    parts: List[SlotVector] = []
    front = x.data
    for c in range(channels):
        if c > 0:
            front = backend.rotate(front, width * width)
        rows = []
        cur = front
        for i in range(width):
            if i > 0:
                cur = backend.rotate(cur, width)
            rows.append(backend.mult_plain(cur, row_mask))
        spaced = horner_merge(backend, rows, -padded)
        parts.append(backend.rotate(spaced, -(c * padded * padded + padding * padded + padding)))
    out = parts[0]
    for part in parts[1:]:
        out = backend.add(out, part)
    return PackedTensor(out, channels, padded)


def pad_keys(channels: int, width: int, padding: int) -> Set[int]:
    if padding == 0:
        return set()
    padded = width + 2 * padding
    keys = {-(c * padded * padded + padding * padded + padding) for c in range(channels)}
    if channels > 1:
        keys.add(width * width)
    if width > 1:
        keys |= {width, -padded}
    return nonzero(keys)


def _tap_products(backend: SlotBackend, rotated: Dict[int, SlotVector], kern: KernelTensor, f: int,
                  width: int) -> SlotVector:
    k = kern.kernel
    acc: Optional[SlotVector] = None
    for i in range(k):
        for j in range(k):
            kvec = repeated_kernel_vector(kern, f, (i, j), kern.in_channels, width, backend.slot_count)
            term = backend.mult_plain(rotated[i * width + j], kvec)
            acc = term if acc is None else backend.add(acc, term)
    return acc


def _rotate_taps(backend: SlotBackend, x: SlotVector, width: int, kernel: int) -> Dict[int, SlotVector]:
    return {off: backend.rotate(x, off) for off in tap_offsets(width, kernel)}


def convolve(backend: SlotBackend, x: PackedTensor, kern: KernelTensor, *, stride: int = 1,
             padding: int = 0, grouped: bool = False, stride_variant: str = EXTRACT) -> PackedTensor:
    """Convolution with arbitrary stride and padding.

    Steps: optional padding, the k^2 - 1 tap rotations, one plaintext product
    per tap and output channel, channel folding with the key W^2, stride
    extraction (one channel at a time, or ``C`` output channels at once when
    ``grouped``), placement of the output channels and the bias.
    """
    _check_kernel(x, kern)
    out_width = conv_output_width(x.width, kern.kernel, stride, padding)
    filters, channels, kernel = kern.out_channels, kern.in_channels, kern.kernel
    slots = backend.slot_count
    _check_fits(filters, out_width, slots)

    x = pad_input(backend, x, padding)
    width, block = x.width, x.width * x.width
    rotated = _rotate_taps(backend, x.data, width, kernel)

    def folded(f: int) -> SlotVector:
        return _channel_sum(backend, _tap_products(backend, rotated, kern, f, width), channels, block)

    group = channels if grouped else 1
    if group > 1 and group * out_width * stride * width > slots:
        logger.warning(
            f"Grouped striding needs {group * out_width * stride * width} slots; "
            f"falling back to per-channel striding"
        )
        group = 1

    if group == 1:
        parts = [
            stride_extract(backend, folded(f), stride_variant, channels=1, width=width,
                           out_width=out_width, stride=stride)
            for f in range(filters)
        ]
        out = _place(backend, parts, out_width * out_width)
    else:
        spacing = out_width * stride * width
        valid = valid_region_mask(slots, width, width - kernel + 1)
        groups = []
        for g0 in range(0, filters, group):
            members = [backend.mult_plain(folded(f), valid) for f in range(g0, g0 + group)]
            stacked = horner_merge(backend, members, -spacing)
            groups.append(
                stride_extract(backend, stacked, stride_variant, channels=group, width=width,
                               out_width=out_width, stride=stride, gap=spacing)
            )
        out = _place(backend, groups, group * out_width * out_width)

    out = backend.add_plain(out, _bias_vector(kern.bias, out_width * out_width, slots))
    return PackedTensor(out, filters, out_width)


def conv_generic(backend: SlotBackend, x: PackedTensor, kern: KernelTensor,
                 stride_variant: str = EXTRACT) -> PackedTensor:
    """Stride-1, unpadded convolution: W_out = W - k + 1."""
    return convolve(backend, x, kern, stride=1, padding=0, stride_variant=stride_variant)


def conv_grouped_stride(backend: SlotBackend, x: PackedTensor, kern: KernelTensor, *, stride: int,
                        padding: int = 0, stride_variant: str = EXTRACT) -> PackedTensor:
    """Strided convolution that extracts ``g = C`` output channels per pass."""
    _check_kernel(x, kern)
    if kern.out_channels % kern.in_channels != 0:
        raise ShapeMismatchError(
            f"out_channels {kern.out_channels} is not a multiple of the group size {kern.in_channels}"
        )
    return convolve(backend, x, kern, stride=stride, padding=padding, grouped=True,
                    stride_variant=stride_variant)


def conv_special_3x3(backend: SlotBackend, x: PackedTensor, kern: KernelTensor) -> PackedTensor:
    """Same-size 3x3 convolution without padding or extraction.

    The nine shifted copies come from four keys (+-W, +-1); the taps that
    would read across a border are zeroed by folding the matching mask into
    the kernel vector.
    """
    _check_kernel(x, kern)
    if kern.kernel != 3:
        raise ShapeMismatchError(f"special convolution needs a 3x3 kernel, got {kern.kernel}")
    width, channels, filters = x.width, x.channels, kern.out_channels
    block, slots = width * width, backend.slot_count
    _check_fits(filters, width, slots)

    r4 = x.data
    r1 = backend.rotate(r4, -width)
    r7 = backend.rotate(r4, width)
    r3 = backend.rotate(r4, -1)
    r5 = backend.rotate(r4, 1)
    r0 = backend.rotate(r1, -1)
    r2 = backend.rotate(r1, 1)
    r6 = backend.rotate(r7, -1)
    r8 = backend.rotate(r7, 1)
    rotated = [r0, r1, r2, r3, r4, r5, r6, r7, r8]

    masks = build_all_masks(block, channels, width)
    first_block = pad_to(extraction_mask(width, channels).values, slots)
    parts = []
    for f in range(filters):
        acc: Optional[SlotVector] = None
        for t in range(9):
            kvec = repeated_kernel_vector(kern, f, divmod(t, 3), channels, width, slots).values
            term = backend.mult_plain(rotated[t], kvec * pad_to(masks[t].values, slots))
            acc = term if acc is None else backend.add(acc, term)
        acc = _channel_sum(backend, acc, channels, block)
        parts.append(backend.mult_plain(acc, first_block))
    out = _place(backend, parts, block)
    out = backend.add_plain(out, _bias_vector(kern.bias, block, slots))
    return PackedTensor(out, filters, width)


def conv_keys(*, channels: int, filters: int, width: int, kernel: int, stride: int = 1,
              padding: int = 0, mode: str = "generic", stride_variant: str = EXTRACT,
              slot_count: Optional[int] = None) -> Set[int]:
    """Exact rotation indices used by the convolution paths above."""
    if mode == "special3x3":
        # r0, r2, r6 and r8 are derived from r1 and r7
        keys = {-width, width, -1, 1}
        if channels > 1:
            keys.add(width * width)
        keys |= {-f * width * width for f in range(1, filters)}
        return nonzero(keys)

    out_width = conv_output_width(width, kernel, stride, padding)
    keys = pad_keys(channels, width, padding)
    width = width + 2 * padding
    keys |= set(tap_offsets(width, kernel))
    if channels > 1:
        keys.add(width * width)

    group = channels if mode == "grouped" else 1
    if group > 1 and slot_count is not None and group * out_width * stride * width > slot_count:
        group = 1
    if group == 1:
        keys |= stride_keys(stride_variant, channels=1, width=width, out_width=out_width, stride=stride)
        keys |= {-f * out_width * out_width for f in range(1, filters)}
    else:
        spacing = out_width * stride * width
        keys.add(-spacing)
        keys |= stride_keys(stride_variant, channels=group, width=width, out_width=out_width,
                            stride=stride, gap=spacing)
        keys |= {-g * group * out_width * out_width for g in range(1, filters // group)}
    return nonzero(keys)


def conv_depth(*, kernel: int, stride: int = 1, padding: int = 0, width: int, mode: str = "generic",
               stride_variant: str = EXTRACT, channels: int = 1, slot_count: Optional[int] = None) -> int:
    if mode == "special3x3":
        return 2
    out_width = conv_output_width(width, kernel, stride, padding)
    padded = width + 2 * padding
    grouped = mode == "grouped" and channels > 1
    if grouped and slot_count is not None and channels * out_width * stride * padded > slot_count:
        grouped = False
    return (1 if padding else 0) + 1 + (1 if grouped else 0) + stride_depth(stride_variant, out_width, stride)
