"""Post-convolution stride extraction.

Both variants take a vector whose channel ``c`` lives at ``c*gap + i*W + j``
and return the sampled outputs ``(c, a*S, b*S)`` packed channel-major at
``c*W_out^2 + a*W_out + b`` with every other slot zero.

* ``extract``: each sampled element (or whole row when S = 1) is
  isolated by one mask multiplication, then rows and channels are slid into
  place with a few reused rotation keys. Depth 1.
* ``masked``: one stride-aligned mask, ``log2(W_out)``
  rotate-add-mask compaction rounds inside each row, then row masks. Needs a
  power-of-two ``W_out`` when S > 1. Multichannel layouts whose channel gap
  is not ``S*W_out*W`` take one extra key to close the gap between channels.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Set

from ..simd.backend import SlotBackend
from ..simd.vectors import SlotVector
from ..packing.masks import compaction_mask, range_mask, stride_aligned_mask
from .geometry import is_power_of_two, log2_int, nonzero

logger = logging.getLogger(__name__)

EXTRACT = "extract"
MASKED = "masked"


def horner_merge(backend: SlotBackend, segments: List[SlotVector], step: int) -> SlotVector:
    """Sum ``segments[i]`` rotated by ``i * step`` using the single key ``step``."""
    acc = segments[-1]
    for seg in reversed(segments[:-1]):
        acc = backend.add(backend.rotate(acc, step), seg)
    return acc


def effective_variant(variant: str, out_width: int, stride: int) -> str:
    if variant == MASKED and stride > 1 and not is_power_of_two(out_width):
        return EXTRACT
    return variant


def _is_tall(channels: int, width: int, gap: int, out_width: int, stride: int) -> bool:
    return channels > 1 and gap == out_width * stride * width


def _merge_rows(backend: SlotBackend, rows: List[List[SlotVector]], width: int, gap: int,
                out_width: int, stride: int) -> SlotVector:
    """Slide per-channel row segments into channel-major order."""
    channels = len(rows)
    row_step = stride * width - out_width
    if channels == 1 or _is_tall(channels, width, gap, out_width, stride):
        return horner_merge(backend, [seg for chan in rows for seg in chan], row_step)
    packed = [horner_merge(backend, chan, row_step) for chan in rows]
    return horner_merge(backend, packed, gap - out_width * out_width)


def _merge_keys(channels: int, width: int, gap: int, out_width: int, stride: int) -> Set[int]:
    keys: Set[int] = set()
    row_step = stride * width - out_width
    if channels == 1 or _is_tall(channels, width, gap, out_width, stride):
        if channels * out_width > 1:
            keys.add(row_step)
    else:
        if out_width > 1:
            keys.add(row_step)
        keys.add(gap - out_width * out_width)
    return nonzero(keys)


def stride_extract_v1(backend: SlotBackend, v: SlotVector, *, channels: int, width: int,
                      out_width: int, stride: int, gap: Optional[int] = None) -> SlotVector:
    gap = width * width if gap is None else gap
    slots = backend.slot_count
    rows: List[List[SlotVector]] = []
    for c in range(channels):
        chan: List[SlotVector] = []
        for a in range(out_width):
            base = c * gap + a * stride * width
            if stride == 1:
                chan.append(backend.mult_plain(v, range_mask(slots, base, out_width)))
                continue
            elements = [
                backend.mult_plain(v, range_mask(slots, base + b * stride, 1))
                for b in range(out_width)
            ]
            chan.append(horner_merge(backend, elements, stride - 1))
        rows.append(chan)
    return _merge_rows(backend, rows, width, gap, out_width, stride)


def stride_extract_v2(backend: SlotBackend, v: SlotVector, *, channels: int, width: int,
                      out_width: int, stride: int, gap: Optional[int] = None) -> SlotVector:
    gap = width * width if gap is None else gap
    slots = backend.slot_count
    if stride > 1 and not is_power_of_two(out_width):
        logger.warning(
            f"Masked striding needs a power-of-two output width, got {out_width}; using extract"
        )
        recorder = getattr(backend, "recorder", None)
        if recorder is not None:
            recorder.annotate(f"stride fallback: masked -> extract (W_out={out_width})")
        return stride_extract_v1(backend, v, channels=channels, width=width,
                                 out_width=out_width, stride=stride, gap=gap)

    cur = backend.mult_plain(v, stride_aligned_mask(slots, channels, width, gap, out_width, stride))
    if stride > 1:
        for rnd in range(log2_int(out_width)):
            moved = backend.rotate(cur, (1 << rnd) * (stride - 1))
            cur = backend.mult_plain(
                backend.add(cur, moved),
                compaction_mask(slots, channels, width, gap, out_width, stride, rnd),
            )
    rows = [
        [
            backend.mult_plain(cur, range_mask(slots, c * gap + a * stride * width, out_width))
            for a in range(out_width)
        ]
        for c in range(channels)
    ]
    return _merge_rows(backend, rows, width, gap, out_width, stride)


def stride_extract(backend: SlotBackend, v: SlotVector, variant: str, *, channels: int, width: int,
                   out_width: int, stride: int, gap: Optional[int] = None) -> SlotVector:
    if variant == MASKED:
        return stride_extract_v2(backend, v, channels=channels, width=width,
                                 out_width=out_width, stride=stride, gap=gap)
    return stride_extract_v1(backend, v, channels=channels, width=width,
                             out_width=out_width, stride=stride, gap=gap)


def stride_keys(variant: str, *, channels: int, width: int, out_width: int, stride: int,
                gap: Optional[int] = None) -> Set[int]:
    """Exact rotation indices used by :func:`stride_extract`."""
    gap = width * width if gap is None else gap
    variant = effective_variant(variant, out_width, stride)
    keys = _merge_keys(channels, width, gap, out_width, stride)
    if stride > 1:
        if variant == EXTRACT:
            if out_width > 1:
                keys.add(stride - 1)
        else:
            keys |= {(1 << r) * (stride - 1) for r in range(log2_int(out_width))}
    return nonzero(keys)


def stride_depth(variant: str, out_width: int, stride: int) -> int:
    variant = effective_variant(variant, out_width, stride)
    if variant == EXTRACT:
        return 1
    return 2 + (log2_int(out_width) if stride > 1 else 0)
