"""Binary masks and constant plaintexts used by the packed layers."""

from __future__ import annotations

from functools import lru_cache
from typing import List, Tuple

import numpy as np

from ..simd.vectors import MaskVector


def build_mask(sp: int, ep: int, w: int, m: int, C: int) -> MaskVector:
    """Mask of ``m`` entries repeated for ``C`` channels.

    Emits ``sp`` zeros, then blocks of ``w`` ones followed by one zero until
    the length reaches ``m - ep``, truncates or zero-pads to ``m`` and clears
    the last ``ep`` entries.
    """
    return MaskVector(_build_mask(int(sp), int(ep), int(w), int(m), int(C)))


@lru_cache(maxsize=1024)
def _build_mask(sp: int, ep: int, w: int, m: int, C: int) -> np.ndarray:
    mask: List[float] = [0.0] * max(sp, 0)
    while len(mask) < m - ep:
        mask.extend([1.0] * max(w, 0))
        mask.append(0.0)
    del mask[m:]
    mask.extend([0.0] * (m - len(mask)))
    for i in range(min(max(ep, 0), m)):
        mask[m - i - 1] = 0.0
    out = np.tile(np.array(mask, dtype=np.float64), max(C, 0))
    out.setflags(write=False)
    return out


def build_all_masks(m: int, C: int, W: int) -> Tuple[MaskVector, ...]:
    """The nine masks of the special 3x3 convolution, ordered by kernel tap."""
    return (
        build_mask(W + 1, 0, W - 1, m, C),
        build_mask(W, 0, m, m, C),
        build_mask(W, 0, W - 1, m, C),
        build_mask(1, 0, W - 1, m, C),
        build_mask(0, 0, m, m, C),
        build_mask(0, 1, W - 1, m, C),
        build_mask(1, W - 1, W - 1, m, C),
        build_mask(0, W, m, m, C),
        build_mask(0, W + 1, W - 1, m, C),
    )


def extraction_mask(W: int, C: int) -> MaskVector:
    """W^2 ones followed by zeros through slot C*W^2 (first channel block)."""
    values = np.zeros(C * W * W)
    values[: W * W] = 1.0
    return MaskVector(values)


def pad_to(values: np.ndarray, slot_count: int) -> np.ndarray:
    out = np.zeros(slot_count)
    out[: values.shape[0]] = values
    return out


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@lru_cache(maxsize=4096)
def range_mask(slot_count: int, start: int, length: int, value: float = 1.0) -> np.ndarray:
    """``value`` on ``[start, start + length)``, zero elsewhere."""
    out = np.zeros(slot_count)
    out[start:start + length] = value
    return _frozen(out)


@lru_cache(maxsize=256)
def scale_mask(slot_count: int, n: int, value: float) -> np.ndarray:
    """Constant ``value`` over the ``n`` active slots."""
    return range_mask(slot_count, 0, n, value)


@lru_cache(maxsize=256)
def valid_region_mask(slot_count: int, width: int, valid: int) -> np.ndarray:
    """Ones on rows and columns ``< valid`` of the first channel block."""
    out = np.zeros(slot_count)
    for i in range(valid):
        out[i * width:i * width + valid] = 1.0
    return _frozen(out)


@lru_cache(maxsize=256)
def stride_aligned_mask(slot_count: int, channels: int, width: int, gap: int,
                        out_width: int, stride: int) -> np.ndarray:
    """Ones at every sampled position ``c*gap + a*S*W + b*S``."""
    out = np.zeros(slot_count)
    offsets = np.arange(out_width) * stride
    for c in range(channels):
        for a in range(out_width):
            out[c * gap + a * stride * width + offsets] = 1.0
    return _frozen(out)


@lru_cache(maxsize=1024)
def compaction_mask(slot_count: int, channels: int, width: int, gap: int, out_width: int,
                    stride: int, rnd: int) -> np.ndarray:
    """Positions held after compaction round ``rnd``.

    Element ``b`` of a row sits at ``b*S - (b mod 2^(rnd+1))*(S-1)``, i.e. the
    row is made of contiguous runs of ``2^(rnd+1)`` elements.
    """
    out = np.zeros(slot_count)
    period = 1 << (rnd + 1)
    b = np.arange(out_width)
    offsets = b * stride - (b % period) * (stride - 1)
    for c in range(channels):
        for a in range(out_width):
            out[c * gap + a * stride * width + offsets] = 1.0
    return _frozen(out)
