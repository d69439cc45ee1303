"""Channel-major SIMD layout of (C, W, W) tensors.

Slot ``c*W*W + i*W + j`` holds ``tensor[c][i][j]``; slots past ``C*W*W`` are
zero right after flattening.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ShapeMismatchError, SlotCapacityError
from ..simd.backend import SlotBackend
from ..simd.vectors import PlainVector, SlotVector


@dataclass(frozen=True)
class PackedTensor:
    """A slot vector plus its (C, W) layout descriptor."""
    data: SlotVector
    channels: int
    width: int

    def __post_init__(self):
        if self.channels < 1 or self.width < 1:
            raise ShapeMismatchError(f"invalid layout C={self.channels}, W={self.width}")
        if self.size > self.data.slot_count:
            raise SlotCapacityError(
                f"C*W^2 = {self.size} exceeds the slot count {self.data.slot_count}"
            )

    @property
    def channel_stride(self) -> int:
        return self.width * self.width

    @property
    def size(self) -> int:
        return self.channels * self.width * self.width

    @property
    def level(self) -> int:
        return self.data.level

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.channels, self.width, self.width)

    def with_data(self, data: SlotVector) -> "PackedTensor":
        return PackedTensor(data, self.channels, self.width)


@dataclass(frozen=True)
class KernelTensor:
    """Convolution weights (F, C, k, k) with bias (F), or FC weights (m, n) with bias (m)."""
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim not in (2, 4):
            raise ShapeMismatchError(f"weights must be 2-D or 4-D, got shape {w.shape}")
        if w.ndim == 4 and (w.shape[2] != w.shape[3] or min(w.shape) < 1):
            raise ShapeMismatchError(f"convolution weights must be (F, C, k, k), got {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise ShapeMismatchError(f"bias has {b.shape[0]} entries, expected {w.shape[0]}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def is_conv(self) -> bool:
        return self.weights.ndim == 4

    @property
    def out_channels(self) -> int:
        return int(self.weights.shape[0])

    @property
    def in_channels(self) -> int:
        return int(self.weights.shape[1])

    @property
    def kernel(self) -> int:
        return int(self.weights.shape[2]) if self.is_conv else 1


def flatten(backend: SlotBackend, tensor: np.ndarray, level: Optional[int] = None) -> PackedTensor:
    """Pack a (C, W, W) tensor channel-major into one slot vector."""
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise ShapeMismatchError(f"expected a (C, W, W) tensor, got shape {arr.shape}")
    channels, height, width = arr.shape
    if height != width:
        raise ShapeMismatchError(f"packed tensors must be square, got {height}x{width}")
    if channels * width * width > backend.slot_count:
        raise SlotCapacityError(
            f"tensor of {channels}x{width}x{width} needs {channels * width * width} slots, "
            f"only {backend.slot_count} available"
        )
    return PackedTensor(backend.encode(arr.reshape(-1), level=level), channels, width)


def unflatten(backend: SlotBackend, packed: PackedTensor) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    slots = backend.decode(packed.data)
    return slots[: packed.size].reshape(packed.shape).copy()


def repeated_kernel_vector(kern: KernelTensor, f: int, tap: Tuple[int, int], channels: int,
                           width: int, slot_count: int) -> PlainVector:
    """Plaintext whose channel block ``c`` carries ``kern.weights[f, c, i, j]``."""
    i, j = tap
    if not kern.is_conv:
        raise ShapeMismatchError("repeated kernel vectors need a convolution kernel")
    k = kern.kernel
    if not (0 <= f < kern.out_channels and 0 <= i < k and 0 <= j < k):
        raise IndexError(f"kernel index (f={f}, tap=({i},{j})) outside F={kern.out_channels}, k={k}")
    if channels != kern.in_channels:
        raise ShapeMismatchError(f"kernel has {kern.in_channels} input channels, layout has {channels}")
    block = width * width
    if channels * block > slot_count:
        raise SlotCapacityError(f"{channels} blocks of {block} do not fit in {slot_count} slots")
    values = np.zeros(slot_count)
    values[: channels * block] = np.repeat(kern.weights[f, :, i, j], block)
    return PlainVector(values)
