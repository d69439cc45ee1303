"""Shape arithmetic and rotation-offset helpers shared by layers and planners."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Set, Tuple

from ..errors import ModelBuildError


@dataclass(frozen=True)
class Geometry:
    """Packed activation shape: C channels of W x W."""
    channels: int
    width: int

    @property
    def block(self) -> int:
        return self.width * self.width

    @property
    def size(self) -> int:
        return self.channels * self.width * self.width


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def log2_int(n: int) -> int:
    return n.bit_length() - 1


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def conv_output_width(width: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    """W_out = (W + 2P - k) / S + 1, rejecting non-divisible geometry."""
    span = width + 2 * padding - kernel
    if span < 0:
        raise ModelBuildError(f"kernel {kernel} larger than padded width {width + 2 * padding}")
    if span % stride != 0:
        raise ModelBuildError(
            f"non-divisible geometry: (W + 2P - k) = {span} is not a multiple of stride {stride}"
        )
    return span // stride + 1


def tap_offsets(width: int, kernel: int) -> List[int]:
    """Rotation offset ``i*W + j`` of every kernel tap, row-major."""
    return [i * width + j for i in range(kernel) for j in range(kernel)]


def window_sum_plan(n: int) -> Tuple[List[int], List[int]]:
    """Doubling steps and term offsets for summing ``n`` consecutive slots.

    Partial window sums double in width (1, 2, 4, ...); every set bit of
    ``n`` contributes the current partial rotated by the running offset.
    """
    bits = bin(n)[2:][::-1]
    doubling: List[int] = []
    offsets: List[int] = []
    offset, width = 0, 1
    for r, bit in enumerate(bits):
        if bit == "1":
            offsets.append(offset)
            offset += width
        if r < len(bits) - 1:
            doubling.append(width)
            width *= 2
    return doubling, offsets


def fc_tree_steps(n: int) -> List[int]:
    """Power-of-two offsets that fold ``n`` slots into slot 0."""
    steps = []
    step = 1
    while step < next_power_of_two(n):
        steps.append(step)
        step *= 2
    return steps


def fc_merge_chunk(outputs: int, budget: int) -> Optional[int]:
    """Chunk size for multi-pass merging, or ``None`` when one pass fits the budget."""
    if budget < 1:
        raise ModelBuildError(f"merge_budget must be at least 1, got {budget}")
    if outputs - 1 <= budget:
        return None
    return budget


def fc_merge_keys(outputs: int, budget: int) -> Set[int]:
    chunk = fc_merge_chunk(outputs, budget)
    if chunk is None:
        return {-k for k in range(1, outputs)}
    return {-j for j in range(1, chunk)} | {-chunk}


def nonzero(indices: Iterable[int]) -> Set[int]:
    return {int(i) for i in indices if i != 0}
