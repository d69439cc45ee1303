"""Slot-vector backend contract and the cleartext CKKS simulator."""

from __future__ import annotations

import logging
import threading
from typing import FrozenSet, Iterable, Optional, Protocol, runtime_checkable

import numpy as np

from ..errors import (
    DepthExhaustedError,
    InvalidRotationError,
    MissingRotationKeyError,
    ShapeMismatchError,
    SlotCapacityError,
)
from ..models.schemas import ContextConfig
from .trace import TraceRecorder
from .vectors import PlainLike, SlotVector, plain_values

logger = logging.getLogger(__name__)


@runtime_checkable
class SlotBackend(Protocol):
    """Operations the secure layers are written against."""

    @property
    def slot_count(self) -> int: ...

    @property
    def depth_budget(self) -> int: ...

    def encode(self, values: Iterable[float], level: Optional[int] = None) -> SlotVector: ...

    def decode(self, v: SlotVector) -> np.ndarray: ...

    def rotate(self, v: SlotVector, t: int) -> SlotVector: ...

    def add(self, a: SlotVector, b: SlotVector) -> SlotVector: ...

    def sub(self, a: SlotVector, b: SlotVector) -> SlotVector: ...

    def add_plain(self, v: SlotVector, p: PlainLike) -> SlotVector: ...

    def mult_plain(self, v: SlotVector, p: PlainLike) -> SlotVector: ...

    def mult_cipher(self, a: SlotVector, b: SlotVector) -> SlotVector: ...

    def bootstrap(self, v: SlotVector) -> SlotVector: ...

    def mult_const(self, v: SlotVector, value: float) -> SlotVector: ...

    def add_const(self, v: SlotVector, value: float) -> SlotVector: ...

    def attach_recorder(self, recorder: Optional[TraceRecorder] = None) -> TraceRecorder: ...

    def set_resident_keys(self, indices: Optional[Iterable[int]]) -> None: ...


class SimulatorBackend:
    """Cleartext stand-in for a CKKS evaluator.

    Slots are float64 arrays. Levels are tracked exactly: plaintext and
    ciphertext multiplications consume one level, bootstrapping restores the
    full budget. An optional zero-mean Gaussian perturbation is added after
    every multiplication and bootstrap when ``noise_sigma`` is positive.
    """

    def __init__(self, context: ContextConfig, noise_sigma: float = 0.0, seed: Optional[int] = None):
        if noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {noise_sigma}")
        self.context = context
        self.noise_sigma = float(noise_sigma)
        self._rng = np.random.default_rng(seed)
        self._rng_lock = threading.Lock()
        self._recorder: Optional[TraceRecorder] = None
        self._resident: Optional[FrozenSet[int]] = None

    @property
    def slot_count(self) -> int:
        return self.context.slot_count

    @property
    def depth_budget(self) -> int:
        return self.context.depth_budget

    @property
    def recorder(self) -> Optional[TraceRecorder]:
        return self._recorder

    # Trace and key residency

    def attach_recorder(self, recorder: Optional[TraceRecorder] = None) -> TraceRecorder:
        """Attach a recorder (a fresh one when none is given) and return it."""
        self._recorder = recorder if recorder is not None else TraceRecorder()
        return self._recorder

    def set_resident_keys(self, indices: Optional[Iterable[int]]) -> None:
        """Restrict rotations to ``indices``; ``None`` lifts the restriction."""
        self._resident = None if indices is None else frozenset(int(i) for i in indices)

    def _record(self, kind: str, **kwargs) -> None:
        if self._recorder is not None:
            self._recorder.record(kind, **kwargs)

    # Encryption layer

    def encode(self, values: Iterable[float], level: Optional[int] = None) -> SlotVector:
        """Zero-pad ``values`` to the slot count and wrap them at ``level``."""
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.shape[0] > self.slot_count:
            raise SlotCapacityError(f"{arr.shape[0]} values do not fit in {self.slot_count} slots")
        slots = np.zeros(self.slot_count)
        slots[: arr.shape[0]] = arr
        return SlotVector(slots, self.depth_budget if level is None else level)

    def decode(self, v: SlotVector) -> np.ndarray:
        return np.array(v.slots)

    # Arithmetic

    def _check_plain(self, p: PlainLike) -> np.ndarray:
        values = plain_values(p)
        if values.shape != (self.slot_count,):
            raise ShapeMismatchError(
                f"plaintext has {values.shape[0] if values.ndim else 0} slots, expected {self.slot_count}"
            )
        return values

    def _check_pair(self, a: SlotVector, b: SlotVector) -> None:
        if a.slot_count != b.slot_count:
            raise ShapeMismatchError(f"slot counts differ: {a.slot_count} vs {b.slot_count}")

    def _noise(self, slots: np.ndarray) -> np.ndarray:
        if self.noise_sigma == 0.0:
            return slots
        with self._rng_lock:
            return slots + self._rng.normal(0.0, self.noise_sigma, size=slots.shape)

    def rotate(self, v: SlotVector, t: int) -> SlotVector:
        """Left-rotate: ``out[j] = v[(j + t) mod S]``."""
        t = int(t)
        if abs(t) >= v.slot_count:
            raise InvalidRotationError(f"rotation index {t} outside (-{v.slot_count}, {v.slot_count})")
        if t == 0:
            return v
        if self._resident is not None and t not in self._resident:
            raise MissingRotationKeyError(t)
        self._record("rotate", index=t, level_before=v.level, level_after=v.level)
        return SlotVector(np.roll(v.slots, -t), v.level)

    def add(self, a: SlotVector, b: SlotVector) -> SlotVector:
        self._check_pair(a, b)
        return SlotVector(a.slots + b.slots, min(a.level, b.level))

    def sub(self, a: SlotVector, b: SlotVector) -> SlotVector:
        self._check_pair(a, b)
        return SlotVector(a.slots - b.slots, min(a.level, b.level))

    def add_plain(self, v: SlotVector, p: PlainLike) -> SlotVector:
        return SlotVector(v.slots + self._check_plain(p), v.level)

    def mult_plain(self, v: SlotVector, p: PlainLike) -> SlotVector:
        values = self._check_plain(p)
        if v.level < 1:
            raise DepthExhaustedError("mult_plain", level=v.level)
        self._record("mult_plain", level_before=v.level, level_after=v.level - 1)
        return SlotVector(self._noise(v.slots * values), v.level - 1)

    def mult_cipher(self, a: SlotVector, b: SlotVector) -> SlotVector:
        self._check_pair(a, b)
        level = min(a.level, b.level)
        if level < 1:
            raise DepthExhaustedError("mult_cipher", level=level)
        self._record("mult_cipher", level_before=level, level_after=level - 1)
        return SlotVector(self._noise(a.slots * b.slots), level - 1)

    def bootstrap(self, v: SlotVector) -> SlotVector:
        self._record("bootstrap", level_before=v.level, level_after=self.depth_budget)
        return SlotVector(self._noise(v.slots), self.depth_budget)

    def mult_const(self, v: SlotVector, value: float) -> SlotVector:
        """Multiply every slot by one scalar encoded as a plaintext."""
        return self.mult_plain(v, np.full(self.slot_count, float(value)))

    def add_const(self, v: SlotVector, value: float) -> SlotVector:
        return self.add_plain(v, np.full(self.slot_count, float(value)))
