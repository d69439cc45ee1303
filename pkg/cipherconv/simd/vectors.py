"""Immutable slot-vector value types."""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Union

import numpy as np

_ids = itertools.count(1)
_ids_lock = threading.Lock()


def next_vector_id() -> int:
    with _ids_lock:
        return next(_ids)


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SlotVector:
    """Ciphertext stand-in: S real slots plus the remaining multiplicative level."""
    slots: np.ndarray
    level: int
    id: int = field(default_factory=next_vector_id)

    def __post_init__(self):
        object.__setattr__(self, "slots", _frozen_array(self.slots))
        if self.level < 0:
            raise ValueError(f"level must be non-negative, got {self.level}")

    @property
    def slot_count(self) -> int:
        return int(self.slots.shape[0])

    def __repr__(self) -> str:
        return f"SlotVector(id={self.id}, slots={self.slot_count}, level={self.level})"


@dataclass(frozen=True, eq=False)
class PlainVector:
    """Unencrypted companion vector (kernel values, masks, constants)."""
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True, eq=False)
class MaskVector(PlainVector):
    """Binary plaintext vector."""

    def __post_init__(self):
        super().__post_init__()
        if not np.all((self.values == 0.0) | (self.values == 1.0)):
            raise ValueError("mask entries must be 0.0 or 1.0")


PlainLike = Union[PlainVector, np.ndarray]


def plain_values(p: PlainLike) -> np.ndarray:
    return p.values if isinstance(p, PlainVector) else np.asarray(p, dtype=np.float64)
