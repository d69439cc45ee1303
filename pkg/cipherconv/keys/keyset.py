"""Rotation-key sets with usage accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Optional, Tuple

from ..config.settings import settings


@dataclass
class KeySet:
    """Sorted set of nonzero rotation indices.

    ``usage`` maps each index to the number of layers that reference it.
    """
    usage: Dict[int, int] = field(default_factory=dict)
    bytes_per_key: int = field(default_factory=lambda: settings.BYTES_PER_KEY)

    def __post_init__(self):
        if 0 in self.usage:
            raise ValueError("rotation index 0 never needs a key")
        if self.bytes_per_key <= 0:
            raise ValueError(f"bytes_per_key must be positive, got {self.bytes_per_key}")
        self.usage = dict(sorted(self.usage.items()))

    @classmethod
    def of(cls, indices: Iterable[int], bytes_per_key: Optional[int] = None) -> "KeySet":
        usage = {int(i): 1 for i in indices if i != 0}
        if bytes_per_key is None:
            return cls(usage)
        return cls(usage, bytes_per_key)

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(self.usage)

    def validate(self, slot_count: int) -> None:
        bad = [i for i in self.usage if abs(i) >= slot_count]
        if bad:
            raise ValueError(f"rotation indices {bad} outside (-{slot_count}, {slot_count})")

    def union(self, other: "KeySet") -> "KeySet":
        """Set union with usage counts accumulated."""
        merged = dict(self.usage)
        for index, count in other.usage.items():
            merged[index] = merged.get(index, 0) + count
        return KeySet(merged, self.bytes_per_key)

    def __or__(self, other: "KeySet") -> "KeySet":
        return self.union(other)

    def __len__(self) -> int:
        return len(self.usage)

    def __contains__(self, index: int) -> bool:
        return index in self.usage

    def __iter__(self) -> Iterator[int]:
        return iter(self.usage)

    def as_set(self) -> frozenset:
        return frozenset(self.usage)
