"""Operation trace recording for key-plan verification."""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Optional, Set, Tuple


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    kind: str
    index: Optional[int] = None
    level_before: Optional[int] = None
    level_after: Optional[int] = None
    layer: Optional[int] = None
    label: Optional[str] = None
    note: Optional[str] = None


class TraceRecorder:
    """Append-only event log shared by one or more backends.

    Appends are serialized; scope labels are kept per thread so concurrent
    inferences can share a recorder.
    """

    def __init__(self):
        self._events: List[TraceEvent] = []
        self._lock = threading.Lock()
        self._local = threading.local()

    def _stack(self) -> List[Tuple[Optional[int], Optional[str]]]:
        stack = getattr(self._local, "stack", None)
        if stack is None:
            stack = []
            self._local.stack = stack
        return stack

    @contextmanager
    def scope(self, layer: Optional[int] = None, label: Optional[str] = None) -> Iterator[None]:
        """Tag events recorded inside the block with a layer index and label.

        Nested scopes inherit the outer layer index when none is given.
        """
        stack = self._stack()
        if layer is None and stack:
            layer = stack[-1][0]
        stack.append((layer, label))
        try:
            yield
        finally:
            stack.pop()

    def record(self, kind: str, index: Optional[int] = None, level_before: Optional[int] = None,
               level_after: Optional[int] = None, note: Optional[str] = None) -> None:
        stack = self._stack()
        layer, label = stack[-1] if stack else (None, None)
        with self._lock:
            self._events.append(
                TraceEvent(
                    seq=len(self._events),
                    kind=kind,
                    index=index,
                    level_before=level_before,
                    level_after=level_after,
                    layer=layer,
                    label=label,
                    note=note,
                )
            )

    def annotate(self, note: str) -> None:
        self.record("annotation", note=note)

    @property
    def events(self) -> Tuple[TraceEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def rotations(self) -> List[TraceEvent]:
        return [e for e in self.events if e.kind == "rotate"]

    def rotation_indices(self) -> Set[int]:
        return {e.index for e in self.rotations()}

    def clear(self) -> None:
        with self._lock:
            self._events.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)
