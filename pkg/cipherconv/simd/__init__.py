from .vectors import SlotVector, PlainVector, MaskVector
from .trace import TraceEvent, TraceRecorder
from .backend import SlotBackend, SimulatorBackend

__all__ = [
    "SlotVector",
    "PlainVector",
    "MaskVector",
    "TraceEvent",
    "TraceRecorder",
    "SlotBackend",
    "SimulatorBackend",
]
