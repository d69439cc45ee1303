"""Exception hierarchy for the inference engine.

Every error raised on purpose derives from :class:`CipherConvError`. Errors that
describe a bad value also derive from ``ValueError`` so generic callers can
catch them without importing this module.
"""

from typing import Optional


class CipherConvError(Exception):
    """Base class for all engine errors."""


class DepthExhaustedError(CipherConvError):
    """A multiplication was attempted with no remaining level."""

    def __init__(self, operation: str, layer: Optional[str] = None, level: int = 0):
        self.operation = operation
        self.layer = layer
        self.level = level
        where = f" in layer '{layer}'" if layer else ""
        super().__init__(f"Depth exhausted: {operation}{where} needs a level but only {level} remain")

    def with_layer(self, layer: str) -> "DepthExhaustedError":
        """Return a copy of this error that names the offending layer."""
        return DepthExhaustedError(self.operation, layer=layer, level=self.level)


class InvalidRotationError(CipherConvError, ValueError):
    """Rotation index outside (-S, S)."""


class SlotCapacityError(CipherConvError, ValueError):
    """Packed data does not fit in the slot vector."""


class ShapeMismatchError(CipherConvError, ValueError):
    """Operands or layer configuration disagree on shape."""


class ModelBuildError(CipherConvError, ValueError):
    """The model specification cannot be built or executed."""


class WeightFormatError(CipherConvError, ValueError):
    """A weight or bias file is missing, malformed or has the wrong size."""


class MissingRotationKeyError(CipherConvError):
    """A rotation was issued for an index whose key is not resident."""

    def __init__(self, index: int, layer: Optional[str] = None):
        self.index = index
        self.layer = layer
        where = f" (layer '{layer}')" if layer else ""
        super().__init__(f"Rotation key {index} is not resident{where}")


class LedgerMismatchError(CipherConvError):
    """Observed level consumption differs from the declared depth cost."""
