from pathlib import Path
import json
import logging
import os
from typing import Dict, Union

from ..models.schemas import ContextConfig, CryptoMetadata

logger = logging.getLogger(__name__)

ENV_PREFIX = "CIPHERCONV_"


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Ignoring {ENV_PREFIX}{name}={raw!r}: not an integer, using {default}")
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        logger.warning(f"Ignoring {ENV_PREFIX}{name}={raw!r}: not a number, using {default}")
        return default


# Configuration settings
class Settings:
    # Context
    DEPTH_BUDGET: int = 25
    DEFAULT_CONTEXT: str = "lenet5"

    # Key memory model (no real keys exist in the simulator)
    BYTES_PER_KEY: int = 1 << 20
    CONTEXT_OVERHEAD_BYTES: int = 64 << 20

    # Numerics
    NOISE_SIGMA: float = 0.0
    RELU_DEGREE: int = 59
    BETA_SAFETY: float = 1.25
    FC_MERGE_BUDGET: int = 32

    LOG_LEVEL: str = "WARNING"

    def __init__(self):
        self.DEPTH_BUDGET = _env_int("DEPTH_BUDGET", self.DEPTH_BUDGET)
        self.DEFAULT_CONTEXT = os.getenv(ENV_PREFIX + "DEFAULT_CONTEXT", self.DEFAULT_CONTEXT)
        self.BYTES_PER_KEY = _env_int("BYTES_PER_KEY", self.BYTES_PER_KEY)
        self.CONTEXT_OVERHEAD_BYTES = _env_int("CONTEXT_OVERHEAD_BYTES", self.CONTEXT_OVERHEAD_BYTES)
        self.NOISE_SIGMA = _env_float("NOISE_SIGMA", self.NOISE_SIGMA)
        self.RELU_DEGREE = _env_int("RELU_DEGREE", self.RELU_DEGREE)
        self.BETA_SAFETY = _env_float("BETA_SAFETY", self.BETA_SAFETY)
        self.FC_MERGE_BUDGET = _env_int("FC_MERGE_BUDGET", self.FC_MERGE_BUDGET)
        self.LOG_LEVEL = os.getenv(ENV_PREFIX + "LOG_LEVEL", self.LOG_LEVEL).upper()

        if self.DEPTH_BUDGET < 1:
            logger.warning(f"{ENV_PREFIX}DEPTH_BUDGET must be positive, using 25")
            self.DEPTH_BUDGET = 25
        if self.FC_MERGE_BUDGET < 1:
            logger.warning(f"{ENV_PREFIX}FC_MERGE_BUDGET must be positive, using 32")
            self.FC_MERGE_BUDGET = 32

    def as_dict(self) -> Dict[str, Union[int, float, str]]:
        """Return the effective settings, used by report headers."""
        return {
            "depth_budget": self.DEPTH_BUDGET,
            "default_context": self.DEFAULT_CONTEXT,
            "bytes_per_key": self.BYTES_PER_KEY,
            "context_overhead_bytes": self.CONTEXT_OVERHEAD_BYTES,
            "noise_sigma": self.NOISE_SIGMA,
            "relu_degree": self.RELU_DEGREE,
            "beta_safety": self.BETA_SAFETY,
            "fc_merge_budget": self.FC_MERGE_BUDGET,
        }


# Global settings instance
settings = Settings()


def _preset(name: str, ring_dimension: int) -> ContextConfig:
    return ContextConfig(
        name=name,
        ring_dimension=ring_dimension,
        slot_count=ring_dimension // 2,
        depth_budget=settings.DEPTH_BUDGET,
        crypto=CryptoMetadata(
            first_modulus_bits=50,
            rescale_bits=46,
            key_switch_digits=4,
            rescaling_technique="flexibleauto",
        ),
    )


# Parameter sets: small ring for LeNet-5, large ring for ResNets and VGGs
CONTEXT_PRESETS: Dict[str, ContextConfig] = {
    "lenet5": _preset("lenet5", 16384),
    "large": _preset("large", 32768),
}


def get_context_preset(name: str) -> ContextConfig:
    """Return a copy of a named context preset.

    Raises:
        ValueError: If the preset name is unknown.
    """
    try:
        return CONTEXT_PRESETS[name].model_copy(deep=True)
    except KeyError:
        known = ", ".join(sorted(CONTEXT_PRESETS))
        raise ValueError(f"Unknown context preset '{name}' (known: {known})") from None


def resolve_context(value: Union[str, Path]) -> ContextConfig:
    """Resolve a preset name or the path of a context JSON file."""
    text = str(value)
    if text in CONTEXT_PRESETS:
        return get_context_preset(text)
    path = Path(text)
    if not path.exists():
        return get_context_preset(text)
    with path.open("r", encoding="utf-8") as fh:
        return ContextConfig.model_validate(json.load(fh))
