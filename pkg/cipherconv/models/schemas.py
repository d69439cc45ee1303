from __future__ import annotations

from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _default_relu_degree() -> int:
    # settings imports this module for the preset contexts
    from ..config.settings import settings
    return settings.RELU_DEGREE


class CryptoMetadata(BaseModel):
    """CKKS parameters carried for reports only; the simulator never reads them."""
    first_modulus_bits: int = Field(50, ge=1, description="Bit size of the first modulus")
    rescale_bits: int = Field(46, ge=1, description="Bit size of the rescaling factor")
    key_switch_digits: int = Field(4, ge=1, description="Number of key-switching digits")
    rescaling_technique: str = Field("flexibleauto", description="Rescaling strategy name")


class ContextConfig(BaseModel):
    """Slot-vector context: ring size, slot count and level budget."""
    name: Optional[str] = Field(None, description="Preset name, if any")
    ring_dimension: int = Field(..., gt=0, description="Ring dimension N")
    slot_count: int = Field(..., gt=0, description="Number of SIMD slots S")
    depth_budget: int = Field(..., ge=1, description="Levels available after encryption or bootstrap")
    crypto: CryptoMetadata = Field(default_factory=CryptoMetadata)

    @model_validator(mode="after")
    def _check_slots(self) -> "ContextConfig":
        if not _is_power_of_two(self.slot_count):
            raise ValueError(f"slot_count must be a power of two, got {self.slot_count}")
        if self.slot_count > self.ring_dimension // 2:
            raise ValueError(
                f"slot_count {self.slot_count} exceeds ring_dimension/2 = {self.ring_dimension // 2}"
            )
        return self


class WeightRef(BaseModel):
    """CSV files backing one layer. Paths are relative to the model file."""
    weights: str = Field(..., description="Row-major weight CSV")
    bias: Optional[str] = Field(None, description="Bias CSV; defaults to <stem>_bias.csv")
    batchnorm: Optional[str] = Field(None, description="CSV with rows gamma, beta, mean, var")
    bn_epsilon: float = Field(1e-5, ge=0.0)


class _LayerBase(BaseModel):
    model_config = ConfigDict(extra="forbid")
    name: Optional[str] = Field(None, description="Unique layer name, assigned when omitted")


class ConvLayer(_LayerBase):
    type: Literal["conv"] = "conv"
    in_channels: int = Field(..., ge=1)
    out_channels: int = Field(..., ge=1)
    kernel: int = Field(..., ge=1)
    stride: int = Field(1, ge=1)
    padding: int = Field(0, ge=0)
    mode: Literal["generic", "special3x3", "grouped"] = "generic"
    stride_variant: Optional[Literal["extract", "masked"]] = None
    weights: Optional[WeightRef] = None

    @model_validator(mode="after")
    def _check_mode(self) -> "ConvLayer":
        if self.mode == "special3x3" and (self.kernel, self.stride, self.padding) != (3, 1, 1):
            raise ValueError("special3x3 convolution requires kernel 3, stride 1, padding 1")
        if self.mode == "grouped" and self.out_channels % self.in_channels != 0:
            raise ValueError(
                f"grouped convolution needs out_channels ({self.out_channels}) "
                f"to be a multiple of in_channels ({self.in_channels})"
            )
        return self


class PoolLayer(_LayerBase):
    type: Literal["pool"] = "pool"
    kind: Literal["average", "global", "whole_channel"] = "average"
    kernel: int = Field(2, ge=1)
    stride: int = Field(2, ge=1)
    stride_variant: Optional[Literal["extract", "masked"]] = None


class FcLayer(_LayerBase):
    type: Literal["fc"] = "fc"
    inputs: int = Field(..., ge=1)
    outputs: int = Field(..., ge=1)
    merge_budget: Optional[int] = Field(None, ge=1, description="Max distinct merge-rotation keys")
    weights: Optional[WeightRef] = None


class ReluLayer(_LayerBase):
    type: Literal["relu"] = "relu"
    beta: Optional[float] = Field(None, gt=0.0, description="Scale bound; calibrated when omitted")
    degree: int = Field(default_factory=_default_relu_degree, ge=1,
                        description="Chebyshev degree D (default: CIPHERCONV_RELU_DEGREE)")


class BootstrapLayer(_LayerBase):
    type: Literal["bootstrap"] = "bootstrap"


class ResidualLayer(_LayerBase):
    """Basic block: output = body(x) + shortcut(x); an empty shortcut is identity."""
    type: Literal["residual"] = "residual"
    body: List["Layer"] = Field(..., min_length=1)
    shortcut: List["Layer"] = Field(default_factory=list)


Layer = Annotated[
    Union[ConvLayer, PoolLayer, FcLayer, ReluLayer, BootstrapLayer, ResidualLayer],
    Field(discriminator="type"),
]

ResidualLayer.model_rebuild()


class ModelSpec(BaseModel):
    """Executable model description, one object per layer."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field("model", description="Model name")
    context: Union[str, ContextConfig] = Field("lenet5", description="Preset name or explicit context")
    input_channels: int = Field(..., ge=1)
    input_width: int = Field(..., ge=1)
    layers: List[Layer] = Field(default_factory=list)
    weight_mode: Literal["preload", "lazy"] = "preload"
    key_mode: Literal["preload", "block"] = "preload"
    stride_variant: Literal["extract", "masked"] = "extract"
    bootstrap_policy: Literal["paper_default", "explicit"] = "paper_default"
    key_partition: Optional[List[Tuple[int, int]]] = Field(
        None, description="Explicit inclusive top-level layer ranges for block key mode"
    )
    _base_dir: Optional[str] = PrivateAttr(default=None)

    @property
    def base_dir(self) -> Optional[str]:
        """Directory that relative weight paths are resolved against."""
        return self._base_dir

    def with_base_dir(self, path: Optional[str]) -> "ModelSpec":
        self._base_dir = path
        return self

    @field_validator("layers")
    @classmethod
    def _assign_names(cls, layers: List[Layer]) -> List[Layer]:
        counters: Dict[str, int] = {}
        seen: set = set()

        def visit(items: List[Layer], prefix: str) -> None:
            for layer in items:
                if layer.name is None:
                    counters[layer.type] = counters.get(layer.type, 0) + 1
                    layer.name = f"{prefix}{layer.type}{counters[layer.type]}"
                if layer.name in seen:
                    raise ValueError(f"Duplicate layer name '{layer.name}'")
                seen.add(layer.name)
                if isinstance(layer, ResidualLayer):
                    visit(layer.body, f"{layer.name}.")
                    visit(layer.shortcut, f"{layer.name}.skip.")

        visit(layers, "")
        return layers


class LevelLedgerEntry(BaseModel):
    layer: str
    level_in: int
    level_out: int
    declared_out: int


class RunReport(BaseModel):
    """Result of one simulated run compared with the plaintext oracle."""
    input: str = Field(..., description="Input label or path")
    logits_simulated: List[float]
    logits_reference: List[float]
    deltas: List[float] = Field(..., description="|simulated - reference| per logit")
    max_delta: float
    argmax_simulated: int
    argmax_reference: int
    argmax_agreement: bool
    wall_time_seconds: float
    key_mode: str
    peak_resident_keys: int
    memory_estimate_bytes: int
    bootstraps: int
    trace_violations: int
    level_ledger: List[LevelLedgerEntry] = Field(default_factory=list)
    errors: List[str] = Field(default_factory=list)


class LayerKeyReport(BaseModel):
    index: int
    layer: str
    type: str
    indices: List[int]
    count: int
    reference_count: Optional[int] = Field(None, description="k^2 - 1 + F for convolutions")


class BlockReport(BaseModel):
    block: int
    layers: Tuple[int, int]
    indices: List[int]
    count: int
    load: List[int]
    unload: List[int]


class KeyPlanReport(BaseModel):
    model: str
    slot_count: int
    bytes_per_key: int
    context_overhead_bytes: int
    layers: List[LayerKeyReport]
    union: List[int]
    union_count: int
    usage: Dict[str, int]
    bootstrap_keys: str = Field("opaque", description="Bootstrapping keys are one opaque entry")
    bootstrap_count: int
    blocks: List[BlockReport]
    preload_peak: int
    block_peak: int
    memory_preload_bytes: int
    memory_block_bytes: int
