"""Rotation-key planning: per-layer index sets, block residency, trace checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

from ..config.settings import settings
from ..errors import ModelBuildError
from ..layers.dispatch import LayerContext, layer_keys, output_geometry, reduces_width
from ..layers.geometry import Geometry
from ..models.schemas import Layer, ModelSpec
from ..simd.trace import TraceEvent, TraceRecorder
from .keyset import KeySet

logger = logging.getLogger(__name__)


def derive_layer_indices(layer: Layer, geom: Geometry, ctx: LayerContext) -> KeySet:
    """Exact rotation indices ``layer`` issues for an input of shape ``geom``."""
    keys = KeySet.of(layer_keys(layer, geom, ctx))
    keys.validate(ctx.slot_count)
    return keys


def per_layer_keys(spec: ModelSpec, ctx: LayerContext) -> List[KeySet]:
    """Key set of every top-level layer, in order."""
    geom = Geometry(spec.input_channels, spec.input_width)
    result = []
    for layer in spec.layers:
        result.append(derive_layer_indices(layer, geom, ctx))
        geom = output_geometry(layer, geom, ctx)
    return result


def union_model_keys(spec: ModelSpec, ctx: LayerContext) -> KeySet:
    """One deduplicated key set for the whole model."""
    total = KeySet()
    for keys in per_layer_keys(spec, ctx):
        total = total | keys
    return total


@dataclass
class Block:
    block_id: int
    start: int
    end: int
    keys: KeySet
    load: List[int] = field(default_factory=list)
    unload: List[int] = field(default_factory=list)

    def covers(self, layer: int) -> bool:
        return self.start <= layer <= self.end


@dataclass
class BlockPlan:
    blocks: List[Block]

    @property
    def peak_resident(self) -> int:
        return max((len(b.keys) for b in self.blocks), default=0)

    def block_for(self, layer: Optional[int]) -> Optional[Block]:
        if layer is None:
            return None
        for block in self.blocks:
            if block.covers(layer):
                return block
        return None

    def union(self) -> KeySet:
        total = KeySet()
        for block in self.blocks:
            total = total | block.keys
        return total


def downsampling_partition(spec: ModelSpec, ctx: LayerContext) -> List[Tuple[int, int]]:
    """Start a new block at every top-level layer that shrinks the spatial width."""
    if not spec.layers:
        return []
    geom = Geometry(spec.input_channels, spec.input_width)
    starts = [0]
    for i, layer in enumerate(spec.layers):
        if i > 0 and reduces_width(layer, geom, ctx):
            starts.append(i)
        geom = output_geometry(layer, geom, ctx)
    ends = [s - 1 for s in starts[1:]] + [len(spec.layers) - 1]
    return list(zip(starts, ends))


def _check_partition(ranges: Sequence[Tuple[int, int]], count: int) -> None:
    expected = 0
    for start, end in ranges:
        if start < expected:
            raise ModelBuildError(f"key partition overlaps at layer {start}")
        if start > expected:
            raise ModelBuildError(f"key partition leaves layers {expected}..{start - 1} uncovered")
        if end < start:
            raise ModelBuildError(f"key partition range ({start}, {end}) is empty")
        expected = end + 1
    if expected != count:
        raise ModelBuildError(f"key partition covers {expected} of {count} layers")


def plan_blocks(spec: ModelSpec, ctx: LayerContext,
                partition: Union[str, Sequence[Tuple[int, int]]] = "by_downsampling") -> BlockPlan:
    """Group top-level layers into blocks whose keys are loaded together."""
    if isinstance(partition, str):
        if partition != "by_downsampling":
            raise ModelBuildError(f"unknown partition strategy '{partition}'")
        ranges = downsampling_partition(spec, ctx)
    else:
        ranges = [(int(s), int(e)) for s, e in partition]
        _check_partition(ranges, len(spec.layers))

    layer_sets = per_layer_keys(spec, ctx)
    blocks: List[Block] = []
    previous: frozenset = frozenset()
    for block_id, (start, end) in enumerate(ranges):
        keys = KeySet()
        for keyset in layer_sets[start:end + 1]:
            keys = keys | keyset
        current = keys.as_set()
        blocks.append(
            Block(
                block_id=block_id,
                start=start,
                end=end,
                keys=keys,
                load=sorted(current - previous),
                unload=sorted(previous - current),
            )
        )
        previous = current
    plan = BlockPlan(blocks)
    logger.info(f"Planned {len(blocks)} key blocks, peak resident {plan.peak_resident}")
    return plan


@dataclass(frozen=True)
class TraceViolation:
    seq: int
    index: int
    layer: Optional[int]


@dataclass
class TraceReport:
    checked: int
    violations: List[TraceViolation]
    unused: List[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_trace(plan: Union[KeySet, BlockPlan],
                 trace: Union[TraceRecorder, Sequence[TraceEvent]]) -> TraceReport:
    """Check that every recorded rotation had its key resident."""
    events = trace.events if isinstance(trace, TraceRecorder) else tuple(trace)
    rotations = [e for e in events if e.kind == "rotate"]
    violations = []
    for event in rotations:
        if isinstance(plan, BlockPlan):
            block = plan.block_for(event.layer)
            resident = block.keys if block is not None else KeySet()
        else:
            resident = plan
        if event.index not in resident:
            violations.append(TraceViolation(event.seq, event.index, event.layer))
    planned = plan.union() if isinstance(plan, BlockPlan) else plan
    used = {e.index for e in rotations}
    unused = sorted(i for i in planned if i not in used)
    return TraceReport(checked=len(rotations), violations=violations, unused=unused)


def estimate_memory(plan: Union[KeySet, BlockPlan], bytes_per_key: Optional[int] = None,
                    overhead: Optional[int] = None) -> int:
    """Peak resident keys times bytes per key, plus the fixed context overhead."""
    if isinstance(plan, BlockPlan):
        peak = plan.peak_resident
        default_bpk = plan.blocks[0].keys.bytes_per_key if plan.blocks else settings.BYTES_PER_KEY
    else:
        peak = len(plan)
        default_bpk = plan.bytes_per_key
    bpk = default_bpk if bytes_per_key is None else bytes_per_key
    extra = settings.CONTEXT_OVERHEAD_BYTES if overhead is None else overhead
    return peak * bpk + extra
