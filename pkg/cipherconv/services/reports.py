"""Assembling the JSON reports emitted by the CLI."""

from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np

from ..config.settings import settings
from ..keys.planner import derive_layer_indices, estimate_memory, plan_blocks, union_model_keys
from ..layers.dispatch import LayerContext, output_geometry
from ..layers.geometry import Geometry
from ..models.schemas import (
    BlockReport,
    ConvLayer,
    KeyPlanReport,
    LayerKeyReport,
    ModelSpec,
    RunReport,
)
from .bootstrap_policy import count_bootstraps
from .runtime import CompiledModel, InferenceResult

logger = logging.getLogger(__name__)


def build_keyplan_report(spec: ModelSpec, ctx: LayerContext, bytes_per_key: Optional[int] = None,
                         overhead: Optional[int] = None) -> KeyPlanReport:
    """Union and block key plans of ``spec`` with their memory estimates."""
    bpk = settings.BYTES_PER_KEY if bytes_per_key is None else bytes_per_key
    extra = settings.CONTEXT_OVERHEAD_BYTES if overhead is None else overhead

    layers: List[LayerKeyReport] = []
    geom = Geometry(spec.input_channels, spec.input_width)
    for index, layer in enumerate(spec.layers):
        keys = derive_layer_indices(layer, geom, ctx)
        reference = layer.kernel ** 2 - 1 + layer.out_channels if isinstance(layer, ConvLayer) else None
        layers.append(LayerKeyReport(index=index, layer=layer.name, type=layer.type, indices=list(keys),
                                     count=len(keys), reference_count=reference))
        geom = output_geometry(layer, geom, ctx)

    union = union_model_keys(spec, ctx)
    plan = plan_blocks(spec, ctx, spec.key_partition or "by_downsampling")
    blocks = [
        BlockReport(block=b.block_id, layers=(b.start, b.end), indices=list(b.keys), count=len(b.keys),
                    load=b.load, unload=b.unload)
        for b in plan.blocks
    ]
    return KeyPlanReport(
        model=spec.name,
        slot_count=ctx.slot_count,
        bytes_per_key=bpk,
        context_overhead_bytes=extra,
        layers=layers,
        union=list(union),
        union_count=len(union),
        usage={str(i): n for i, n in union.usage.items()},
        bootstrap_count=count_bootstraps(spec.layers),
        blocks=blocks,
        preload_peak=len(union),
        block_peak=plan.peak_resident,
        memory_preload_bytes=estimate_memory(union, bpk, extra),
        memory_block_bytes=estimate_memory(plan, bpk, extra),
    )


def build_run_report(label: str, model: CompiledModel, result: InferenceResult, reference: np.ndarray,
                     errors: Optional[List[str]] = None) -> RunReport:
    """Compare one simulated run with its plaintext oracle."""
    simulated = np.asarray(result.logits, dtype=np.float64)
    expected = np.asarray(reference, dtype=np.float64)
    deltas = np.abs(simulated - expected)
    errors = list(errors or [])
    if not result.trace.ok:
        errors.append(f"{len(result.trace.violations)} rotations used non-resident keys")
    return RunReport(
        input=label,
        logits_simulated=simulated.tolist(),
        logits_reference=expected.tolist(),
        deltas=deltas.tolist(),
        max_delta=float(deltas.max()) if deltas.size else 0.0,
        argmax_simulated=int(np.argmax(simulated)),
        argmax_reference=int(np.argmax(expected)),
        argmax_agreement=bool(np.argmax(simulated) == np.argmax(expected)),
        wall_time_seconds=result.wall_time_seconds,
        key_mode=model.key_mode,
        peak_resident_keys=model.peak_resident_keys,
        memory_estimate_bytes=model.memory_estimate,
        bootstraps=result.bootstraps,
        trace_violations=len(result.trace.violations),
        level_ledger=result.level_ledger,
        errors=errors,
    )
