"""Building executable models and running simulated encrypted inference."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from ..config.settings import settings
from ..errors import (
    DepthExhaustedError,
    LedgerMismatchError,
    MissingRotationKeyError,
    ModelBuildError,
    ShapeMismatchError,
)
from ..keys.keyset import KeySet
from ..keys.planner import BlockPlan, TraceReport, estimate_memory, plan_blocks, union_model_keys, verify_trace
from ..layers.dispatch import LayerContext, apply_layer, chain_geometry, output_geometry
from ..layers.geometry import Geometry
from ..models.schemas import ContextConfig, Layer, LevelLedgerEntry, ModelSpec, ResidualLayer
from ..packing.layout import KernelTensor, PackedTensor, flatten
from ..simd.backend import SimulatorBackend
from ..simd.trace import TraceRecorder
from .bootstrap_policy import count_bootstraps, declared_level, place_bootstraps
from .model_loader import input_geometry, layer_context, resolve_model_context
from .weights import CsvWeightStore, MemoryWeightStore, WeightSession, weight_shape, weighted_layers

logger = logging.getLogger(__name__)

WeightStore = Union[CsvWeightStore, MemoryWeightStore]


@dataclass
class CompiledModel:
    """A validated spec with bootstraps placed, its weights and its key plan."""
    spec: ModelSpec
    context: ContextConfig
    layer_ctx: LayerContext
    weights: WeightStore
    key_mode: str
    union_keys: KeySet
    block_plan: Optional[BlockPlan]
    output_geometry: Geometry

    @property
    def key_plan(self) -> Union[KeySet, BlockPlan]:
        return self.block_plan if self.key_mode == "block" else self.union_keys

    @property
    def bootstraps(self) -> int:
        return count_bootstraps(self.spec.layers)

    @property
    def peak_resident_keys(self) -> int:
        if self.block_plan is not None and self.key_mode == "block":
            return self.block_plan.peak_resident
        return len(self.union_keys)

    @property
    def memory_estimate(self) -> int:
        return estimate_memory(self.key_plan)


def _check_weights(spec: ModelSpec, weights: Dict[str, KernelTensor]) -> None:
    for layer in weighted_layers(spec.layers):
        kern = weights.get(layer.name)
        if kern is None:
            raise ModelBuildError(f"no weights supplied for layer '{layer.name}'")
        if kern.weights.shape != weight_shape(layer):
            raise ShapeMismatchError(
                f"layer '{layer.name}' expects weights {weight_shape(layer)}, got {kern.weights.shape}"
            )


def build_model(spec: ModelSpec, weights: Optional[Union[WeightStore, Dict[str, KernelTensor]]] = None, *,
                context: Optional[ContextConfig] = None, key_mode: Optional[str] = None,
                weight_mode: Optional[str] = None) -> CompiledModel:
    """Validate shapes, place bootstraps, plan keys and attach weights.

    Raises:
        ModelBuildError: Incompatible shapes, slot overflow or an unbuildable depth budget.
    """
    context = context or resolve_model_context(spec)
    ctx = layer_context(spec, context)
    out_geom = chain_geometry(spec.layers, input_geometry(spec), ctx)
    placed = place_bootstraps(spec, ctx)

    key_mode = key_mode or spec.key_mode
    if key_mode not in ("preload", "block"):
        raise ModelBuildError(f"unknown key mode '{key_mode}'")
    union = union_model_keys(placed, ctx)
    blocks = plan_blocks(placed, ctx, placed.key_partition or "by_downsampling") if key_mode == "block" else None

    if weights is None:
        store: WeightStore = CsvWeightStore(placed, weight_mode)
    elif isinstance(weights, dict):
        _check_weights(placed, weights)
        store = MemoryWeightStore(weights)
    else:
        store = weights

    model = CompiledModel(placed, context, ctx, store, key_mode, union, blocks, out_geom)
    logger.info(
        f"Built model '{spec.name}': {len(placed.layers)} top-level layers, {model.bootstraps} bootstraps, "
        f"{len(union)} rotation keys, key mode {key_mode}"
    )
    return model


@dataclass
class InferenceResult:
    logits: np.ndarray
    level_ledger: List[LevelLedgerEntry]
    recorder: TraceRecorder
    trace: TraceReport
    bootstraps: int
    wall_time_seconds: float


class InferenceEngine:
    """Runs a compiled model on the slot simulator, one backend per inference."""

    def __init__(self, model: CompiledModel, noise_sigma: Optional[float] = None, seed: Optional[int] = None):
        self.model = model
        self.noise_sigma = settings.NOISE_SIGMA if noise_sigma is None else noise_sigma
        self.seed = seed

    def _execute(self, backend: SimulatorBackend, layer: Layer, x: PackedTensor,
                 session: WeightSession) -> PackedTensor:
        ctx = self.model.layer_ctx
        if isinstance(layer, ResidualLayer):
            body = self._chain(backend, layer.body, x, session)
            skip = self._chain(backend, layer.shortcut, x, session)
            if body.shape != skip.shape:
                raise ShapeMismatchError(f"layer '{layer.name}': body {body.shape} vs shortcut {skip.shape}")
            return body.with_data(backend.add(body.data, skip.data))

        kernel = session.get(layer) if weight_shape(layer) is not None else None
        try:
            with backend.recorder.scope(label=layer.name):
                return apply_layer(backend, layer, x, ctx, kernel)
        except DepthExhaustedError as exc:
            raise exc.with_layer(exc.layer or layer.name) from exc
        except MissingRotationKeyError as exc:
            if exc.layer is not None:
                raise
            raise MissingRotationKeyError(exc.index, layer.name) from exc
        finally:
            if kernel is not None:
                session.release(layer)

    def _chain(self, backend: SimulatorBackend, layers: List[Layer], x: PackedTensor,
               session: WeightSession) -> PackedTensor:
        for layer in layers:
            x = self._execute(backend, layer, x, session)
        return x

    def _enter_block(self, backend: SimulatorBackend, index: int, current: Optional[int]) -> Optional[int]:
        block = self.model.block_plan.block_for(index)
        if block is None or block.block_id == current:
            return current
        logger.info(
            f"Key block {block.block_id} (layers {block.start}-{block.end}): "
            f"load {len(block.load)}, unload {len(block.unload)}, resident {len(block.keys)}"
        )
        backend.set_resident_keys(block.keys)
        return block.block_id

    def run(self, inputs: np.ndarray, seed: Optional[int] = None) -> InferenceResult:
        """Flatten ``inputs``, run every layer and read the output slots.

        Raises:
            ShapeMismatchError: The input does not match the model input.
            DepthExhaustedError: Naming the layer that ran out of levels.
            LedgerMismatchError: Observed level differs from the declared one.
        """
        model = self.model
        spec, ctx = model.spec, model.layer_ctx
        x_arr = np.asarray(inputs, dtype=np.float64)
        if x_arr.ndim == 2:
            x_arr = x_arr[np.newaxis]
        expected_shape = (spec.input_channels, spec.input_width, spec.input_width)
        if x_arr.shape != expected_shape:
            raise ShapeMismatchError(f"input shape {x_arr.shape} does not match model input {expected_shape}")

        started = time.perf_counter()
        backend = SimulatorBackend(model.context, self.noise_sigma, self.seed if seed is None else seed)
        recorder = backend.attach_recorder()
        session = model.weights.session()
        if model.key_mode == "preload":
            backend.set_resident_keys(model.union_keys)

        x = flatten(backend, x_arr)
        geom = input_geometry(spec)
        ledger: List[LevelLedgerEntry] = []
        block_id: Optional[int] = None
        for index, layer in enumerate(spec.layers):
            if model.key_mode == "block":
                block_id = self._enter_block(backend, index, block_id)
            level_in = x.level
            try:
                declared = declared_level(layer, geom, level_in, ctx)
            except ModelBuildError:
                declared = None
            with recorder.scope(layer=index, label=layer.name):
                x = self._execute(backend, layer, x, session)
            if declared is None or x.level != declared:
                raise LedgerMismatchError(
                    f"layer '{layer.name}': level went {level_in} -> {x.level}, declared {declared}"
                )
            ledger.append(LevelLedgerEntry(layer=layer.name, level_in=level_in, level_out=x.level,
                                           declared_out=declared))
            logger.debug(f"{layer.name}: level {level_in} -> {x.level}")
            geom = output_geometry(layer, geom, ctx)

        logits = backend.decode(x.data)[: x.size].copy()
        elapsed = time.perf_counter() - started
        trace = verify_trace(model.key_plan, recorder)
        bootstraps = sum(1 for e in recorder.events if e.kind == "bootstrap")
        return InferenceResult(logits, ledger, recorder, trace, bootstraps, elapsed)

    def run_many(self, batch: Sequence[np.ndarray], jobs: int = 1) -> List[InferenceResult]:
        """Independent inferences, results in input order."""
        def seed_for(i: int) -> Optional[int]:
            return None if self.seed is None else self.seed + i

        if jobs <= 1:
            return [self.run(x, seed_for(i)) for i, x in enumerate(batch)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda item: self.run(item[1], seed_for(item[0])), enumerate(batch)))


def infer(model: CompiledModel, inputs: np.ndarray, noise_sigma: Optional[float] = None,
          seed: Optional[int] = None) -> np.ndarray:
    """Logits of one simulated encrypted inference."""
    return InferenceEngine(model, noise_sigma, seed).run(inputs).logits
