"""Model weights: CSV loading, batch-norm folding and weight stores."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from ..errors import ShapeMismatchError, WeightFormatError
from ..models.schemas import ConvLayer, FcLayer, Layer, ModelSpec, ResidualLayer, WeightRef
from ..packing.layout import KernelTensor
from ..utils.tensor_csv import read_csv_rows, read_csv_tensor, write_csv_tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-time batch normalization statistics, one entry per channel."""
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64).reshape(-1) for a in (self.gamma, self.beta, self.mean, self.var)]
        if len({a.size for a in arrays}) != 1:
            raise ShapeMismatchError("batch-norm parameters must all have one entry per channel")
        if np.any(arrays[3] + self.epsilon <= 0):
            raise ValueError("batch-norm variance + epsilon must be positive")
        for name, arr in zip(("gamma", "beta", "mean", "var"), arrays):
            object.__setattr__(self, name, arr)

    @property
    def channels(self) -> int:
        return int(self.gamma.size)


def bias_path_for(weights_path: Union[str, Path]) -> Path:
    path = Path(weights_path)
    return path.with_name(f"{path.stem}_bias{path.suffix or '.csv'}")


def load_weights_csv(path: Union[str, Path], shape: Tuple[int, ...],
                     bias_path: Optional[Union[str, Path]] = None) -> KernelTensor:
    """Load row-major weights of ``shape`` and the matching bias vector.

    Raises:
        WeightFormatError: Missing file, unparseable cell or wrong element count.
    """
    weights = read_csv_tensor(path, shape)
    bias = read_csv_tensor(bias_path or bias_path_for(path), (shape[0],))
    return KernelTensor(weights, bias)


def load_batchnorm_csv(path: Union[str, Path], channels: int, epsilon: float = 1e-5) -> BatchNormParams:
    """Read four rows (gamma, beta, mean, var) of ``channels`` values each."""
    rows = read_csv_rows(path)
    if len(rows) != 4 or any(len(r) != channels for r in rows):
        raise WeightFormatError(
            f"{path}: expected 4 rows of {channels} values (gamma, beta, mean, var), "
            f"found {[len(r) for r in rows]}"
        )
    return BatchNormParams(*(np.array(r) for r in rows), epsilon=epsilon)


def fold_batchnorm(kern: KernelTensor, bn: BatchNormParams) -> KernelTensor:
    """Absorb batch normalization into the preceding convolution.

    With s = gamma / sqrt(var + eps): W'[f] = s_f W[f], b'_f = s_f (b_f - mean_f) + beta_f.
    """
    if bn.channels != kern.out_channels:
        raise ShapeMismatchError(
            f"batch norm has {bn.channels} channels, kernel has {kern.out_channels} outputs"
        )
    scale = bn.gamma / np.sqrt(bn.var + bn.epsilon)
    shape = (-1,) + (1,) * (kern.weights.ndim - 1)
    return KernelTensor(kern.weights * scale.reshape(shape), scale * (kern.bias - bn.mean) + bn.beta)


def export_weights(kern: KernelTensor, path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write weights and the sibling bias file; returns both paths."""
    weights_path = write_csv_tensor(path, kern.weights)
    return weights_path, write_csv_tensor(bias_path_for(path), kern.bias)


def weight_shape(layer: Layer) -> Optional[Tuple[int, ...]]:
    if isinstance(layer, ConvLayer):
        return (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
    if isinstance(layer, FcLayer):
        return (layer.outputs, layer.inputs)
    return None


def weighted_layers(layers: List[Layer]) -> Iterator[Layer]:
    """Every conv and FC layer, residual branches included, in execution order."""
    for layer in layers:
        if isinstance(layer, ResidualLayer):
            yield from weighted_layers(layer.body)
            yield from weighted_layers(layer.shortcut)
        elif weight_shape(layer) is not None:
            yield layer


def _resolve(base_dir: Optional[str], ref: str) -> Path:
    path = Path(ref)
    return path if path.is_absolute() or base_dir is None else Path(base_dir) / path


def load_layer_weights(layer: Layer, base_dir: Optional[str]) -> KernelTensor:
    ref: Optional[WeightRef] = getattr(layer, "weights", None)
    if ref is None:
        raise WeightFormatError(f"layer '{layer.name}' has no weight reference")
    shape = weight_shape(layer)
    bias = _resolve(base_dir, ref.bias) if ref.bias else None
    kern = load_weights_csv(_resolve(base_dir, ref.weights), shape, bias)
    if ref.batchnorm:
        bn = load_batchnorm_csv(_resolve(base_dir, ref.batchnorm), shape[0], ref.bn_epsilon)
        kern = fold_batchnorm(kern, bn)
    return kern


class WeightSession:
    """Per-inference view of a weight store."""

    def get(self, layer: Layer) -> KernelTensor:
        raise NotImplementedError

    def release(self, layer: Layer) -> None:
        pass


class _DictSession(WeightSession):
    def __init__(self, weights: Dict[str, KernelTensor]):
        self._weights = weights

    def get(self, layer: Layer) -> KernelTensor:
        try:
            return self._weights[layer.name]
        except KeyError:
            raise WeightFormatError(f"no weights for layer '{layer.name}'") from None


class _LazySession(WeightSession):
    def __init__(self, spec: ModelSpec):
        self._spec = spec
        self._cache: Dict[str, KernelTensor] = {}
        self.loads = 0

    def get(self, layer: Layer) -> KernelTensor:
        if layer.name not in self._cache:
            self._cache[layer.name] = load_layer_weights(layer, self._spec.base_dir)
            self.loads += 1
            logger.debug(f"Loaded weights for layer '{layer.name}'")
        return self._cache[layer.name]

    def release(self, layer: Layer) -> None:
        if self._cache.pop(layer.name, None) is not None:
            logger.debug(f"Released weights for layer '{layer.name}'")

    @property
    def resident(self) -> int:
        return len(self._cache)


class MemoryWeightStore:
    """Weights already held in memory, keyed by layer name."""

    def __init__(self, weights: Dict[str, KernelTensor]):
        self.weights = dict(weights)

    def session(self) -> WeightSession:
        return _DictSession(self.weights)


class CsvWeightStore:
    """Weights read from the CSV files named in a model spec.

    ``preload`` reads every file once up front. ``lazy`` reads a layer's
    files right before it runs and drops them right after, with a cache
    private to each inference.
    """

    def __init__(self, spec: ModelSpec, mode: Optional[str] = None):
        self.spec = spec
        self.mode = mode or spec.weight_mode
        self._lock = threading.Lock()
        self._preloaded: Optional[Dict[str, KernelTensor]] = None
        if self.mode == "preload":
            self._preloaded = {
                layer.name: load_layer_weights(layer, spec.base_dir)
                for layer in weighted_layers(spec.layers)
            }
            logger.info(f"Preloaded weights for {len(self._preloaded)} layers")
        elif self.mode != "lazy":
            raise ValueError(f"unknown weight mode '{self.mode}'")

    def session(self) -> WeightSession:
        if self._preloaded is not None:
            return _DictSession(self._preloaded)
        return _LazySession(self.spec)


def random_weights(spec: ModelSpec, seed: Optional[int] = None, positive: bool = False,
                   scale: float = 1.0) -> Dict[str, KernelTensor]:
    """Random kernels for every weighted layer, scaled by 1/sqrt(fan_in).

    ``positive`` draws non-negative weights and biases, which keeps
    activations of non-negative inputs away from the ReLU kink.
    """
    rng = np.random.default_rng(seed)
    weights: Dict[str, KernelTensor] = {}
    for layer in weighted_layers(spec.layers):
        shape = weight_shape(layer)
        fan_in = int(np.prod(shape[1:]))
        if positive:
            w = rng.uniform(0.0, 2.0, size=shape) * scale / fan_in
            b = rng.uniform(0.05, 0.2, size=shape[0]) * scale
        else:
            w = rng.normal(0.0, 1.0, size=shape) * scale / np.sqrt(fan_in)
            b = rng.normal(0.0, 0.1, size=shape[0]) * scale
        weights[layer.name] = KernelTensor(w, b)
    return weights


def export_model_weights(spec: ModelSpec, weights: Dict[str, KernelTensor],
                         directory: Union[str, Path]) -> ModelSpec:
    """Write every kernel to ``directory`` and return a spec that references the files."""
    directory = Path(directory)
    spec = spec.model_copy(deep=True)
    for layer in weighted_layers(spec.layers):
        export_weights(weights[layer.name], directory / f"{layer.name}.csv")
        layer.weights = WeightRef(weights=f"{layer.name}.csv")
    return spec.with_base_dir(str(directory.resolve()))
