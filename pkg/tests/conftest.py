import numpy as np
import pytest

from cipherconv.models.schemas import ContextConfig
from cipherconv.packing.layout import KernelTensor
from cipherconv.simd.backend import SimulatorBackend


def make_context(slots: int = 1024, depth: int = 25) -> ContextConfig:
    return ContextConfig(name="test", ring_dimension=2 * slots, slot_count=slots, depth_budget=depth)


def make_backend(slots: int = 1024, depth: int = 25, **kwargs) -> SimulatorBackend:
    return SimulatorBackend(make_context(slots, depth), **kwargs)


def random_kernel(rng: np.random.Generator, filters: int, channels: int, kernel: int) -> KernelTensor:
    return KernelTensor(rng.normal(size=(filters, channels, kernel, kernel)), rng.normal(size=filters))


def naive_conv(x: np.ndarray, kern: KernelTensor, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Loop-based cross-correlation, independent of the vectorized oracle."""
    x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    f_count, _, k, _ = kern.weights.shape
    out_w = (x.shape[1] - k) // stride + 1
    out = np.zeros((f_count, out_w, out_w))
    for f in range(f_count):
        for i in range(out_w):
            for j in range(out_w):
                window = x[:, i * stride:i * stride + k, j * stride:j * stride + k]
                out[f, i, j] = np.sum(window * kern.weights[f]) + kern.bias[f]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def backend():
    return make_backend()


@pytest.fixture
def recording_backend():
    b = make_backend()
    b.attach_recorder()
    return b
