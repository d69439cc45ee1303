import numpy as np
import pytest

from cipherconv.errors import DepthExhaustedError, ModelBuildError, ShapeMismatchError
from cipherconv.models.schemas import (
    BootstrapLayer,
    ConvLayer,
    ContextConfig,
    FcLayer,
    ModelSpec,
    PoolLayer,
    ReluLayer,
    ResidualLayer,
)
from cipherconv.packing.layout import KernelTensor
from cipherconv.services.architectures import build_architecture
from cipherconv.services.reference import calibrate_betas, plaintext_reference
from cipherconv.services.runtime import InferenceEngine, build_model, infer
from cipherconv.services.weights import CsvWeightStore, export_model_weights, random_weights

SMALL = ContextConfig(name="small", ring_dimension=2048, slot_count=1024, depth_budget=25)


def identity_fc_spec(n: int = 4) -> ModelSpec:
    return ModelSpec(input_channels=n, input_width=1, context=SMALL, layers=[FcLayer(inputs=n, outputs=n)])


def test_identity_fc_returns_the_input():
    spec = identity_fc_spec()
    model = build_model(spec, {"fc1": KernelTensor(np.eye(4), np.zeros(4))})
    x = np.array([0.5, -1.0, 2.0, 3.0]).reshape(4, 1, 1)
    np.testing.assert_allclose(infer(model, x), x.reshape(-1), atol=1e-12)


def test_plaintext_reference_shapes_and_relu():
    spec = ModelSpec(input_channels=2, input_width=1, context=SMALL,
                     layers=[FcLayer(inputs=2, outputs=2), ReluLayer(beta=2.0)])
    weights = {"fc1": KernelTensor(np.eye(2), np.zeros(2))}
    out = plaintext_reference(spec, weights, np.array([-1.0, 2.0]).reshape(2, 1, 1))
    assert out.tolist() == [0.0, 2.0]
    with pytest.raises(ShapeMismatchError):
        plaintext_reference(spec, weights, np.zeros((1, 2, 2)))


def test_lenet_reference_shape_chain():
    spec = build_architecture("lenet5")
    weights = random_weights(spec, seed=0)
    assert weights["conv1"].weights.shape == (6, 1, 5, 5)
    assert weights["fc1"].weights.shape == (120, 256)
    assert plaintext_reference(spec, weights, np.zeros((1, 28, 28))).shape == (10,)


def residual_spec() -> ModelSpec:
    return ModelSpec(
        name="tiny-res",
        context=SMALL,
        input_channels=2,
        input_width=8,
        layers=[
            ConvLayer(in_channels=2, out_channels=2, kernel=3, padding=1, mode="special3x3"),
            ReluLayer(),
            ResidualLayer(body=[ConvLayer(in_channels=2, out_channels=2, kernel=3, padding=1,
                                          mode="special3x3"),
                                ReluLayer(),
                                ConvLayer(in_channels=2, out_channels=2, kernel=3, padding=1,
                                          mode="special3x3")]),
            ReluLayer(),
            ResidualLayer(body=[PoolLayer(kernel=2, stride=2),
                                ConvLayer(in_channels=2, out_channels=4, kernel=3, padding=1,
                                          mode="special3x3")],
                          shortcut=[PoolLayer(kernel=2, stride=2),
                                    ConvLayer(in_channels=2, out_channels=4, kernel=1)]),
            ReluLayer(),
            PoolLayer(kind="global"),
            FcLayer(inputs=4, outputs=3),
        ],
    )


@pytest.fixture
def calibrated_residual():
    rng = np.random.default_rng(11)
    spec = residual_spec()
    weights = random_weights(spec, seed=4)
    inputs = [rng.uniform(-1, 1, size=(2, 8, 8)) for _ in range(4)]
    return calibrate_betas(spec, weights, inputs), weights, inputs


def test_calibration_sets_every_beta(calibrated_residual):
    spec, _, _ = calibrated_residual
    relus = [spec.layers[1], spec.layers[2].body[1], spec.layers[3], spec.layers[5]]
    assert all(isinstance(r, ReluLayer) and r.beta > 0 for r in relus)


@pytest.mark.parametrize("key_mode", ["preload", "block"])
def test_residual_model_tracks_reference(calibrated_residual, key_mode):
    spec, weights, inputs = calibrated_residual
    model = build_model(spec, weights, key_mode=key_mode)
    engine = InferenceEngine(model)
    for x in inputs:
        result = engine.run(x)
        reference = plaintext_reference(model.spec, weights, x)
        scale = max(1.0, float(np.abs(reference).max()))
        assert np.abs(result.logits - reference).max() <= 0.2 * scale
        assert result.trace.ok
        assert all(e.level_out == e.declared_out for e in result.level_ledger)
        assert result.bootstraps == model.bootstraps


def test_block_and_preload_keys_give_identical_logits(calibrated_residual):
    spec, weights, inputs = calibrated_residual
    preload = infer(build_model(spec, weights, key_mode="preload"), inputs[0])
    block = infer(build_model(spec, weights, key_mode="block"), inputs[0])
    np.testing.assert_array_equal(preload, block)


def test_missing_weights_are_reported_at_build():
    with pytest.raises(ModelBuildError):
        build_model(identity_fc_spec(), {})


def test_input_shape_is_checked():
    model = build_model(identity_fc_spec(), {"fc1": KernelTensor(np.eye(4), np.zeros(4))})
    with pytest.raises(ShapeMismatchError):
        infer(model, np.zeros((1, 2, 2)))


def test_depth_errors_name_the_layer():
    tight = ContextConfig(name="tight", ring_dimension=64, slot_count=32, depth_budget=3)
    spec = ModelSpec(input_channels=4, input_width=1, context=tight, bootstrap_policy="explicit",
                     layers=[FcLayer(inputs=4, outputs=4)])
    model = build_model(spec, {"fc1": KernelTensor(np.eye(4), np.zeros(4))})
    # bypass build-time validation to exercise the runtime error path
    model.spec = spec.model_copy(update={"layers": spec.layers + [FcLayer(name="fc2", inputs=4, outputs=4)]})
    model.weights.weights["fc2"] = KernelTensor(np.eye(4), np.zeros(4))
    with pytest.raises(DepthExhaustedError, match="fc2"):
        infer(model, np.ones((4, 1, 1)))


def test_bootstrap_marker_restores_levels():
    spec = ModelSpec(input_channels=4, input_width=1, context=SMALL, bootstrap_policy="explicit",
                     layers=[FcLayer(inputs=4, outputs=4), BootstrapLayer(), FcLayer(inputs=4, outputs=4)])
    eye = KernelTensor(np.eye(4), np.zeros(4))
    result = InferenceEngine(build_model(spec, {"fc1": eye, "fc2": eye})).run(np.ones((4, 1, 1)))
    assert [(e.level_in, e.level_out) for e in result.level_ledger] == [(25, 23), (23, 25), (25, 23)]
    assert result.bootstraps == 1


def test_run_many_keeps_input_order():
    spec = identity_fc_spec()
    model = build_model(spec, {"fc1": KernelTensor(np.eye(4), np.zeros(4))})
    batch = [np.full((4, 1, 1), float(i)) for i in range(6)]
    results = InferenceEngine(model).run_many(batch, jobs=3)
    assert [r.logits[0] for r in results] == pytest.approx([float(i) for i in range(6)])


@pytest.fixture(scope="module")
def lenet_setup():
    rng = np.random.default_rng(99)
    spec = build_architecture("lenet5")
    weights = random_weights(spec, seed=17, positive=True)
    # final layer mixes signs so the classes separate
    weights["fc3"] = random_weights(spec, seed=18)["fc3"]
    inputs = [rng.uniform(0.5, 1.0, size=(1, 28, 28)) for _ in range(100)]
    spec = calibrate_betas(spec, weights, inputs)
    return spec, weights, inputs


@pytest.mark.slow
def test_lenet_argmax_agrees_with_reference(lenet_setup):
    spec, weights, inputs = lenet_setup
    model = build_model(spec, weights)
    results = InferenceEngine(model).run_many(inputs, jobs=4)
    agree = sum(
        int(np.argmax(r.logits) == np.argmax(plaintext_reference(model.spec, weights, x)))
        for r, x in zip(results, inputs)
    )
    assert agree >= 99
    assert all(r.trace.ok for r in results)


def test_weight_modes_give_identical_logits(lenet_setup, tmp_path):
    spec, weights, inputs = lenet_setup
    stored = export_model_weights(spec, weights, tmp_path)
    preload = build_model(stored, CsvWeightStore(stored, "preload"))
    lazy = build_model(stored, CsvWeightStore(stored, "lazy"))
    for x in inputs[:1]:
        np.testing.assert_array_equal(infer(preload, x), infer(lazy, x))
