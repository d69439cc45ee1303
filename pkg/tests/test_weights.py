import numpy as np
import pytest

from cipherconv.errors import ShapeMismatchError, WeightFormatError
from cipherconv.models.schemas import ConvLayer, FcLayer, ModelSpec, ReluLayer, WeightRef
from cipherconv.packing.layout import KernelTensor
from cipherconv.services.reference import conv2d
from cipherconv.services.weights import (
    BatchNormParams,
    CsvWeightStore,
    export_model_weights,
    export_weights,
    fold_batchnorm,
    load_batchnorm_csv,
    load_weights_csv,
    random_weights,
)


def test_single_value_kernel(tmp_path):
    (tmp_path / "w.csv").write_text("0.5\n")
    (tmp_path / "w_bias.csv").write_text("0.25\n")
    kern = load_weights_csv(tmp_path / "w.csv", (1, 1, 1, 1))
    assert kern.weights[0, 0, 0, 0] == 0.5
    assert kern.bias.tolist() == [0.25]


def test_weights_are_row_major(tmp_path):
    (tmp_path / "w.csv").write_text("1,2,3,4\n5,6,7,8\n")
    (tmp_path / "w_bias.csv").write_text("0,0\n")
    kern = load_weights_csv(tmp_path / "w.csv", (2, 1, 2, 2))
    assert kern.weights[1, 0, 1, 1] == 8
    assert kern.weights[0, 0, 1, 0] == 3


def test_count_mismatch_reports_expected_and_found(tmp_path):
    (tmp_path / "w.csv").write_text("1,2,3\n")
    with pytest.raises(WeightFormatError, match="expected 4 .* found 3"):
        load_weights_csv(tmp_path / "w.csv", (1, 1, 2, 2))


def test_bad_cell_reports_position(tmp_path):
    (tmp_path / "w.csv").write_text("1,2\n3,abc\n")
    with pytest.raises(WeightFormatError, match="row 2, column 2"):
        load_weights_csv(tmp_path / "w.csv", (1, 1, 2, 2))


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(WeightFormatError, match="nope.csv"):
        load_weights_csv(tmp_path / "nope.csv", (1, 1))


def test_export_then_load_restores_values(tmp_path, rng):
    kern = KernelTensor(rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3))
    path, _ = export_weights(kern, tmp_path / "conv.csv")
    loaded = load_weights_csv(path, (3, 2, 3, 3))
    np.testing.assert_array_equal(loaded.weights, kern.weights)
    np.testing.assert_array_equal(loaded.bias, kern.bias)


def test_identity_batchnorm_changes_nothing(rng):
    kern = KernelTensor(rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2))
    bn = BatchNormParams(np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), epsilon=0.0)
    folded = fold_batchnorm(kern, bn)
    np.testing.assert_allclose(folded.weights, kern.weights)
    np.testing.assert_allclose(folded.bias, kern.bias)


def test_gamma_two_doubles_weights_and_bias(rng):
    kern = KernelTensor(rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2))
    bn = BatchNormParams(np.full(2, 2.0), np.zeros(2), np.zeros(2), np.ones(2), epsilon=0.0)
    folded = fold_batchnorm(kern, bn)
    np.testing.assert_allclose(folded.weights, 2 * kern.weights)
    np.testing.assert_allclose(folded.bias, 2 * kern.bias)


def test_folded_conv_equals_conv_then_batchnorm(rng):
    kern = KernelTensor(rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4))
    bn = BatchNormParams(rng.normal(size=4), rng.normal(size=4), rng.normal(size=4),
                         rng.uniform(0.5, 2.0, size=4), epsilon=1e-5)
    x = rng.normal(size=(3, 8, 8))
    y = conv2d(x, kern, padding=1)
    normalized = (bn.gamma[:, None, None] * (y - bn.mean[:, None, None])
                  / np.sqrt(bn.var[:, None, None] + bn.epsilon) + bn.beta[:, None, None])
    np.testing.assert_allclose(conv2d(x, fold_batchnorm(kern, bn), padding=1), normalized, atol=1e-9)


def test_batchnorm_validation(rng):
    with pytest.raises(ValueError):
        BatchNormParams(np.ones(2), np.zeros(2), np.zeros(2), np.zeros(2), epsilon=0.0)
    bn = BatchNormParams(np.ones(3), np.zeros(3), np.zeros(3), np.ones(3))
    with pytest.raises(ShapeMismatchError):
        fold_batchnorm(KernelTensor(np.zeros((2, 1, 1, 1)), np.zeros(2)), bn)


def test_batchnorm_csv_needs_four_rows(tmp_path):
    (tmp_path / "bn.csv").write_text("1,1\n0,0\n0,0\n1,1\n")
    assert load_batchnorm_csv(tmp_path / "bn.csv", 2).channels == 2
    (tmp_path / "bad.csv").write_text("1,1\n0,0\n")
    with pytest.raises(WeightFormatError):
        load_batchnorm_csv(tmp_path / "bad.csv", 2)


def _tiny_spec() -> ModelSpec:
    return ModelSpec(
        input_channels=1,
        input_width=4,
        context="lenet5",
        layers=[ConvLayer(in_channels=1, out_channels=2, kernel=3), ReluLayer(beta=2.0),
                FcLayer(inputs=8, outputs=3)],
    )


def test_store_modes_return_the_same_kernels(tmp_path):
    spec = _tiny_spec()
    weights = random_weights(spec, seed=3)
    stored = export_model_weights(spec, weights, tmp_path)
    assert stored.base_dir == str(tmp_path.resolve())

    preload = CsvWeightStore(stored, "preload").session()
    lazy = CsvWeightStore(stored, "lazy").session()
    for layer in (stored.layers[0], stored.layers[2]):
        np.testing.assert_array_equal(preload.get(layer).weights, lazy.get(layer).weights)
        np.testing.assert_array_equal(lazy.get(layer).weights, weights[layer.name].weights)
    assert lazy.resident == 2
    lazy.release(stored.layers[0])
    assert lazy.resident == 1


def test_lazy_store_reports_missing_files_when_used(tmp_path):
    spec = _tiny_spec()
    spec.layers[0].weights = WeightRef(weights="missing.csv")
    spec = spec.with_base_dir(str(tmp_path))
    session = CsvWeightStore(spec, "lazy").session()
    with pytest.raises(WeightFormatError, match="missing.csv"):
        session.get(spec.layers[0])
    with pytest.raises(WeightFormatError):
        CsvWeightStore(spec, "preload")


def test_batchnorm_is_folded_on_load(tmp_path):
    spec = _tiny_spec()
    weights = random_weights(spec, seed=5)
    stored = export_model_weights(spec, weights, tmp_path)
    (tmp_path / "bn.csv").write_text("2,2\n0,0\n0,0\n1,1\n")
    stored.layers[0].weights = WeightRef(weights="conv1.csv", batchnorm="bn.csv", bn_epsilon=0.0)
    kern = CsvWeightStore(stored, "preload").session().get(stored.layers[0])
    np.testing.assert_allclose(kern.weights, 2 * weights["conv1"].weights)


def test_positive_random_weights_are_non_negative():
    weights = random_weights(_tiny_spec(), seed=1, positive=True)
    assert all((k.weights >= 0).all() and (k.bias > 0).all() for k in weights.values())
