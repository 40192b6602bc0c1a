import numpy as np
import pytest
from hypothesis import given, strategies as st

from hyperinv.hypernet import (
    SYNTHETIC_ARCH,
    Architecture,
    ConvLayer,
    HyperEncoder,
    HyperNetworkParams,
    PlainEncoder,
    TaskHead,
    descriptor_grid,
    encode,
    hyper_forward,
    predict,
    round_descriptor,
)
from hyperinv.numerics import Tensor, check_gradients, load_checkpoint, save_checkpoint, softmax_cross_entropy

SMALL = Architecture((ConvLayer(3, 4, 3, stride=2, padding=1),), image_shape=(3, 8, 8))


def test_generated_size_matches_conv_layer():
    W = HyperNetworkParams(SYNTHETIC_ARCH, n_families=2, hidden=40)
    assert W.output_sizes == [1200]
    (k,) = hyper_forward(W, [1.0, 0.0])
    assert k.shape == (16, 3, 5, 5)
    assert W.params["hyper.w1"].shape == (2, 40) and W.params["hyper.w2.0"].shape == (40, 1200)


def test_zero_w2_gives_b2_for_any_descriptor():
    W = HyperNetworkParams(SMALL, hidden=5, rng=np.random.default_rng(1))
    W.params["hyper.w2.0"].data = np.zeros_like(W.params["hyper.w2.0"].data)
    W.params["hyper.b2.0"].data = np.arange(108.0)
    for i in ([0, 0], [0.3, 0.9], [1, 1]):
        assert np.array_equal(hyper_forward(W, i)[0].data.reshape(-1), np.arange(108.0))


def test_generated_weights_follow_formula():
    rng = np.random.default_rng(2)
    W = HyperNetworkParams(SMALL, hidden=6, rng=rng)
    i = np.array([0.2, 0.7])
    p = W.arrays()
    hidden = np.maximum(i @ p["hyper.w1"], 0) + p["hyper.b1"]
    expected = (hidden @ p["hyper.w2.0"] + p["hyper.b2.0"]).reshape(4, 3, 3, 3)
    np.testing.assert_allclose(hyper_forward(W, i)[0].data, expected, atol=1e-14)


def test_generated_weights_superpose_in_output_layer():
    rng = np.random.default_rng(3)
    W = HyperNetworkParams(SMALL, hidden=6, rng=rng)
    i = [0.4, 0.6]
    base = W.arrays()
    w2a, w2b = rng.normal(size=base["hyper.w2.0"].shape), rng.normal(size=base["hyper.w2.0"].shape)
    b2a, b2b = rng.normal(size=108), rng.normal(size=108)

    def gen(w2, b2):
        W.params["hyper.w2.0"].data, W.params["hyper.b2.0"].data = w2, b2
        return hyper_forward(W, i)[0].data

    combined = gen(2 * w2a + 3 * w2b, 2 * b2a + 3 * b2b)
    np.testing.assert_allclose(combined, 2 * gen(w2a, b2a) + 3 * gen(w2b, b2b), atol=1e-12)


def test_init_scale_matches_standard_conv_init():
    W = HyperNetworkParams(SYNTHETIC_ARCH, rng=np.random.default_rng(0))
    std = hyper_forward(W, [1.0, 1.0])[0].data.std()
    assert std == pytest.approx(1 / np.sqrt(3 * 75), rel=1e-9)


def test_kernel_gradient_wrt_descriptor_matches_finite_differences():
    rng = np.random.default_rng(4)
    W = HyperNetworkParams(SMALL, hidden=7, rng=rng)
    i = Tensor(rng.uniform(0.1, 0.9, 2), requires_grad=True)
    proj = rng.normal(size=(4, 3, 3, 3))
    err = check_gradients(lambda: (hyper_forward(W, i)[0] * proj).sum(), [i] + list(W.params.values()))
    assert err < 1e-6


def test_encode_output_shape():
    model = HyperEncoder(rng=np.random.default_rng(0))
    x = np.random.default_rng(1).uniform(size=(2, 3, 28, 28))
    assert encode(model, [1.0, 0.0], x).shape == (2, 3136)
    assert SYNTHETIC_ARCH.feature_dim == 16 * 14 * 14


def test_zero_input_eval_mode_gives_relu_of_beta():
    model = HyperEncoder(rng=np.random.default_rng(0))
    x = np.zeros((2, 3, 28, 28))
    assert not encode(model, [1.0, 1.0], x).data.any()
    model.norm.params["bn.0.beta"].data = np.linspace(-1, 1, 16)
    feats = encode(model, [1.0, 1.0], x).data.reshape(2, 16, 196)
    np.testing.assert_allclose(feats, np.maximum(np.linspace(-1, 1, 16), 0)[None, :, None] * np.ones((2, 16, 196)))


def test_different_descriptors_different_features():
    model = HyperEncoder(rng=np.random.default_rng(0))
    x = np.random.default_rng(1).uniform(size=(2, 3, 28, 28))
    a = encode(model, [1.0, 0.0], x).data
    b = encode(model, [0.0, 1.0], x).data
    assert np.linalg.norm(a - b) > 0


def test_zero_head_gives_zero_logits():
    model = HyperEncoder(rng=np.random.default_rng(0))
    head = TaskHead.zeros(3136, 10)
    x = np.random.default_rng(1).uniform(size=(3, 3, 28, 28))
    assert not predict(head, model, [0.5, 0.5], x).data.any()


def test_head_dimension_mismatch():
    model = HyperEncoder(SMALL, rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="expects 10 features"):
        predict(TaskHead.zeros(10, 3), model, [0.5, 0.5], np.zeros((1, 3, 8, 8)))


def test_descriptor_gradient_nonzero_through_full_stack():
    rng = np.random.default_rng(5)
    model = HyperEncoder(SMALL, hidden=6, rng=rng)
    head = TaskHead(Tensor(rng.normal(size=(64, 3)), requires_grad=True))
    x = rng.uniform(size=(4, 3, 8, 8))
    y = rng.integers(0, 3, 4)
    i = Tensor([0.5, 0.5], requires_grad=True)
    fn = lambda: softmax_cross_entropy(predict(head, model, i, x), y)
    assert check_gradients(fn, [i]) < 1e-6
    assert np.linalg.norm(i.grad if i.grad is not None else 0) > 0


def test_batched_prediction_equals_one_at_a_time():
    rng = np.random.default_rng(6)
    model = HyperEncoder(rng=rng)
    model.norm.stats[0].mean = rng.normal(size=16)
    model.norm.stats[0].var = rng.uniform(0.5, 2, 16)
    head = TaskHead(Tensor(rng.normal(size=(3136, 7))))
    x = rng.uniform(size=(5, 3, 28, 28))
    batched = predict(head, model, [0.3, 0.8], x).data
    single = np.concatenate([predict(head, model, [0.3, 0.8], x[k:k + 1]).data for k in range(5)])
    np.testing.assert_allclose(batched, single, atol=1e-10, rtol=0)


def test_checkpoint_round_trip_reproduces_features(tmp_path):
    rng = np.random.default_rng(7)
    model = HyperEncoder(rng=rng)
    model.norm.stats[0].mean = rng.normal(size=16)
    x = rng.uniform(size=(2, 3, 28, 28))
    before = encode(model, [0.2, 0.9], x).data
    save_checkpoint(tmp_path / "m", model.arrays(), meta=model.describe())
    arrays, meta = load_checkpoint(tmp_path / "m")
    clone = HyperEncoder(Architecture.from_dict(meta["architecture"]), meta["n_families"], meta["hidden"],
                         meta["activation"], rng=np.random.default_rng(99))
    clone.load(arrays)
    assert encode(clone, [0.2, 0.9], x).data.tobytes() == before.tobytes()


def test_plain_encoder_parameter_count():
    plain = PlainEncoder(SYNTHETIC_ARCH)
    n = sum(p.size for p in plain.params().values())
    assert n == 1200 + 2 * 16


@pytest.mark.parametrize("i,expected", [
    ([0.72, 0.91], [1, 1]),
    ([0.35, 0.75], [0, 1]),
    ([0.5, 0.5], [1, 1]),
    ([0.49, 0.0], [0, 0]),
])
def test_round_descriptor_binary(i, expected):
    assert round_descriptor(i).tolist() == expected


def test_round_descriptor_ternary():
    assert round_descriptor([0.2, 0.3, 0.75, 0.8], levels=3).tolist() == [0.0, 0.5, 1.0, 1.0]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=4), st.integers(2, 6))
def test_round_descriptor_idempotent(values, levels):
    once = round_descriptor(values, levels)
    assert np.array_equal(round_descriptor(once, levels), once)
    assert np.all(np.abs(once - np.asarray(values)) <= 0.5 / (levels - 1) + 1e-12)


def test_descriptor_grid():
    grid = descriptor_grid(2, 2)
    assert sorted(map(tuple, grid)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert len(descriptor_grid(2, 3)) == 9
