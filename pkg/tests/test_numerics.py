import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperinv.numerics import (
    AdamState,
    LrSchedule,
    NonFiniteGradient,
    RunningStats,
    Tensor,
    adam_step,
    backward,
    batchnorm2d,
    check_gradients,
    clip_grad_norm,
    conv2d,
    cosine_similarity,
    linear,
    load_checkpoint,
    nt_xent_loss,
    relu,
    save_checkpoint,
    schedule_lr,
    softmax_cross_entropy,
)
from hyperinv.numerics.checkpoint import CheckpointError, checkpoint_digest


def conv_oracle(x, w, stride, pad):
    B, C, H, W = x.shape
    F, _, k, _ = w.shape
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    out = np.zeros((B, F, Ho, Wo))
    for b in range(B):
        for f in range(F):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[b, c, i * stride + di, j * stride + dj] * w[f, c, di, dj]
                    out[b, f, i, j] = acc
    return out


def nt_xent_oracle(z1, z2, tau):
    z = np.concatenate([z1, z2])
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    n = len(z)
    B = n // 2
    total = 0.0
    for r in range(n):
        pos = (r + B) % n
        denom = sum(math.exp(z[r] @ z[c] / tau) for c in range(n) if c != r)
        total += -math.log(math.exp(z[r] @ z[pos] / tau) / denom)
    return total / n


# -- conv2d -------------------------------------------------------------------

def test_conv_identity_kernel():
    out = conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 1, 1)))
    assert np.array_equal(out.data, np.ones((1, 1, 3, 3)))


def test_conv_stride_two_sum_kernel():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    out = conv2d(x, np.ones((1, 1, 2, 2)), stride=2)
    assert np.array_equal(out.data[0, 0], [[10, 18], [42, 50]])
    assert np.array_equal(out.data, conv_oracle(x, np.ones((1, 1, 2, 2)), 2, 0))


def test_conv_output_shape():
    out = conv2d(np.zeros((1, 3, 28, 28)), np.zeros((16, 3, 5, 5)), stride=2, padding=2)
    assert out.shape == (1, 16, 14, 14)


def test_conv_channel_mismatch_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(1, 2, 5, 5\).*\(4, 3, 3, 3\)"):
        conv2d(np.zeros((1, 2, 5, 5)), np.zeros((4, 3, 3, 3)))


def test_conv_matches_nested_loop_oracle_on_random_shapes():
    rng = np.random.default_rng(0)
    for _ in range(50):
        B, C, F = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        k = int(rng.integers(1, 4))
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        H, W = int(rng.integers(k, 8)), int(rng.integers(k, 8))
        x = rng.normal(size=(B, C, H, W))
        w = rng.normal(size=(F, C, k, k))
        got = conv2d(x, w, stride=stride, padding=pad).data
        np.testing.assert_allclose(got, conv_oracle(x, w, stride, pad), atol=1e-10, rtol=0)


def test_conv_gradients_flow_to_input_kernel_and_bias():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(2, 2, 6, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    proj = rng.normal(size=(2, 3, 3, 3))

    def fn():
        return (conv2d(x, w, b, stride=2, padding=1) * proj).sum()

    assert check_gradients(fn, [x, w, b]) < 1e-6


# -- batchnorm ----------------------------------------------------------------

def test_batchnorm_train_zero_mean():
    rng = np.random.default_rng(2)
    x = rng.normal(3.0, 2.0, size=(4, 3, 5, 5))
    out = batchnorm2d(x, np.ones(3), np.zeros(3), RunningStats.fresh(3), mode="train")
    assert np.all(np.abs(out.data.mean(axis=(0, 2, 3))) < 1e-9)


def test_batchnorm_constant_input_collapses_to_beta():
    out = batchnorm2d(np.full((2, 1, 3, 3), 7.0), np.ones(1), np.full(1, 5.0), RunningStats.fresh(1))
    assert np.all(np.abs(out.data - 5.0) < 1e-6)


def test_batchnorm_eval_uses_running_stats():
    stats = RunningStats(np.array([2.0]), np.array([4.0]))
    out = batchnorm2d(np.full((1, 1, 1, 1), 4.0), np.ones(1), np.zeros(1), stats, mode="eval", epsilon=1e-5)
    assert out.data.item() == pytest.approx((4 - 2) / math.sqrt(4 + 1e-5), abs=1e-12)
    assert out.data.item() == pytest.approx(0.99999875, abs=1e-8)


def test_batchnorm_train_updates_running_stats():
    x = np.arange(8.0).reshape(2, 1, 2, 2)
    stats = RunningStats.fresh(1)
    batchnorm2d(x, np.ones(1), np.zeros(1), stats, momentum=0.5)
    assert stats.mean[0] == pytest.approx(0.5 * 3.5)
    assert stats.var[0] == pytest.approx(0.5 + 0.5 * np.var(x, ddof=1))


def test_batchnorm_empty_batch_rejected():
    with pytest.raises(ValueError, match="empty"):
        batchnorm2d(np.zeros((0, 1, 2, 2)), np.ones(1), np.zeros(1), RunningStats.fresh(1))


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_batchnorm_gradients(mode):
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    g = Tensor(rng.normal(size=2), requires_grad=True)
    b = Tensor(rng.normal(size=2), requires_grad=True)
    proj = rng.normal(size=(3, 2, 3, 3))
    stats = RunningStats(rng.normal(size=2), rng.uniform(0.5, 2, size=2))

    def fn():
        return (batchnorm2d(x, g, b, RunningStats(stats.mean.copy(), stats.var.copy()), mode=mode) * proj).sum()

    assert check_gradients(fn, [x, g, b]) < 1e-6


# -- linear / cross-entropy / cosine -------------------------------------------

def test_cross_entropy_uniform_is_log_classes():
    for O in (2, 3, 7, 10):
        loss = softmax_cross_entropy(np.zeros((4, O)), [0, 1, 0, 1])
        assert loss.item() == math.log(O)


def test_cross_entropy_confident_correct_goes_to_zero():
    logits = np.array([[50.0, 0.0, 0.0]])
    assert softmax_cross_entropy(logits, [0]).item() < 1e-20


def test_cross_entropy_hand_value():
    expected = -math.log(math.exp(2) / (math.exp(1) + math.exp(2)))
    got = softmax_cross_entropy(np.array([[1.0, 2.0]]), [1]).item()
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.313262, abs=1e-6)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError):
        softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_cross_entropy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(scale=rng.uniform(0.1, 100), size=(5, 4))
    assert softmax_cross_entropy(logits, rng.integers(0, 4, 5)).item() >= 0


def test_linear_and_cross_entropy_gradients():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=3), requires_grad=True)
    y = rng.integers(0, 3, 5)

    def fn():
        return softmax_cross_entropy(linear(relu(x), w, b), y)

    assert check_gradients(fn, [x, w, b]) < 1e-6


def test_cosine_similarity_cases():
    assert cosine_similarity([1.0, 2.0], [1.0, 2.0]).item() == pytest.approx(1.0)
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]).item() == 0.0
    assert cosine_similarity([1.0, 0.0], [1.0, 1.0]).item() == pytest.approx(1 / math.sqrt(2), abs=1e-12)


def test_cosine_similarity_two_zero_vectors(caplog):
    with caplog.at_level("WARNING"):
        assert cosine_similarity([0.0, 0.0], [0.0, 0.0]).item() == 0.0
    assert "zero vectors" in caplog.text


def test_cosine_similarity_gradient():
    rng = np.random.default_rng(5)
    a = Tensor(rng.normal(size=6), requires_grad=True)
    b = Tensor(rng.normal(size=6), requires_grad=True)
    assert check_gradients(lambda: cosine_similarity(a, b), [a, b]) < 1e-6


# -- backward -----------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, [1, 1, 1])


def test_backward_through_generated_weights():
    rng = np.random.default_rng(6)
    M = rng.normal(size=(4, 2))
    xv = rng.normal(size=4)
    i = Tensor(rng.normal(size=2), requires_grad=True)
    w = Tensor(M) @ i.reshape(2, 1)
    loss = (w.reshape(4) * xv).sum()
    backward(loss)
    np.testing.assert_allclose(i.grad, M.T @ xv, atol=1e-12)
    assert w.grad is not None  # non-leaf generated tensor gets its gradient too


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(x * 2.0)


def test_shared_subexpression_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = x * x
    backward((y + y).sum())
    assert x.grad[0] == pytest.approx(12.0)


# -- Adam / schedules ---------------------------------------------------------

def test_adam_zero_gradient_is_fixed_point():
    p = {"w": Tensor(np.array([1.0, -2.0]))}
    state = AdamState()
    for _ in range(3):
        adam_step(p, {"w": np.zeros(2)}, state, lr=0.1)
    assert np.array_equal(p["w"].data, [1.0, -2.0])
    assert state.step_count == 3


def test_adam_first_step_is_signed_lr():
    p = {"w": Tensor(np.array([1.0, 1.0, 1.0]))}
    adam_step(p, {"w": np.array([0.3, -2.0, 5.0])}, AdamState(), lr=0.01)
    np.testing.assert_allclose(p["w"].data, [0.99, 1.01, 0.99], atol=1e-8)


def test_adam_two_steps_match_hand_computation():
    g = np.array([0.5, -1.5])
    p = {"w": Tensor(np.array([0.2, 0.4]))}
    state = AdamState(beta1=0.9, beta2=0.999, epsilon=1e-8)
    lr = 0.05
    adam_step(p, {"w": g}, state, lr)
    adam_step(p, {"w": g}, state, lr)
    w = np.array([0.2, 0.4])
    m = v = 0.0
    for t in (1, 2):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - lr * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p["w"].data, w, atol=1e-12, rtol=0)


def test_adam_decoupled_weight_decay_only_on_named():
    p = {"a": Tensor(np.array([1.0])), "b": Tensor(np.array([1.0]))}
    state = AdamState(weight_decay=0.5, decay_names=frozenset({"a"}))
    adam_step(p, {"a": np.zeros(1), "b": np.zeros(1)}, state, lr=0.1)
    assert p["a"].data[0] == pytest.approx(0.95)
    assert p["b"].data[0] == 1.0


def test_adam_non_finite_gradient_names_parameter():
    p = {"hyper.w1": Tensor(np.zeros(2))}
    with pytest.raises(NonFiniteGradient, match="hyper.w1"):
        adam_step(p, {"hyper.w1": np.array([np.nan, 0.0])}, AdamState(), lr=0.1)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    assert grads["a"][0] == pytest.approx(0.6)


def test_cosine_schedule_endpoints_and_midpoint():
    s = LrSchedule(0.1, 100, "cosine")
    assert schedule_lr(s, 0) == 0.1
    assert schedule_lr(s, 100) == 0.0
    assert schedule_lr(s, 50) == pytest.approx(0.05, abs=1e-15)


def test_multistep_schedule():
    s = LrSchedule(1.0, 30, "multistep", milestones=(10, 20), gamma=0.1)
    assert [schedule_lr(s, t) for t in (0, 9, 10, 19, 20, 30)] == pytest.approx([1, 1, 0.1, 0.1, 0.01, 0.01])


def test_schedule_out_of_range():
    with pytest.raises(ValueError):
        schedule_lr(LrSchedule(0.1, 10), 11)


# -- NT-Xent ------------------------------------------------------------------

def test_nt_xent_identical_embeddings():
    z = np.ones((2, 3))
    got = nt_xent_loss(z, z, temperature=0.5).item()
    assert got == pytest.approx(nt_xent_oracle(z, z, 0.5), abs=1e-12)
    assert got == pytest.approx(math.log(3), abs=1e-12)


def test_nt_xent_orthogonal_pairs():
    z1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    z2 = z1.copy()
    got = nt_xent_loss(z1, z2, temperature=0.5).item()
    # each row: positive at similarity 1, two orthogonal negatives at 0
    assert got == pytest.approx(nt_xent_oracle(z1, z2, 0.5), abs=1e-12)
    assert got == pytest.approx(-math.log(math.exp(2) / (math.exp(2) + 2)), abs=1e-12)


def test_nt_xent_symmetric_and_random_oracle():
    rng = np.random.default_rng(7)
    z1, z2 = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    a = nt_xent_loss(z1, z2, 0.3).item()
    assert a == pytest.approx(nt_xent_loss(z2, z1, 0.3).item(), abs=1e-12)
    assert a == pytest.approx(nt_xent_oracle(z1, z2, 0.3), abs=1e-12)


def test_nt_xent_gradient():
    rng = np.random.default_rng(8)
    z1 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    z2 = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    assert check_gradients(lambda: nt_xent_loss(z1, z2, 0.5), [z1, z2]) < 1e-6


def test_nt_xent_needs_two_items():
    with pytest.raises(ValueError):
        nt_xent_loss(np.ones((1, 3)), np.ones((1, 3)))


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    arrays = {"a": rng.normal(size=(3, 4)), "b": np.array([np.pi, -0.0, 1e-300]), "c": np.zeros((2, 0))}
    save_checkpoint(tmp_path / "ck", arrays, meta={"k": 1})
    back, meta = load_checkpoint(tmp_path / "ck")
    assert meta == {"k": 1}
    for k in arrays:
        assert back[k].tobytes() == np.ascontiguousarray(arrays[k]).tobytes()
    d1 = checkpoint_digest(tmp_path / "ck")
    save_checkpoint(tmp_path / "ck", arrays, meta={"k": 1})
    assert checkpoint_digest(tmp_path / "ck") == d1


def test_checkpoint_blob_is_little_endian_float64(tmp_path):
    save_checkpoint(tmp_path / "ck", {"x": np.array([1.5, -2.0])})
    assert (tmp_path / "ck.bin").read_bytes() == np.array([1.5, -2.0], dtype="<f8").tobytes()


def test_malformed_manifest(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad")


def test_truncated_blob(tmp_path):
    save_checkpoint(tmp_path / "ck", {"x": np.ones(4)})
    (tmp_path / "ck.bin").write_bytes(b"\0" * 8)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ck")
