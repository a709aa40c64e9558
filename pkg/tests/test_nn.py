import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnjed.nn import (Adam, CheckpointError, Mlp, Tape, Tensor, bce_loss, bce_with_logits, bmi_estimate,
                       golden_section_max, load_checkpoint, multi_loss, save_checkpoint)
from gnnjed.nn import tensor as T

from gradcheck import op_gradient_errors
from oracles import central_difference, rel_error


def test_forward_examples():
    assert T.relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    assert T.sigmoid(Tensor(0.0)).item() == 0.5
    assert T.concat([Tensor([1.0]), Tensor([2.0])]).data.tolist() == [1.0, 2.0]
    assert T.sigmoid(Tensor([-800.0, 800.0])).data.tolist() == [0.0, 1.0]


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_backward_linear_and_mean():
    w = Tensor([0.5, -1.0, 2.0], requires_grad=True)
    x = np.array([3.0, 4.0, 5.0])
    with Tape() as tape:
        loss = T.tsum(T.mul(w, x))
    assert tape.backward(loss)[w].tolist() == x.tolist()
    with Tape() as tape:
        loss = T.mean(w)
    np.testing.assert_allclose(tape.backward(loss)[w], np.full(3, 1 / 3))


def test_backward_on_unrecorded_tensor():
    with Tape() as tape:
        pass
    with pytest.raises(RuntimeError):
        tape.backward(Tensor(1.0))


def test_gradient_accumulates_over_reuse():
    w = Tensor([2.0], requires_grad=True)
    with Tape() as tape:
        loss = T.tsum(T.add(T.mul(w, w), T.scale(w, 3.0)))
    assert tape.backward(loss)[w].tolist() == [7.0]


def test_every_primitive_matches_finite_differences():
    errs = op_gradient_errors(seed=0)
    assert max(errs.values()) < 1e-4, errs


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_primitives_random_seeds(seed):
    assert max(op_gradient_errors(seed=seed).values()) < 1e-4


def test_mlp_three_layers_finite_differences():
    rng = np.random.default_rng(0)
    mlp = Mlp([4, 6, 5, 4], rng, dtype=np.float64)
    x = rng.normal(size=(3, 4))
    r = rng.normal(size=(3, 4))
    with Tape() as tape:
        loss = T.tsum(T.mul(mlp(x), r))
    grads = tape.backward(loss)
    f = lambda: float(np.sum(mlp(x).data * r))
    for p in mlp.parameters().values():
        num = central_difference(f, p.data, 1e-4)
        assert np.max(rel_error(grads[p], num, floor=1e-6)) < 1e-4


def test_mlp_blocks_equal_concat():
    rng = np.random.default_rng(1)
    mlp = Mlp([6, 8, 2], rng, dtype=np.float64)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(2,))
    joined = np.concatenate([a, np.broadcast_to(b, (5, 2))], axis=1)
    np.testing.assert_allclose(mlp(a, b).data, mlp(joined).data, atol=1e-12)
    with pytest.raises(ValueError):
        mlp(a)


def test_mlp_layout():
    mlp = Mlp([48, 64, 64, 16])
    assert [w.shape for w in mlp.weights] == [(48, 64), (64, 64), (64, 16)]
    assert all(not b.data.any() for b in mlp.biases)
    lim = np.sqrt(6 / (48 + 64))
    assert np.abs(mlp.weights[0].data).max() <= lim


def test_bce_examples():
    assert bce_loss([0.25], [1]).item() == pytest.approx(2.0, abs=1e-12)
    assert bce_loss(np.full(8, 0.5), np.arange(8) % 2).item() == pytest.approx(1.0, abs=1e-12)
    assert bce_loss([1.0, 0.0], [1, 0]).item() < 1e-6
    with pytest.raises(ValueError):
        bce_loss([0.5, 0.5], [1])


def test_bce_with_logits_matches_probability_form():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=50) * 4
    bits = rng.integers(0, 2, 50)
    a = bce_with_logits(logits, bits).item()
    b = bce_loss(1 / (1 + np.exp(-logits)), bits).item()
    assert a == pytest.approx(b, rel=1e-9)
    assert np.isfinite(bce_with_logits(np.array([1e4, -1e4]), np.array([0, 1])).item())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.integers(0, 1000))
def test_bce_non_negative(ps, seed):
    bits = np.random.default_rng(seed).integers(0, 2, len(ps))
    assert bce_loss(np.array(ps), bits).item() >= 0


def test_multi_loss():
    assert multi_loss([Tensor(3.0)]).item() == 3.0
    assert multi_loss([Tensor(1.0), Tensor(3.0)]).item() == 2.0
    assert multi_loss([Tensor(0.7)] * 5).item() == pytest.approx(0.7)
    with pytest.raises(ValueError):
        multi_loss([])


def test_adam_zero_grad_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam({"p": p}, lr=0.1)
    opt.step({"p": np.zeros(2)})
    assert p.data.tolist() == [1.0, -2.0]


def test_adam_first_step_is_sign():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam({"p": p}, lr=1e-3)
    opt.step({"p": np.array([5.0, -0.01, 200.0])})
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3, -1e-3], rtol=1e-5)


def test_adam_deterministic_and_nan_guard():
    def run():
        p = Tensor(np.ones(4), requires_grad=True)
        opt = Adam({"p": p}, lr=0.01)
        rng = np.random.default_rng(3)
        for _ in range(10):
            opt.step({"p": rng.normal(size=4)})
        return p.data

    assert np.array_equal(run(), run())
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(FloatingPointError, match="'w'"):
        Adam({"w": p}).step({"w": np.array([np.nan, 0.0])})


def test_adam_clip_norm():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam({"p": p}, lr=1.0, clip_norm=1.0)
    opt.step({"p": np.array([300.0, 400.0])})
    # clipping rescales but the bias-corrected first step is still the sign
    np.testing.assert_allclose(p.data, [-1.0, -1.0], rtol=1e-6)


def test_bmi_limits():
    bits = np.arange(100) % 2
    perfect = np.where(bits == 0, 30.0, -30.0)
    assert bmi_estimate(perfect, bits, damping=1.0)[0] > 0.999
    assert bmi_estimate(np.zeros(100), bits, damping=1.0)[0] == pytest.approx(0.0, abs=1e-12)


def test_bmi_optimized_never_below_unit_damping():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, 2000)
    llr = (1 - 2 * bits) * 3.0 + rng.normal(scale=4.0, size=2000)  # overconfident LLRs
    b1, _ = bmi_estimate(llr, bits, damping=1.0)
    bopt, alpha = bmi_estimate(llr, bits)
    assert bopt >= b1 and alpha < 1.0


def test_golden_section():
    assert golden_section_max(lambda x: -(x - 1.3) ** 2, 0, 5) == pytest.approx(1.3, abs=1e-4)


def test_checkpoint_roundtrip(tmp_path):
    arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b/c": np.array([1.5], dtype=np.float32)}
    path = save_checkpoint(tmp_path / "x.ckpt", arrays, {"note": "hi"})
    got, meta = load_checkpoint(path)
    assert meta == {"note": "hi"}
    assert all(np.array_equal(got[k], arrays[k]) and got[k].dtype == np.float32 for k in arrays)
    head = path.read_bytes().split(b"\n", 1)[0].decode()
    assert head.startswith("GNNJED-CKPT 1 ")


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"hello\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    p.write_bytes(b"GNNJED-CKPT 99 2\n{}")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
