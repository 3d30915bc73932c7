import numpy as np
import pytest

from gradcheck import max_rel_err, numeric_grad
from sphdepth import functional as F
from sphdepth.checkpoint import load_checkpoint, save_checkpoint
from sphdepth.errors import CheckpointError, EmptyMaskError, GraphError, ShapeError
from sphdepth.functional import BatchNormState
from sphdepth.optim import OptimizerState, lr_schedule, sgd_step
from sphdepth.tensor import Tensor, no_grad


def param(arr):
    return Tensor(np.array(arr, dtype=np.float64), requires_grad=True)


def check_grads(build_loss, tensors, tol=1e-4, h=1e-5):
    """Compare backward() against central differences for every tensor."""
    for t in tensors:
        t.grad = None
    build_loss().backward()
    for t in tensors:
        num = numeric_grad(lambda: build_loss().item(), t.data, h)
        assert max_rel_err(t.grad, num) < tol, t.shape


def test_conv2d_ones():
    out = F.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)))
    assert out.shape == (1, 1, 1, 1) and out.item() == 9.0


def test_conv2d_identity_kernel(rng):
    x = rng.normal(size=(2, 3, 5, 6))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    assert np.array_equal(F.conv2d(x, w, pad=1).data, x)


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        F.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ShapeError):
        F.conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_gradients(rng, stride, pad):
    x = param(rng.normal(size=(1, 2, 5, 5)))
    w = param(rng.normal(size=(3, 2, 3, 3)))
    b = param(rng.normal(size=3))
    r = rng.normal(size=F.conv2d(x, w, b, stride, pad).shape)
    check_grads(lambda: F.sum(F.mul(F.conv2d(x, w, b, stride, pad), r)), [x, w, b])


def test_transposed_conv_single_pixel():
    w = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = F.transposed_conv2d(np.full((1, 1, 1, 1), 2.5), w, stride=2)
    assert np.array_equal(out.data[0, 0], 2.5 * w[0, 0])


def test_transposed_conv_output_size():
    out = F.transposed_conv2d(np.ones((1, 2, 4, 5)), np.ones((2, 3, 3, 3)), stride=2)
    assert out.shape == (1, 3, 2 * 3 + 3, 2 * 4 + 3)


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_transposed_conv_is_adjoint(rng, stride):
    n = 3
    a = rng.normal(size=(2, 3, stride * 4 + n, stride * 3 + n))
    w = rng.normal(size=(4, 3, n, n))
    ca = F.conv2d(a, w, stride=stride).data
    b = rng.normal(size=ca.shape)
    lhs = np.sum(ca * b)
    rhs = np.sum(a * F.transposed_conv2d(b, w, stride=stride).data)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_transposed_conv_gradients(rng):
    x = param(rng.normal(size=(1, 2, 3, 3)))
    w = param(rng.normal(size=(2, 3, 3, 3)))
    b = param(rng.normal(size=3))
    r = rng.normal(size=F.transposed_conv2d(x, w, b, 2).shape)
    check_grads(lambda: F.sum(F.mul(F.transposed_conv2d(x, w, b, 2), r)), [x, w, b])


def test_maxpool_values_and_ties():
    x = np.array([[[[1.0, 5.0], [5.0, 2.0]]]])
    xt = param(x)
    out = F.maxpool2d(xt, 2, 2)
    assert out.item() == 5.0
    F.sum(out).backward()
    # tie between flat positions 1 and 2 goes to 1
    assert np.array_equal(xt.grad[0, 0], [[0, 1], [0, 0]])


def test_maxpool_gradients(rng):
    x = param(rng.normal(size=(2, 2, 6, 6)))
    r = rng.normal(size=F.maxpool2d(x, 3, 2, pad=1).shape)
    check_grads(lambda: F.sum(F.mul(F.maxpool2d(x, 3, 2, pad=1), r)), [x])


def test_relu():
    assert F.relu(np.array([-3.0])).item() == 0.0
    assert F.relu(np.array([3.0])).item() == 3.0


def test_elementwise_gradients(rng):
    a = param(rng.normal(size=(2, 3, 1, 4)))
    b = param(rng.normal(size=(3, 1, 1)))
    r = rng.normal(size=(2, 3, 1, 4))
    check_grads(lambda: F.sum(F.mul(F.relu(F.add(F.mul(a, b), F.sub(a, b))), r)), [a, b])


@pytest.mark.parametrize("training", [True, False])
def test_batch_norm_gradients(rng, training):
    x = param(rng.normal(size=(3, 2, 3, 4)))
    scale = param(rng.normal(size=2))
    shift = param(rng.normal(size=2))
    r = rng.normal(size=x.shape)
    st = BatchNormState(2)
    st.running_mean, st.running_var = rng.normal(size=2), rng.uniform(0.5, 2, size=2)

    def loss():
        saved = st.running_mean.copy(), st.running_var.copy()
        out = F.sum(F.mul(F.batch_norm(x, scale, shift, st, training), r))
        st.running_mean, st.running_var = saved
        return out

    check_grads(loss, [x, scale, shift])


def test_batch_norm_statistics(rng):
    x = rng.normal(3.0, 2.0, size=(4, 3, 5, 5))
    st = BatchNormState(3)
    out = F.batch_norm(x, np.ones(3), np.zeros(3), st, training=True).data
    assert np.allclose(out.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    assert np.allclose(out.var(axis=(0, 2, 3)), 1, atol=1e-3)
    m = 4 * 5 * 5
    assert np.allclose(st.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))
    assert np.allclose(st.running_var, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * m / (m - 1))
    with no_grad():
        F.batch_norm(x, np.ones(3), np.zeros(3), st, training=True)
    assert np.allclose(st.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))


def test_l1_loss_examples():
    x = np.arange(6.0).reshape(2, 3)
    assert F.l1_loss(x, x).item() == 0.0
    assert F.l1_loss(np.array([1.0, 2.0]), np.array([2.0, 4.0])).item() == 1.5
    mask = np.array([True, False])
    assert F.l1_loss(np.array([1.0, 2.0]), np.array([2.0, 9.0]), mask).item() == 1.0
    with pytest.raises(EmptyMaskError):
        F.l1_loss(x, x, np.zeros_like(x, bool))
    with pytest.raises(ShapeError):
        F.l1_loss(x, x.T)


def test_l1_loss_gradient(rng):
    p = param(rng.normal(size=(2, 1, 3, 3)))
    t = rng.normal(size=(2, 1, 3, 3))
    mask = rng.random(size=t.shape) > 0.3
    check_grads(lambda: F.l1_loss(p, t, mask), [p])


def test_resampling_gradients(rng):
    x = param(rng.normal(size=(1, 2, 3, 4)))
    r1 = rng.normal(size=(1, 2, 6, 8))
    check_grads(lambda: F.sum(F.mul(F.upsample_nearest(x, 2), r1)), [x])
    r2 = rng.normal(size=(1, 2, 5, 7))
    check_grads(lambda: F.sum(F.mul(F.resize_bilinear(x, (5, 7)), r2)), [x])
    r3 = rng.normal(size=(1, 2, 2, 2))
    check_grads(lambda: F.sum(F.mul(F.crop(x, 1, 1, 2, 2), r3)), [x])


def test_resize_bilinear_preserves_constants():
    out = F.resize_bilinear(np.full((1, 1, 4, 6), 2.5), (7, 3)).data
    assert np.allclose(out, 2.5, atol=1e-14)


def test_backward_linear_and_fanout(rng):
    x = rng.normal(size=5)
    w = param(rng.normal(size=5))
    F.sum(F.mul(w, x)).backward()
    assert np.array_equal(w.grad, x)

    w2 = param([1.5])
    F.sum(F.add(w2, w2)).backward()
    assert w2.grad[0] == 2.0


def test_backward_requires_scalar():
    with pytest.raises(GraphError):
        F.mul(param([1.0, 2.0]), 2.0).backward()


def test_unused_parameter_gets_no_gradient(rng):
    a, b = param(rng.normal(size=3)), param(rng.normal(size=3))
    F.sum(F.mul(a, a)).backward()
    assert b.grad is None


def test_no_grad_records_nothing():
    a = param([1.0])
    with no_grad():
        out = F.mul(a, 3.0)
    assert not out.requires_grad


def test_sgd_examples():
    w = param([1.0])
    w.grad = np.array([0.0])
    sgd_step({"w": w}, OptimizerState(0.1, 0.0, 0.0))
    assert w.data[0] == 1.0

    w.grad = np.array([1.0])
    sgd_step({"w": w}, OptimizerState(0.1, 0.0, 0.0))
    assert w.data[0] == pytest.approx(0.9, abs=1e-15)
    assert w.grad is None

    w = param([0.0])
    opt = OptimizerState(0.1, 0.9, 0.0)
    for _ in range(2):
        w.grad = np.array([1.0])
        sgd_step({"w": w}, opt)
    assert w.data[0] == pytest.approx(-0.29, abs=1e-15)


def test_sgd_weight_decay_and_exemptions():
    w, s = param([2.0]), param([2.0])
    w.grad, s.grad = np.zeros(1), np.zeros(1)
    sgd_step({"w": w, "s": s}, OptimizerState(0.5, 0.0, 0.1, no_decay=frozenset({"s"})))
    assert w.data[0] == pytest.approx(2.0 - 0.5 * 0.2)
    assert s.data[0] == 2.0


def test_sgd_zero_lr_is_identity(rng):
    w = param(rng.normal(size=(3, 3)))
    before = w.data.copy()
    w.grad = rng.normal(size=(3, 3))
    sgd_step({"w": w}, OptimizerState(0.0, 0.9, 1e-4))
    assert np.array_equal(w.data, before)


def test_lr_schedule():
    assert lr_schedule(0, 0.01) == 0.01
    assert lr_schedule(4, 0.01) == 0.01
    assert lr_schedule(10, 0.01) == pytest.approx(0.0064, abs=1e-18)


def test_checkpoint_round_trip(tmp_path, rng):
    arrays = {"a": rng.normal(size=(2, 3)), "bias": rng.normal(size=4), "scalar": np.array(1.25),
              "ünï": np.array([np.pi, -0.0, 1e-300])}
    p1, p2 = tmp_path / "a.sdck", tmp_path / "b.sdck"
    save_checkpoint(p1, arrays)
    loaded = load_checkpoint(p1)
    assert list(loaded) == list(arrays)
    for k in arrays:
        assert loaded[k].shape == np.shape(arrays[k])
        assert loaded[k].tobytes() == np.asarray(arrays[k]).tobytes()
    save_checkpoint(p2, loaded)
    assert p1.read_bytes() == p2.read_bytes()
    raw = p1.read_bytes()
    assert raw[:4] == b"SDCK" and int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 4


def test_checkpoint_rejects_bad_files(tmp_path):
    p = tmp_path / "x.sdck"
    p.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    p.write_bytes(b"SDCK" + (2).to_bytes(4, "little") + (0).to_bytes(4, "little"))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    save_checkpoint(p, {"w": np.ones(10)})
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
