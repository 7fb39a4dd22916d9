"""Finite-difference and semantics checks for the tensor core."""

import numpy as np
import pytest

import escounts.numerics as nm
from escounts.numerics import GradTape, NonFiniteError, Tensor, tensor


def numeric_grad(f, x, h=1e-3):
    """Central finite differences of a scalar-valued f at x, float64 carry."""
    g = np.zeros(x.size, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        up = flat.copy()
        dn = flat.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up.reshape(x.shape)) - f(dn.reshape(x.shape))) / (2 * h)
    return g.reshape(x.shape)


def check_grad(build, x0, tol=1e-4, h=2e-3):
    """build(tensor) -> scalar Tensor; compares tape grad to central FD.

    The loss is rescaled toward ~0.25 before differencing: float32 FD
    noise grows with |loss| (eps * |L| / h) and would swamp the tolerance
    for losses much above 1.
    """
    raw = abs(build(tensor(x0)).item())
    c = 0.25 / max(raw, 0.25)

    def scaled(t):
        return nm.mul(build(t), c)

    t = tensor(x0, requires_grad=True)
    with GradTape() as tape:
        out = scaled(t)
        tape.backward(out)
    analytic = t.grad.astype(np.float64)

    def f(arr):
        return scaled(tensor(arr.astype(np.float32))).item()

    numeric = numeric_grad(f, x0.astype(np.float64), h=h)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1.0)
    err = np.max(np.abs(analytic - numeric)) / scale
    assert err < tol, f"rel err {err:.2e}"


def test_tensor_basics():
    t = tensor([[1.0, 2.0], [3.0, 4.0]])
    assert t.data.dtype == np.float32
    assert not t.data.flags.writeable
    assert t.shape == (2, 2)
    assert not t.requires_grad
    # the constructor copies: mutating the source must not leak in
    src = np.ones(3, dtype=np.float32)
    t2 = Tensor(src)
    src[0] = 5.0
    assert t2.data[0] == 1.0


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteError):
        tensor([np.inf, 1.0])
    a = tensor([1e30], requires_grad=True)
    with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
        with GradTape() as tape:
            out = nm.mul(nm.mul(a, a), nm.mul(a, a))
            tape.backward(out)


def test_tape_discipline():
    a = tensor([2.0, 3.0], requires_grad=True)
    with GradTape() as tape:
        with pytest.raises(RuntimeError):
            with GradTape():
                pass
        out = nm.tsum(nm.mul(a, a))
        with pytest.raises(ValueError):
            tape.backward(nm.mul(a, a))  # non-scalar
        tape.backward(out)
    assert np.allclose(a.grad, [4.0, 6.0])


def test_constant_branches_skipped():
    a = tensor([1.0, 2.0], requires_grad=True)
    const = tensor([3.0, 4.0])
    with GradTape() as tape:
        out = nm.tsum(nm.mul(a, const))
        tape.backward(out)
    assert np.allclose(a.grad, [3.0, 4.0])
    assert const.grad is None


def test_requires_grad_propagates_through_chains():
    w = tensor([1.0, -1.0], requires_grad=True)
    with GradTape() as tape:
        mid = nm.add(w, 1.0)
        assert mid.requires_grad
        out = nm.tsum(nm.mul(mid, 2.0))
        tape.backward(out)
    assert np.allclose(w.grad, [2.0, 2.0])


def test_elementwise_grads():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4)).astype(np.float32)
    y = rng.standard_normal((3, 4)).astype(np.float32)
    check_grad(lambda t: nm.tsum(nm.mul(nm.add(t, tensor(y)), nm.sub(t, tensor(y)))), x)
    check_grad(lambda t: nm.tsum(nm.neg(nm.mul(t, t))), x)
    check_grad(lambda t: nm.tsum(nm.tabs(t)), x + 0.3)  # keep away from the kink
    check_grad(lambda t: nm.tmean(nm.gelu(t)), x)
    check_grad(lambda t: nm.tsum(nm.softplus(t)), x)


def test_broadcast_grads():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4,)).astype(np.float32)
    other = rng.standard_normal((3, 4)).astype(np.float32)
    check_grad(lambda t: nm.tsum(nm.mul(t, tensor(other))), x)
    check_grad(lambda t: nm.tsum(nm.add(t, tensor(other))), x)
    b = tensor(np.float32(2.5))
    with GradTape() as tape:
        t = tensor(x, requires_grad=True)
        out = nm.tsum(nm.mul(t, b))
        tape.backward(out)
    assert np.allclose(t.grad, np.full(4, 2.5, dtype=np.float32))


def test_matmul_grads_and_value():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 4)).astype(np.float32)
    b = rng.standard_normal((4, 5)).astype(np.float32)
    got = nm.matmul(tensor(a), tensor(b)).data
    assert np.allclose(got, a @ b, atol=1e-6)
    check_grad(lambda t: nm.tsum(nm.matmul(t, tensor(b))), a)
    check_grad(lambda t: nm.tsum(nm.matmul(tensor(a), t)), b)
    # batched
    a3 = rng.standard_normal((2, 3, 4)).astype(np.float32)
    b3 = rng.standard_normal((2, 4, 3)).astype(np.float32)
    check_grad(lambda t: nm.tsum(nm.matmul(t, tensor(b3))), a3)
    check_grad(lambda t: nm.tsum(nm.matmul(tensor(a3), t)), b3)


def test_shape_op_grads():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 4)).astype(np.float32)
    w = rng.standard_normal((4, 3, 2)).astype(np.float32)
    check_grad(lambda t: nm.tsum(nm.mul(nm.permute(t, (2, 1, 0)), tensor(w))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.transpose_last2(t), tensor(np.swapaxes(x, -1, -2)))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.reshape(t, (6, 4)), tensor(x.reshape(6, 4)))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.roll(t, (1, 2), (0, 2)), tensor(x))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.pad(t, ((1, 1), (0, 0), (2, 0))), tensor(np.ones((4, 3, 6), np.float32)))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.crop(t, ((0, 2), (1, 3), (0, 4))), tensor(x[0:2, 1:3, 0:4]))), x)


def test_roll_pad_crop_round_trips():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 5)).astype(np.float32)
    t = tensor(x)
    rolled = nm.roll(nm.roll(t, (2,), (1,)), (-2,), (1,))
    assert np.array_equal(rolled.data, x)
    padded = nm.pad(t, ((1, 2), (0, 1)))
    assert padded.shape == (6, 6)
    assert np.array_equal(nm.crop(padded, ((1, 4), (0, 5))).data, x)


def test_reductions():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 4)).astype(np.float32)
    assert np.allclose(nm.tsum(tensor(x)).item(), x.sum(), atol=1e-5)
    assert np.allclose(nm.tmean(tensor(x), axis=0).data, x.mean(0), atol=1e-6)
    assert nm.tsum(tensor(x), axis=1, keepdims=True).shape == (3, 1)
    check_grad(lambda t: nm.tsum(nm.mul(nm.tsum(t, axis=0), tensor(x[0]))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.tmean(t, axis=1, keepdims=True), tensor(x[:, :1]))), x)


def test_softmax_rows():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((5, 7)).astype(np.float32) * 3
    s = nm.softmax_lastdim(tensor(x)).data
    assert np.allclose(s.sum(-1), 1.0, atol=1e-6)
    assert np.all(s > 0)
    # large logits stay finite (max subtraction)
    big = nm.softmax_lastdim(tensor(np.array([[1000.0, 1000.0]], np.float32))).data
    assert np.allclose(big, 0.5)
    probe = tensor(rng.standard_normal((5, 7)).astype(np.float32))
    check_grad(lambda t: nm.tsum(nm.mul(nm.softmax_lastdim(t), probe)), x)


def test_layer_norm_moments_and_grad():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((4, 16)).astype(np.float32) * 2 + 1
    gain = tensor(np.ones(16, np.float32))
    bias = tensor(np.zeros(16, np.float32))
    y = nm.layer_norm(tensor(x), gain, bias).data
    assert np.max(np.abs(y.mean(-1))) < 1e-6
    assert np.max(np.abs(y.var(-1) - 1.0)) < 1e-4  # eps keeps var just under 1
    g0 = rng.standard_normal(16).astype(np.float32)
    b0 = rng.standard_normal(16).astype(np.float32)
    probe = rng.standard_normal((4, 16)).astype(np.float32)
    check_grad(lambda t: nm.tsum(nm.mul(nm.layer_norm(t, tensor(g0), tensor(b0)), tensor(probe))), x)
    check_grad(lambda t: nm.tsum(nm.mul(nm.layer_norm(tensor(x), t, tensor(b0)), tensor(probe))), g0)
    check_grad(lambda t: nm.tsum(nm.mul(nm.layer_norm(tensor(x), tensor(g0), t), tensor(probe))), b0)


def test_grad_accumulates_across_uses():
    a = tensor([3.0], requires_grad=True)
    with GradTape() as tape:
        out = nm.tsum(nm.add(nm.mul(a, a), nm.mul(a, 2.0)))
        tape.backward(out)
    assert np.allclose(a.grad, [8.0])  # 2a + 2


def test_composite_expression_grad():
    # one deep chain exercising most ops together
    rng = np.random.default_rng(8)
    x = rng.standard_normal((6, 8)).astype(np.float32)
    w = rng.standard_normal((8, 8)).astype(np.float32)
    g = np.ones(8, np.float32)
    b = np.zeros(8, np.float32)

    def build(t):
        h = nm.layer_norm(t, tensor(g), tensor(b))
        h = nm.matmul(h, tensor(w))
        h = nm.gelu(h)
        h = nm.add(h, t)
        att = nm.softmax_lastdim(nm.matmul(h, nm.transpose_last2(h)))
        h = nm.matmul(att, h)
        return nm.mul(nm.tmean(nm.mul(h, h)), 0.25)

    check_grad(build, x)
