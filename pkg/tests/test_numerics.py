import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from npfx import numerics as nx
from npfx.numerics import (
    ShapeError, Tape, TapeError, Tensor, backward, bilinear_warp, conv2d, grad_check, no_grad,
    precision,
)

from conftest import naive_conv2d


# -- elementwise and reductions ----------------------------------------------

def test_sigmoid_at_zero():
    assert nx.sigmoid(Tensor(np.zeros(3))).data.tolist() == [0.5, 0.5, 0.5]


def test_add_vectors():
    assert (Tensor([1.0, 2.0]) + Tensor([3.0, 4.0])).data.tolist() == [4.0, 6.0]


def test_mean_of_ones():
    assert Tensor(np.ones((3, 4))).mean().item() == 1.0


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))


def test_default_dtype_is_float32_and_switchable():
    assert Tensor([1, 2]).dtype == np.float32
    with precision(np.float64):
        assert Tensor([1, 2]).dtype == np.float64


@pytest.mark.parametrize("op", [nx.add, nx.sub, nx.mul, nx.div])
@given(a=arrays(np.float64, (3, 4), elements=st.floats(-2, 2)),
       s=st.floats(0.5, 3.0))
@settings(max_examples=25, deadline=None)
def test_scalar_broadcast_equals_expanded(op, a, s):
    with precision(np.float64):
        lhs = op(Tensor(a), s).data
        rhs = op(Tensor(a), Tensor(np.full_like(a, s))).data
    assert np.array_equal(lhs, rhs)


@given(arrays(np.float64, (2, 5), elements=st.floats(-50, 50)))
@settings(max_examples=30, deadline=None)
def test_forward_ops_stay_finite(a):
    with precision(np.float64):
        t = Tensor(a)
        for out in (nx.exp(t * 0.1), nx.sigmoid(t), nx.tanh(t), nx.relu(t), t.sum(), t.mean()):
            assert np.all(np.isfinite(out.data))


# -- backward ------------------------------------------------------------------

def test_backward_sum_gives_ones():
    w = Tensor(np.arange(4.0), requires_grad=True)
    with Tape():
        g = backward(w.sum())
    assert g[w].tolist() == [1.0, 1.0, 1.0, 1.0]


def test_backward_square():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape():
        g = backward((w * w).sum())
    assert g[w].tolist() == [2.0, 4.0]


def test_backward_rejects_non_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        with pytest.raises(TapeError):
            backward(w * 2.0)


def test_backward_rejects_detached_loss():
    w = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        loss = (w * 2.0).sum().detach()
        with pytest.raises(TapeError):
            backward(loss)


def test_tape_is_consumed_once():
    w = Tensor(np.ones(3), requires_grad=True)
    with Tape():
        loss = (w * w).sum()
        backward(loss)
        with pytest.raises(TapeError):
            backward(loss)


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        with no_grad():
            _ = (w * w).sum()
        assert len(tape) == 0


def test_fan_out_accumulates():
    # w feeds two paths; d/dw [sum(w*w) + sum(3w)] = 2w + 3
    def f(w):
        return (w * w).sum() + (w * 3.0).sum()
    x = np.array([0.3, -0.7, 1.1])
    w = Tensor(x, requires_grad=True, dtype=np.float64)
    with precision(np.float64), Tape():
        g = backward(f(w))
    assert np.allclose(g[w], 2 * x + 3)
    assert grad_check(f, x) <= 1e-6


# -- gradient checks across the op suite -----------------------------------------

SUITE = {
    "add": lambda t: (t + t * 0.5).sum(),
    "sub": lambda t: ((t - 0.25) * t).sum(),
    "mul": lambda t: (t * t * t).sum(),
    "div": lambda t: (t / (t * t + 1.0)).sum(),
    "exp": lambda t: nx.exp(t).sum(),
    "log": lambda t: nx.log(t * t + 1.0).sum(),
    "sigmoid": lambda t: nx.sigmoid(t).sum(),
    "tanh": lambda t: (nx.tanh(t) * t).sum(),
    "relu": lambda t: (nx.relu(t) * t).sum(),
    "abs": lambda t: (nx.abs(t) * t).sum(),
    "power": lambda t: ((t * t + 1.0) ** 1.5).sum(),
    "mean_axis": lambda t: (t.mean(axis=1, keepdims=True) * t).sum(),
    "sum_axis": lambda t: (t.sum(axis=0) ** 2).sum(),
    "concat_slice": lambda t: (nx.concat([t, t * 2.0], axis=1)[:, 1:4] ** 2).sum(),
    "stack": lambda t: (nx.stack([t, t * t], axis=0) ** 2).sum(),
    "reshape_transpose": lambda t: (t.reshape(-1).reshape(t.shape[1], t.shape[0]) * 1.0
                                    ).transpose().__mul__(t).sum(),
    "lincomb": lambda t: (nx.lincomb([t, t * t], [0.3, -1.2]) ** 2).sum(),
}


@pytest.mark.parametrize("name", sorted(SUITE))
@pytest.mark.parametrize("seed", range(10))
def test_op_suite_gradients(name, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, (3, 4))
    if name in ("relu", "abs"):
        x = np.where(np.abs(x) < 0.05, 0.1, x)  # stay off the kink
    assert grad_check(SUITE[name], x) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_gradients(seed, stride, padding):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (2, 3, 5, 5))
    k = rng.uniform(-1, 1, (4, 3, 3, 3))
    assert grad_check(lambda t: (conv2d(t, Tensor(k), stride=stride, padding=padding) ** 2).sum(),
                      x) <= 1e-4
    assert grad_check(lambda t: (conv2d(Tensor(x), t, stride=stride, padding=padding) ** 2).sum(),
                      k) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_upsample_and_unshuffle_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (1, 2, 4, 4))
    wu = rng.uniform(-1, 1, (1, 2, 8, 8))
    wd = rng.uniform(-1, 1, (1, 8, 2, 2))
    assert grad_check(lambda t: (nx.upsample_nearest(t, 2) * wu).sum(), x) <= 1e-4
    assert grad_check(lambda t: (nx.pixel_unshuffle(t, 2) * wd).sum(), x) <= 1e-4


def _off_grid_flow(rng, shape):
    f = rng.uniform(-1.5, 1.5, shape)
    frac = f - np.floor(f)
    return np.where(np.minimum(frac, 1 - frac) < 0.05, f + 0.1, f)


@pytest.mark.parametrize("seed", range(10))
def test_warp_gradients(seed):
    rng = np.random.default_rng(seed)
    img = rng.uniform(0, 1, (2, 6, 6))
    flow = _off_grid_flow(rng, (2, 6, 6)) * 0.5
    wimg = rng.uniform(-1, 1, (2, 6, 6))
    assert grad_check(lambda f: (bilinear_warp(Tensor(img), f) * wimg).sum(), flow) <= 1e-3
    assert grad_check(lambda t: (bilinear_warp(t, Tensor(flow)) * wimg).sum(), img) <= 1e-4


def test_grad_check_of_sum_is_exact():
    # dyadic inputs and a power-of-two step keep every difference exact
    x = np.random.default_rng(0).integers(-1024, 1024, 7) / 1024.0
    assert grad_check(lambda t: t.sum(), x, step=2.0 ** -12) == 0.0
    assert grad_check(lambda t: t.sum(), np.random.default_rng(0).uniform(-1, 1, 7)) <= 1e-9


# -- conv2d --------------------------------------------------------------------

def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).uniform(-1, 1, (2, 3, 4, 4)).astype(np.float32)
    k = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    assert np.array_equal(conv2d(Tensor(x), Tensor(k)).data, x)


def test_conv2d_all_ones():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1, 1) and out.item() == 9.0


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (1, 1, 3), (2, 1, 3), (1, 2, 5), (1, 0, 1)])
def test_conv2d_matches_loop_oracle(stride, padding, k):
    rng = np.random.default_rng(stride * 10 + padding + k)
    x = rng.uniform(-1, 1, (2, 3, 5, 5))
    w = rng.uniform(-1, 1, (4, 3, k, k))
    with precision(np.float64):
        got = conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding).data
    assert np.max(np.abs(got - naive_conv2d(x, w, stride, padding))) <= 1e-6


def test_conv2d_rejects_even_kernel_and_bad_extent():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 2, 2))))
    with pytest.raises(ShapeError, match="not integral"):
        conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3))), stride=2, padding=1)


# -- warp ----------------------------------------------------------------------

def test_zero_flow_warp_is_identity_bitwise():
    img = np.random.default_rng(1).uniform(0, 1, (3, 8, 8)).astype(np.float32)
    out = bilinear_warp(Tensor(img), Tensor(np.zeros((2, 8, 8), np.float32)))
    assert np.array_equal(out.data, img)


def test_integer_shift_moves_hot_pixel_one_column():
    img = np.zeros((1, 5, 5))
    img[0, 2, 1] = 1.0
    flow = np.zeros((2, 5, 5))
    flow[0] = 1.0
    with precision(np.float64):
        out = bilinear_warp(Tensor(img), Tensor(flow)).data
    expect = np.zeros((1, 5, 5))
    expect[0, 2, 2] = 1.0
    expect[0, 2, 0] = 0.0
    assert np.array_equal(out[:, :, 1:], expect[:, :, 1:])


def test_half_pixel_flow_averages_horizontal_neighbours():
    img = np.random.default_rng(2).uniform(0, 1, (1, 4, 6))
    flow = np.zeros((2, 4, 6))
    flow[0] = 0.5
    with precision(np.float64):
        out = bilinear_warp(Tensor(img), Tensor(flow)).data
    assert np.allclose(out[0, :, 1:], 0.5 * (img[0, :, :-1] + img[0, :, 1:]))


def test_warp_clamps_out_of_bounds():
    img = np.arange(16.0).reshape(1, 4, 4)
    flow = np.full((2, 4, 4), 100.0)
    with precision(np.float64):
        out = bilinear_warp(Tensor(img), Tensor(flow)).data
    assert np.all(out == img[0, 0, 0])
