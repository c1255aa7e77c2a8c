"""Tensor core: tape mechanics, every op's forward oracle, finite differences."""

import numpy as np
import pytest

from depthpolyp import autodiff as ad
from depthpolyp.autodiff import Tensor
from depthpolyp.errors import ConfigurationError, DimensionError, UsageError

RNG = np.random.default_rng


def t64(shape, seed, lo=-1.0, hi=1.0, grad=True):
    return Tensor(RNG(seed).uniform(lo, hi, size=shape), requires_grad=grad)


# ---------------------------------------------------------------------------
# Tensor and tape basics


def test_tensor_wraps_and_normalizes():
    t = Tensor([1.0, 2.0])
    assert t.shape == (2,)
    assert not t.requires_grad
    t.data = t.data + 1.0
    assert isinstance(t.data, np.ndarray)


def test_scalar_tensor_data_stays_mutable():
    # 0-d numpy arithmetic decays to immutable scalars; the setter must
    # re-wrap so in-place pokes (finite differences) keep working.
    t = Tensor(np.float32(1.5), requires_grad=True)
    t.data = t.data + 0.25
    view = t.data.reshape(-1)
    view[0] += 1.0
    assert float(t.data) == pytest.approx(2.75)


def test_rank_limit():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((1, 1, 1, 1, 1)))


def test_backward_requires_scalar_loss():
    x = t64((3,), 0)
    y = ad.mul(x, x)
    with pytest.raises(UsageError):
        ad.backward(y)


def test_backward_consumes_tape():
    x = t64((3,), 1)
    loss = ad.sum_all(ad.mul(x, x))
    ad.backward(loss)
    assert len(ad.tape()) == 0


def test_no_grad_records_nothing():
    x = t64((3,), 2)
    with ad.no_grad():
        ad.sum_all(ad.mul(x, x))
    assert len(ad.tape()) == 0


def test_sum_grad_is_ones():
    x = t64((2, 3), 3)
    ad.backward(ad.sum_all(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_sum_of_square_grad_is_2x():
    x = t64((4,), 4)
    ad.backward(ad.sum_all(ad.mul(x, x)))
    assert np.allclose(x.grad, 2 * x.data, atol=1e-12)


def test_grad_accumulates_across_uses():
    x = t64((3,), 5)
    y = ad.add(ad.sum_all(x), ad.sum_all(x))
    ad.backward(y)
    assert np.allclose(x.grad, 2.0)


# ---------------------------------------------------------------------------
# Elementwise and reduction oracles


def test_arithmetic_values():
    a = Tensor([2.0, -4.0])
    b = Tensor([1.0, 8.0])
    assert np.allclose(ad.add(a, b).data, [3.0, 4.0])
    assert np.allclose(ad.sub(a, b).data, [1.0, -12.0])
    assert np.allclose(ad.mul(a, b).data, [2.0, -32.0])
    assert np.allclose(ad.div(a, b).data, [2.0, -0.5])


def test_relu_values():
    x = Tensor([-1.0, 0.0, 2.0])
    assert np.array_equal(ad.relu(x).data, [0.0, 0.0, 2.0])


def test_sigmoid_center_and_saturation():
    x = Tensor([0.0, 40.0, -40.0])
    s = ad.sigmoid(x).data
    assert s[0] == pytest.approx(0.5)
    assert s[1] == pytest.approx(1.0)
    assert s[2] == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.isfinite(s))


def test_sigmoid_grad_at_zero_is_quarter():
    x = Tensor(np.zeros(1), requires_grad=True)
    ad.backward(ad.sum_all(ad.sigmoid(x)))
    assert x.grad[0] == pytest.approx(0.25)
    err = ad.grad_check(lambda: ad.sum_all(ad.sigmoid(x)), [x], h=1e-5)
    assert err < 1e-6


def test_mean_all():
    x = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3))
    assert float(ad.mean_all(x).data) == pytest.approx(2.5)


def test_binary_op_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.zeros(2)), Tensor(np.zeros(3)))


# ---------------------------------------------------------------------------
# Convolution oracles


def test_conv2d_delta_kernel_is_identity():
    x = t64((1, 1, 6, 6), 10)
    delta = np.zeros((1, 1, 3, 3))
    delta[0, 0, 1, 1] = 1.0
    out = ad.conv2d(x, Tensor(delta))
    assert np.allclose(out.data, x.data, atol=1e-12)


def test_conv2d_stride_two_shape():
    x = t64((2, 3, 9, 9), 11)
    w = t64((5, 3, 3, 3), 12)
    assert ad.conv2d(x, w, stride=2).shape == (2, 5, 5, 5)


def test_pointwise_matches_general_conv():
    x = t64((2, 4, 5, 5), 13)
    w = t64((6, 4, 1, 1), 14)
    a = ad.conv2d_pointwise(x, w).data
    b = ad.conv2d(x, w).data
    assert np.allclose(a, b, atol=1e-12)


def test_depthwise_constant_kernel_averages_window():
    x = Tensor(np.ones((1, 2, 4, 4)))
    w = Tensor(np.full((2, 1, 3, 3), 1.0 / 9.0))
    out = ad.conv2d_depthwise(x, w)
    # interior of a constant image under an averaging kernel is constant
    assert np.allclose(out.data[:, :, 1:-1, 1:-1], 1.0, atol=1e-12)


def test_depthwise_multiplier_channel_layout():
    x = t64((1, 2, 4, 4), 15)
    w = t64((4, 1, 1, 1), 16)  # multiplier 2, 1x1 taps
    out = ad.conv2d_depthwise(x, w)
    assert out.shape == (1, 4, 4, 4)
    # output channel c*m + j scales input channel c by w[c*m + j]
    assert np.allclose(out.data[0, 1], x.data[0, 0] * w.data[1, 0, 0, 0])
    assert np.allclose(out.data[0, 2], x.data[0, 1] * w.data[2, 0, 0, 0])


# ---------------------------------------------------------------------------
# Normalization


def test_batchnorm_normalizes_batch():
    x = t64((4, 3, 5, 5), 20)
    gamma = Tensor(np.ones(3), requires_grad=True)
    beta = Tensor(np.zeros(3), requires_grad=True)
    rm, rv = np.zeros(3), np.ones(3)
    out = ad.batchnorm2d(x, gamma, beta, rm, rv, training=True).data
    for c in range(3):
        assert out[:, c].mean() == pytest.approx(0.0, abs=1e-7)
        assert out[:, c].var() == pytest.approx(1.0, rel=1e-4)


def test_batchnorm_constant_input_yields_beta():
    x = Tensor(np.full((2, 2, 3, 3), 7.0))
    gamma = Tensor(np.ones(2))
    beta = Tensor(np.array([0.3, -0.2]))
    rm, rv = np.zeros(2), np.ones(2)
    out = ad.batchnorm2d(x, gamma, beta, rm, rv, training=True).data
    assert np.allclose(out[:, 0], 0.3, atol=1e-4)
    assert np.allclose(out[:, 1], -0.2, atol=1e-4)


def test_batchnorm_running_stats_update_and_eval_path():
    x = t64((8, 2, 4, 4), 21)
    gamma = Tensor(np.ones(2))
    beta = Tensor(np.zeros(2))
    rm, rv = np.zeros(2), np.ones(2)
    ad.batchnorm2d(x, gamma, beta, rm, rv, training=True, momentum=0.1)
    batch_mean = x.data.mean(axis=(0, 2, 3))
    assert np.allclose(rm, 0.1 * batch_mean, atol=1e-7)
    # eval mode consumes the running stats and must not touch them
    rm_before = rm.copy()
    out = ad.batchnorm2d(x, gamma, beta, rm, rv, training=False).data
    assert np.array_equal(rm, rm_before)
    expect = (x.data - rm.reshape(1, 2, 1, 1)) / np.sqrt(rv.reshape(1, 2, 1, 1) + 1e-5)
    assert np.allclose(out, expect, atol=1e-6)


def test_batchnorm_grad_matches_finite_differences():
    x = t64((3, 2, 4, 4), 22)
    gamma = t64((2,), 23, lo=0.5, hi=1.5)
    beta = t64((2,), 24)
    rm, rv = np.zeros(2), np.ones(2)
    cot = Tensor(RNG(25).standard_normal((3, 2, 4, 4)))

    def f():
        out = ad.batchnorm2d(x, gamma, beta, rm.copy(), rv.copy(), training=True)
        return ad.sum_all(ad.mul(out, cot))

    assert ad.grad_check(f, [x, gamma, beta], h=1e-3) < 1e-3


# ---------------------------------------------------------------------------
# Layout ops


def test_concat_and_slice_layout():
    a = t64((1, 2, 3, 3), 30)
    b = t64((1, 3, 3, 3), 31)
    cat = ad.concat_channels([a, b])
    assert cat.shape == (1, 5, 3, 3)
    assert np.array_equal(cat.data[:, 2], b.data[:, 0])
    back = ad.slice_channels(cat, 2, 5)
    assert np.array_equal(back.data, b.data)


def test_concat_backward_is_ones_on_every_input():
    a = t64((1, 2, 3, 3), 32)
    b = t64((1, 3, 3, 3), 33)
    ad.backward(ad.sum_all(ad.concat_channels([a, b])))
    assert np.array_equal(a.grad, np.ones_like(a.data))
    assert np.array_equal(b.grad, np.ones_like(b.data))


def test_shuffle_permutation_small_case():
    assert list(ad.shuffle_permutation(4, 2)) == [0, 2, 1, 3]


def test_channel_shuffle_forward_then_inverse_is_identity():
    x = t64((2, 12, 4, 4), 34)
    once = ad.channel_shuffle(x, 4)
    back = ad.channel_shuffle(once, 3)  # G then C/G undoes the transpose
    assert np.array_equal(back.data, x.data)


def test_channel_shuffle_preserves_value_multiset():
    x = t64((1, 8, 3, 3), 35)
    out = ad.channel_shuffle(x, 2)
    assert np.array_equal(np.sort(out.data.ravel()), np.sort(x.data.ravel()))


def test_channel_shuffle_rejects_bad_group_count():
    with pytest.raises(ConfigurationError):
        ad.channel_shuffle(t64((1, 6, 2, 2), 36), 4)


def test_group_avgpool_values():
    x = Tensor(np.arange(16, dtype=np.float64).reshape(1, 4, 2, 2))
    out = ad.group_avgpool(x, 2)
    assert out.shape == (1, 2)
    assert out.data[0, 0] == pytest.approx(x.data[0, :2].mean())
    assert out.data[0, 1] == pytest.approx(x.data[0, 2:].mean())


def test_group_scale_broadcasts_per_group():
    x = Tensor(np.ones((1, 4, 2, 2)))
    out = ad.group_scale(x, Tensor(np.array([2.0, -1.0])), 2)
    assert np.allclose(out.data[0, :2], 2.0)
    assert np.allclose(out.data[0, 2:], -1.0)


def test_group_gate_broadcasts_per_sample_and_group():
    x = Tensor(np.ones((2, 4, 2, 2)))
    gates = Tensor(np.array([[0.5, 1.0], [2.0, 0.0]]))
    out = ad.group_gate(x, gates, 2)
    assert np.allclose(out.data[0, :2], 0.5)
    assert np.allclose(out.data[1, :2], 2.0)
    assert np.allclose(out.data[1, 2:], 0.0)


def test_linear_matches_matmul():
    x = t64((3, 5), 37)
    w = t64((4, 5), 38)
    b = t64((4,), 39)
    out = ad.linear(x, w, b)
    assert np.allclose(out.data, x.data @ w.data.T + b.data, atol=1e-12)


# ---------------------------------------------------------------------------
# Upsampling


def _scalar_bilinear(src, n_out):
    """Independent half-pixel-center reference, one output pixel at a time."""
    n_in = src.shape[0]
    out = np.zeros((n_out, n_out))
    scale = n_in / n_out
    for oy in range(n_out):
        for ox in range(n_out):
            sy = min(max((oy + 0.5) * scale - 0.5, 0.0), n_in - 1)
            sx = min(max((ox + 0.5) * scale - 0.5, 0.0), n_in - 1)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, n_in - 1), min(x0 + 1, n_in - 1)
            fy, fx = sy - y0, sx - x0
            out[oy, ox] = (src[y0, x0] * (1 - fy) * (1 - fx)
                           + src[y0, x1] * (1 - fy) * fx
                           + src[y1, x0] * fy * (1 - fx)
                           + src[y1, x1] * fy * fx)
    return out


def test_upsample_matches_scalar_reference():
    src = np.array([[1.0, 3.0], [5.0, 7.0]])
    out = ad.upsample_bilinear(Tensor(src[None, None]), (4, 4)).data[0, 0]
    assert np.allclose(out, _scalar_bilinear(src, 4), atol=1e-12)
    big = RNG(40).uniform(size=(5, 5))
    out2 = ad.upsample_bilinear(Tensor(big[None, None]), (8, 8)).data[0, 0]
    assert np.allclose(out2, _scalar_bilinear(big, 8), atol=1e-12)


def test_upsample_preserves_constants_and_identity():
    x = Tensor(np.full((1, 2, 3, 3), 0.75))
    up = ad.upsample_bilinear(x, (9, 9))
    assert np.allclose(up.data, 0.75, atol=1e-12)
    same = ad.upsample_bilinear(x, (3, 3))
    assert np.array_equal(same.data, x.data)


def test_upsample_rejects_shrinking():
    with pytest.raises(ConfigurationError):
        ad.upsample_bilinear(t64((1, 1, 4, 4), 41), (2, 2))


# ---------------------------------------------------------------------------
# Smooth L1


def test_smooth_l1_values():
    p = Tensor(np.full((2, 2), 0.5))
    t = Tensor(np.zeros((2, 2)))
    assert float(ad.smooth_l1(p, t).data) == pytest.approx(0.125)
    assert float(ad.smooth_l1(t, t).data) == pytest.approx(0.0)
    # linear branch: residual 2 -> 2 - 0.5
    p2 = Tensor(np.full((2, 2), 2.0))
    assert float(ad.smooth_l1(p2, t).data) == pytest.approx(1.5)


def test_smooth_l1_grad_matches_finite_differences():
    p = t64((3, 4), 42)
    t = Tensor(RNG(43).uniform(-1, 1, size=(3, 4)))
    err = ad.grad_check(lambda: ad.smooth_l1(p, t), [p], h=1e-4)
    assert err < 1e-5


# ---------------------------------------------------------------------------
# Finite-difference sweep over every differentiable op


def _fd_cases():
    """(name, closure, wrt) triples; cotangents are fixed ahead of time."""
    cases = []
    r = RNG(100)

    def T(shape, lo=-1.0, hi=1.0):
        return Tensor(r.uniform(lo, hi, size=shape), requires_grad=True)

    def C(shape):
        return Tensor(r.standard_normal(shape))

    a, b = T((2, 3)), T((2, 3))
    cases.append(("add", lambda: ad.sum_all(ad.add(a, b)), [a, b]))
    cases.append(("sub", lambda: ad.sum_all(ad.sub(a, b)), [a, b]))
    cases.append(("mul", lambda: ad.sum_all(ad.mul(a, b)), [a, b]))
    d1, d2 = T((2, 3)), T((2, 3), lo=1.0, hi=2.0)
    cases.append(("div", lambda: ad.sum_all(ad.div(d1, d2)), [d1, d2]))

    # relu needs inputs away from its kink for h=1e-3
    raw = r.uniform(-1, 1, size=(3, 4))
    xr = Tensor(np.sign(raw) * (0.1 + np.abs(raw)), requires_grad=True)
    cr = C((3, 4))
    cases.append(("relu", lambda: ad.sum_all(ad.mul(ad.relu(xr), cr)), [xr]))

    xs = T((3, 4))
    cs = C((3, 4))
    cases.append(("sigmoid", lambda: ad.sum_all(ad.mul(ad.sigmoid(xs), cs)), [xs]))
    cases.append(("exp", lambda: ad.sum_all(ad.mul(ad.exp(xs), cs)), [xs]))
    cases.append(("sum_all", lambda: ad.sum_all(xs), [xs]))
    cases.append(("mean_all", lambda: ad.mean_all(xs), [xs]))

    xc, wc = T((2, 3, 8, 8)), T((4, 3, 3, 3))
    cc = C((2, 4, 8, 8))
    cases.append(("conv2d", lambda: ad.sum_all(ad.mul(ad.conv2d(xc, wc), cc)),
                  [xc, wc]))
    xc2, wc2 = T((2, 3, 9, 9)), T((5, 3, 3, 3))
    cc2 = C((2, 5, 5, 5))
    cases.append(("conv2d_stride2",
                  lambda: ad.sum_all(ad.mul(ad.conv2d(xc2, wc2, stride=2), cc2)),
                  [xc2, wc2]))
    xp, wp = T((2, 6, 5, 5)), T((4, 6, 1, 1))
    cp = C((2, 4, 5, 5))
    cases.append(("pointwise",
                  lambda: ad.sum_all(ad.mul(ad.conv2d_pointwise(xp, wp), cp)),
                  [xp, wp]))
    xd, wd = T((2, 4, 6, 6)), T((8, 1, 3, 3))
    cd = C((2, 8, 6, 6))
    cases.append(("depthwise",
                  lambda: ad.sum_all(ad.mul(ad.conv2d_depthwise(xd, wd), cd)),
                  [xd, wd]))

    xb, gb, bb = T((3, 2, 4, 4)), T((2,), lo=0.5, hi=1.5), T((2,))
    cb = C((3, 2, 4, 4))
    cases.append(("batchnorm", lambda: ad.sum_all(ad.mul(
        ad.batchnorm2d(xb, gb, bb, np.zeros(2), np.ones(2), training=True), cb)),
        [xb, gb, bb]))

    xcat1, xcat2 = T((1, 2, 3, 3)), T((1, 3, 3, 3))
    ccat = C((1, 5, 3, 3))
    cases.append(("concat", lambda: ad.sum_all(ad.mul(
        ad.concat_channels([xcat1, xcat2]), ccat)), [xcat1, xcat2]))
    xsl = T((2, 4, 3, 3))
    csl = C((2, 2, 3, 3))
    cases.append(("slice", lambda: ad.sum_all(ad.mul(
        ad.slice_channels(xsl, 1, 3), csl)), [xsl]))
    xsh = T((2, 8, 3, 3))
    csh = C((2, 8, 3, 3))
    cases.append(("shuffle", lambda: ad.sum_all(ad.mul(
        ad.channel_shuffle(xsh, 4), csh)), [xsh]))

    xga = T((2, 8, 4, 4))
    cga = C((2, 4))
    cases.append(("group_avgpool", lambda: ad.sum_all(ad.mul(
        ad.group_avgpool(xga, 4), cga)), [xga]))
    xgs, sg = T((2, 8, 3, 3)), T((4,))
    cgs = C((2, 8, 3, 3))
    cases.append(("group_scale", lambda: ad.sum_all(ad.mul(
        ad.group_scale(xgs, sg, 4), cgs)), [xgs, sg]))
    xgg, gg = T((2, 8, 3, 3)), T((2, 4), lo=0.1, hi=0.9)
    cgg = C((2, 8, 3, 3))
    cases.append(("group_gate", lambda: ad.sum_all(ad.mul(
        ad.group_gate(xgg, gg, 4), cgg)), [xgg, gg]))

    xl, wl, bl = T((3, 5)), T((4, 5)), T((4,))
    cl = C((3, 4))
    cases.append(("linear", lambda: ad.sum_all(ad.mul(
        ad.linear(xl, wl, bl), cl)), [xl, wl, bl]))

    xu = T((1, 2, 4, 4))
    cu = C((1, 2, 7, 7))
    cases.append(("upsample", lambda: ad.sum_all(ad.mul(
        ad.upsample_bilinear(xu, (7, 7)), cu)), [xu]))

    psl = T((3, 4))
    tsl = Tensor(r.uniform(-0.8, 0.8, size=(3, 4)))
    cases.append(("smooth_l1", lambda: ad.smooth_l1(psl, tsl), [psl]))
    return cases


@pytest.mark.parametrize("name,f,wrt", _fd_cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_op_gradient_matches_finite_differences(name, f, wrt):
    assert ad.grad_check(f, wrt, h=1e-3) < 1e-3


def test_grad_check_on_sum_is_exact():
    x = t64((3, 3), 50)
    assert ad.grad_check(lambda: ad.sum_all(x), [x], h=1e-3) < 1e-10
