import math

import numpy as np
import pytest

from flamenco_sid import nn
from flamenco_sid.nn import functional as F
from flamenco_sid.nn.checkpoint import CheckpointError, dumps_tensors, loads_tensors
from flamenco_sid.nn.tensor import Tensor, no_grad
from gradsuite import CASES, TOL, run_layer


@pytest.mark.parametrize("layer", sorted(CASES))
def test_gradients_match_finite_differences(layer):
    errors = run_layer(layer, n_shapes=5, seed=1)
    assert max(errors) < TOL, errors


# ------------------------------------------------------------------- tensor core


def test_tensor_broadcast_backward():
    a = Tensor(np.ones((3, 1)), requires_grad=True)
    b = Tensor(np.arange(4.0), requires_grad=True)
    (a * b + 2.0).sum().backward()
    np.testing.assert_array_equal(a.grad, np.full((3, 1), 6.0))
    np.testing.assert_array_equal(b.grad, np.full(4, 3.0))


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad[0] == 5.0


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_float32_preserved_by_python_scalars():
    x = Tensor(np.ones(3, np.float32))
    assert (x * 2.0 + 1).data.dtype == np.float32


# ------------------------------------------------------------------ layer examples


def test_conv_examples():
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 6))
    eye = np.eye(3).reshape(3, 3, 1, 1)
    np.testing.assert_allclose(F.conv2d(Tensor(x), Tensor(eye)).data, x)
    c = F.conv2d(Tensor(np.full((1, 1, 5, 5), 2.5)), Tensor(np.ones((1, 1, 3, 3))))
    assert c.shape == (1, 1, 3, 3) and np.all(c.data == 22.5)
    out = F.conv2d(Tensor(np.zeros((1, 2, 9, 7))), Tensor(np.zeros((4, 2, 3, 3))), stride=2, padding=1)
    assert out.shape == (1, 4, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)
    with pytest.raises(ValueError):
        F.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError):
        F.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


def test_elu_relu_examples():
    v = F.elu(Tensor(np.array([0.0, -1e9, 2.0]))).data
    assert v[0] == 0 and v[1] == pytest.approx(-1.0) and v[2] == 2.0
    np.testing.assert_array_equal(F.relu(Tensor(np.array([-1.0, 0.0, 3.0]))).data, [0, 0, 3])


def test_maxpool_ties_route_to_first():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    F.maxpool2d(x, 2).sum().backward()
    np.testing.assert_array_equal(x.grad[0, 0], [[1, 0], [0, 0]])


def test_batchnorm_fixed_point_and_running_stats():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 3, 4, 4))
    x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
    rm, rv = np.zeros(3), np.ones(3)
    y = F.batchnorm2d(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, True)
    # the only deviation is the 1/sqrt(1 + eps) shrink, about 5e-6 of each value
    assert np.max(np.abs(y.data - x) / np.maximum(np.abs(x), 1.0)) < 1e-5
    n = x.size / 3
    np.testing.assert_allclose(rv, 0.9 + 0.1 * n / (n - 1))
    bn = nn.BatchNorm2d(3, dtype=np.float64)
    with pytest.raises(ValueError):
        bn(Tensor(x[:1]))
    bn.eval()
    np.testing.assert_allclose(bn(Tensor(x[:1])).data, x[:1] / math.sqrt(1 + 1e-5))


def test_dropout_semantics():
    x = Tensor(np.ones(10000))
    assert F.dropout(x, 0.3, training=False) is x
    rng = np.random.default_rng(0)
    means = np.mean([F.dropout(Tensor(np.ones(1)), 0.3, True, rng).data[0] for _ in range(10000)])
    assert abs(means - 1.0) < 0.01
    y = F.dropout(x, 0.5, True, np.random.default_rng(1)).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    with pytest.raises(ValueError):
        F.dropout(x, 1.0, True)


def test_softmax_and_cross_entropy():
    z = np.random.default_rng(0).standard_normal((7, 5)) * 30
    np.testing.assert_allclose(F.softmax(Tensor(z)).data.sum(axis=1), 1.0, atol=1e-6)
    assert abs(F.cross_entropy(Tensor(np.zeros((3, 5))), [0, 2, 4]).data - math.log(5)) < 1e-9
    sure = np.full((2, 4), -1e4)
    sure[0, 1] = sure[1, 3] = 1e4
    assert F.cross_entropy(Tensor(sure), [1, 3]).data == pytest.approx(0.0, abs=1e-12)
    assert F.cross_entropy(Tensor(z), np.arange(7) % 5).data >= 0
    with pytest.raises(ValueError):
        F.cross_entropy(Tensor(z), [5] * 7)


def test_cross_entropy_gradient_identity():
    rng = np.random.default_rng(2)
    z = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    labels = [0, 2, 1, 2]
    F.cross_entropy(z, labels).backward()
    p = np.exp(z.data - z.data.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    expect = (p - np.eye(3)[labels]) / 4
    assert np.max(np.abs(z.grad - expect)) < 1e-6


def test_gru_examples():
    rng = np.random.default_rng(0)
    t, n, d, h = 3, 2, 4, 5
    x = rng.standard_normal((t, n, d))
    z = np.zeros
    out = F.gru(Tensor(x), Tensor(z((3 * h, d))), Tensor(z((3 * h, h))), Tensor(z(3 * h)), Tensor(z(3 * h)))
    assert not out.data.any()
    w_ih, w_hh = rng.standard_normal((3 * h, d)), rng.standard_normal((3 * h, h))
    b_ih, b_hh = rng.standard_normal(3 * h), rng.standard_normal(3 * h)
    one = F.gru(Tensor(x[:1]), Tensor(w_ih), Tensor(w_hh), Tensor(b_ih), Tensor(b_hh)).data[0]
    sig = lambda a: 1 / (1 + np.exp(-a))  # noqa: E731
    gi, gh = x[0] @ w_ih.T + b_ih, b_hh  # h0 = 0
    r, zg = sig(gi[:, :h] + gh[:h]), sig(gi[:, h:2 * h] + gh[h:2 * h])
    cand = np.tanh(gi[:, 2 * h:] + r * gh[2 * h:])
    np.testing.assert_allclose(one, (1 - zg) * cand, rtol=1e-12)


def test_blstm_time_reversal_and_zero():
    rng = np.random.default_rng(3)
    t, n, d, h = 5, 2, 3, 4

    def params():
        return tuple(Tensor(a) for a in (rng.standard_normal((4 * h, d)), rng.standard_normal((4 * h, h)),
                                         rng.standard_normal(4 * h), rng.standard_normal(4 * h)))
    fwd, bwd = params(), params()
    x = rng.standard_normal((t, n, d))
    y = F.blstm(Tensor(x), fwd, bwd).data
    y_rev = F.blstm(Tensor(x[::-1].copy()), bwd, fwd).data
    swapped = np.concatenate([y[::-1, :, h:], y[::-1, :, :h]], axis=2)
    np.testing.assert_allclose(y_rev, swapped, rtol=1e-12, atol=1e-14)
    zeros = tuple(Tensor(np.zeros_like(p.data)) for p in fwd[:2]) + tuple(Tensor(np.zeros(4 * h)) for _ in range(2))
    hx = tuple(Tensor(np.full_like(p.data, 0.3)) for p in fwd[:2]) + tuple(Tensor(np.zeros(4 * h)) for _ in range(2))
    assert not F.blstm(Tensor(np.zeros((t, n, d))), zeros, zeros).data.any()
    assert not F.blstm(Tensor(np.zeros((t, n, d))), hx, hx).data.any()


# ----------------------------------------------------------------------- Adam


def test_adam_examples():
    p = [np.array([1.0, -2.0])]
    st = nn.init_state(p)
    nn.adam_step(p, [np.zeros(2)], st)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    p = [np.array([0.0, 0.0])]
    st = nn.init_state(p)
    nn.adam_step(p, [np.array([0.5, -7.0])], st)
    np.testing.assert_allclose(p[0], [-0.001, 0.001], rtol=1e-6)
    w = [np.array([0.0])]
    st = nn.init_state(w)
    for _ in range(200):
        nn.adam_step(w, [2 * (w[0] - 3.0)], st, lr=0.1)
    assert abs(w[0][0] - 3.0) < 0.05


# ----------------------------------------------------------- modules and files


def _tiny():
    nn.manual_seed(5)
    return nn.Sequential(nn.Conv2d(1, 3, 3, dtype=np.float64), nn.BatchNorm2d(3, dtype=np.float64), nn.ELU(),
                         nn.MaxPool2d(2), nn.Dropout(0.5))


def test_inference_deterministic_and_train_mode_stochastic():
    m = _tiny()
    x = Tensor(np.random.default_rng(0).standard_normal((2, 1, 6, 6)))
    m.eval()
    a, b = m(x).data, m(x).data
    assert np.array_equal(a, b)
    m.train()
    assert not np.array_equal(m(x).data, m(x).data)


def test_seeded_init_reproducible():
    a, b = _tiny(), _tiny()
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and np.array_equal(pa.data, pb.data)


def test_state_dict_and_checkpoint_round_trip(tmp_path):
    m = _tiny()
    m.layers[1].running_mean[:] = [0.1, 0.2, 0.3]
    names = sorted(m.state_dict())
    assert "layers.1.running_mean" in names and "layers.0.weight" in names
    nn.save(tmp_path / "m.ck", m.state_dict(), {"seed": 5})
    tensors, meta = nn.load(tmp_path / "m.ck")
    assert meta == {"seed": 5}
    other = _tiny()
    other.load_state_dict(tensors)
    x = Tensor(np.random.default_rng(1).standard_normal((2, 1, 6, 6)))
    m.eval(), other.eval()
    assert np.array_equal(m(x).data, other(x).data)
    with pytest.raises(KeyError):
        other.load_state_dict({k: v for k, v in tensors.items() if k != "layers.0.bias"})


def test_checkpoint_bytes_stable_and_validated():
    t = {"b": np.arange(3, dtype=np.int64), "a": np.ones((2, 2), np.float32)}
    raw = dumps_tensors(t)
    assert raw == dumps_tensors(dict(reversed(list(t.items()))))
    back = loads_tensors(raw)
    assert back["a"].dtype == np.float32 and np.array_equal(back["b"], t["b"])
    with pytest.raises(CheckpointError):
        loads_tensors(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError):
        loads_tensors(raw[:-3])
    with pytest.raises(CheckpointError):
        dumps_tensors({"c": np.zeros(2, np.complex64)})
