import math

import numpy as np
import pytest
import torch

from hbfscore.numerics import (
    ComplexMatrix,
    activation,
    as_flat_function,
    backward,
    finite_diff_check,
    flat_params,
    from_tokens,
    layer_norm,
    load_tensors,
    matmul,
    save_tensors,
    softmax,
    to_tokens,
)

from oracles import complex_matmul_loops, matmul_loops


def t(x):
    return torch.tensor(x, dtype=torch.float64)


def test_matmul_identity():
    A = torch.randn(2, 3)
    assert torch.equal(matmul(torch.eye(2), A), A)


def test_matmul_hand():
    assert matmul(t([[1, 2], [3, 4]]), t([[0], [1]])).tolist() == [[2], [4]]


def test_matmul_against_loops():
    g = torch.Generator().manual_seed(3)
    a, b = torch.randn(3, 4, generator=g), torch.randn(4, 2, generator=g)
    ref = t(matmul_loops(a.tolist(), b.tolist()))
    assert torch.allclose(matmul(a, b), ref, atol=1e-12, rtol=0)


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(torch.ones(2, 3), torch.ones(2, 3))


def test_activation_values():
    assert activation(t(-1.0), "leaky_relu", 0.01).item() == pytest.approx(-0.01, abs=1e-15)
    assert activation(t(0.0), "sigmoid").item() == 0.5
    gelu1 = 0.5 * (1 + math.erf(1 / math.sqrt(2)))
    assert activation(t(1.0), "gelu").item() == pytest.approx(gelu1, abs=1e-15)
    with pytest.raises(ValueError):
        activation(t(1.0), "tanh")


def test_softmax_cases():
    assert softmax(t([0.0, 0.0])).tolist() == [0.5, 0.5]
    assert softmax(t([7.3])).tolist() == [1.0]
    out = softmax(t([1000.0, 1000.0]))
    assert out.tolist() == [0.5, 0.5]
    with pytest.raises(ValueError):
        softmax(torch.empty(0))


def test_layer_norm_cases():
    assert torch.equal(layer_norm(t([[2.0, 2.0, 2.0]])), torch.zeros(1, 3))
    out = layer_norm(t([[1.0, 3.0]]))
    scale = 1 / math.sqrt(1 + 1e-5)
    assert torch.allclose(out, t([[-scale, scale]]), atol=1e-15)
    x = torch.randn(20, 16, generator=torch.Generator().manual_seed(0)) * 5 + 2
    y = layer_norm(x)
    assert y.mean(-1).abs().max() < 1e-9
    var = y.var(-1, unbiased=False)
    assert (var - 1).abs().max() < 1e-6 + 1e-5 * 1.0
    with pytest.raises(ValueError):
        layer_norm(t([[1.0]]))


def test_backward_linear():
    W = torch.randn(3, 4, requires_grad=True)
    x = torch.randn(4)
    grads = backward((W @ x).sum(), {"W": W})
    assert torch.allclose(grads["W"], torch.outer(torch.ones(3), x))


def test_backward_sigmoid_at_zero():
    w = torch.zeros(3, requires_grad=True)
    v = t([1.0, -2.0, 0.5])
    grads = backward((torch.sigmoid(w) * v).sum(), {"w": w})
    assert torch.allclose(grads["w"], 0.25 * v, atol=1e-15)


def test_backward_unused_param_and_nonscalar():
    w = torch.ones(2, requires_grad=True)
    u = torch.ones(2, requires_grad=True)
    grads = backward((w * 2).sum(), {"w": w, "u": u})
    assert torch.equal(grads["u"], torch.zeros(2))
    with pytest.raises(ValueError):
        backward(w * 2, {"w": w})


def test_finite_diff_quadratic_and_constant():
    assert finite_diff_check(lambda th: (th ** 2).sum(), t([3.0])) < 1e-8
    assert finite_diff_check(lambda th: th.sum() * 0 + 4.0, t([1.0, 2.0])) == 0.0


def test_finite_diff_detects_wrong_gradient():
    class Bad(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            return (x ** 2).sum()

        @staticmethod
        def backward(ctx, g):
            return g * torch.ones(3)

    assert finite_diff_check(Bad.apply, t([1.0, 2.0, 3.0])) > 0.5


def test_finite_diff_composed_graph():
    g = torch.Generator().manual_seed(1)
    A = torch.randn(4, 4, generator=g)

    def f(th):
        h = torch.tanh(A @ th)
        return softmax(h).dot(layer_norm(h.reshape(1, -1)).reshape(-1)) + activation(h, "gelu").sum()

    assert finite_diff_check(f, torch.randn(4, generator=g)) < 1e-6


def test_flat_function_matches_module():
    lin = torch.nn.Linear(3, 2)
    x = torch.randn(5, 3)
    f = as_flat_function(lin, lambda m: m(x).pow(2).sum())
    theta = flat_params(lin)
    assert torch.allclose(f(theta), lin(x).pow(2).sum())
    assert finite_diff_check(f, theta) < 1e-6
    # parameters are restored afterwards
    assert isinstance(lin.weight, torch.nn.Parameter)


def test_complex_matmul_against_loops():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    B = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    out = (ComplexMatrix.from_numpy(A) @ ComplexMatrix.from_numpy(B)).numpy()
    assert np.abs(out - complex_matmul_loops(A, B)).max() < 1e-10


def test_complex_helpers():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    C = ComplexMatrix.from_numpy(A)
    assert np.allclose(C.H.numpy(), A.conj().T)
    assert np.allclose(C.abs2().numpy(), np.abs(A) ** 2)
    assert float(C.frob2()) == pytest.approx(np.linalg.norm(A) ** 2)
    tok = to_tokens(C)
    assert tok.shape == (2, 6)
    assert np.allclose(tok[0].numpy(), np.r_[A[:, 0].real, A[:, 0].imag])
    assert np.array_equal(from_tokens(tok).numpy(), A)
    with pytest.raises(ValueError):
        ComplexMatrix(torch.zeros(2), torch.zeros(3))


def test_bswt_round_trip(tmp_path):
    tensors = {"a": torch.randn(3, 4), "b.c": torch.tensor(2.5), "e": torch.zeros(0, 2)}
    p = tmp_path / "m.bswt"
    save_tensors(p, tensors)
    back = load_tensors(p)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert torch.equal(back[k], tensors[k])


def test_bswt_errors(tmp_path):
    p = tmp_path / "m.bswt"
    save_tensors(p, {"a": torch.randn(5)})
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="bad magic"):
        load_tensors(p)
    p.write_bytes(raw[:-3])
    with pytest.raises(ValueError, match="truncated payload"):
        load_tensors(p)
