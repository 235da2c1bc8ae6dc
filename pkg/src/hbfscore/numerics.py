"""Tensor primitives, split-complex helpers, gradient checking and checkpoints.

Everything runs in float64 torch tensors. Complex quantities are carried as a
pair of real tensors so that autograd only ever sees real parameters.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import torch
import torch.nn.functional as F

DTYPE = torch.float64
LEAKY_SLOPE = 0.01
LN_EPS = 1e-5

torch.set_default_dtype(DTYPE)


class NonFiniteError(FloatingPointError):
    """A NaN or Inf reached a place where the contract requires finite values."""


def check_finite(t: torch.Tensor, what: str = "tensor") -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise NonFiniteError(f"non-finite values in {what}")
    return t


def as_tensor(x, requires_grad: bool = False) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(x, dtype=np.float64) if not torch.is_tensor(x) else x, dtype=DTYPE)
    check_finite(t)
    if requires_grad:
        t = t.clone().requires_grad_(True)
    return t


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {tuple(a.shape)} x {tuple(b.shape)}")
    return a @ b


def activation(x: torch.Tensor, kind: str, slope: float = LEAKY_SLOPE) -> torch.Tensor:
    if kind == "leaky_relu":
        return F.leaky_relu(x, slope)
    if kind == "gelu":
        return F.gelu(x)  # exact erf form
    if kind == "sigmoid":
        return torch.sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


def softmax(scores: torch.Tensor, dim: int = -1) -> torch.Tensor:
    if scores.numel() == 0 or scores.shape[dim] == 0:
        raise ValueError("softmax of an empty tensor")
    shifted = scores - scores.amax(dim=dim, keepdim=True).detach()
    w = shifted.exp()
    return w / w.sum(dim=dim, keepdim=True)


def layer_norm(x: torch.Tensor, weight: torch.Tensor | None = None,
               bias: torch.Tensor | None = None, eps: float = LN_EPS) -> torch.Tensor:
    d = x.shape[-1]
    if d < 2:
        raise ValueError("layer_norm needs at least two features")
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    y = (x - mu) / torch.sqrt(var + eps)
    if weight is not None:
        y = y * weight
    if bias is not None:
        y = y + bias
    return y


@dataclass(frozen=True)
class ComplexMatrix:
    """Complex array stored as separate real and imaginary tensors.

    Leading dimensions are batch dimensions; the trailing two are rows, cols.
    """

    re: torch.Tensor
    im: torch.Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ValueError(f"re/im shape mismatch {tuple(self.re.shape)} vs {tuple(self.im.shape)}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.re.shape)

    @classmethod
    def from_numpy(cls, z) -> "ComplexMatrix":
        z = np.asarray(z)
        return cls(torch.as_tensor(z.real.astype(np.float64)), torch.as_tensor(z.imag.astype(np.float64)))

    @classmethod
    def zeros(cls, *shape: int) -> "ComplexMatrix":
        return cls(torch.zeros(shape), torch.zeros(shape))

    @classmethod
    def randn(cls, *shape: int, variance: float = 1.0,
              generator: torch.Generator | None = None) -> "ComplexMatrix":
        """Draw i.i.d. CN(0, variance) entries."""
        s = math.sqrt(variance / 2)
        return cls(s * torch.randn(shape, generator=generator), s * torch.randn(shape, generator=generator))

    def numpy(self) -> np.ndarray:
        return self.re.detach().numpy() + 1j * self.im.detach().numpy()

    def __add__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        return ComplexMatrix(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        return ComplexMatrix(self.re - other.re, self.im - other.im)

    def __neg__(self) -> "ComplexMatrix":
        return ComplexMatrix(-self.re, -self.im)

    def scale(self, s) -> "ComplexMatrix":
        """Multiply by a real scalar or a real tensor broadcastable to the shape."""
        return ComplexMatrix(self.re * s, self.im * s)

    def __mul__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        # element-wise complex product with broadcasting
        return ComplexMatrix(self.re * other.re - self.im * other.im,
                             self.re * other.im + self.im * other.re)

    def __matmul__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        return cmatmul(self, other)

    @property
    def H(self) -> "ComplexMatrix":
        return ComplexMatrix(self.re.transpose(-1, -2), -self.im.transpose(-1, -2))

    @property
    def T(self) -> "ComplexMatrix":
        return ComplexMatrix(self.re.transpose(-1, -2), self.im.transpose(-1, -2))

    def abs2(self) -> torch.Tensor:
        return self.re ** 2 + self.im ** 2

    def frob2(self) -> torch.Tensor:
        """Squared Frobenius norm over the trailing two dims."""
        return self.abs2().sum(dim=(-1, -2))

    def permute_cols(self, perm) -> "ComplexMatrix":
        return ComplexMatrix(self.re[..., perm], self.im[..., perm])

    def detach(self) -> "ComplexMatrix":
        return ComplexMatrix(self.re.detach(), self.im.detach())

    def __getitem__(self, idx) -> "ComplexMatrix":
        return ComplexMatrix(self.re[idx], self.im[idx])


def cmatmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Complex product through four real matmuls."""
    return ComplexMatrix(matmul(a.re, b.re) - matmul(a.im, b.im),
                         matmul(a.re, b.im) + matmul(a.im, b.re))


def to_tokens(h: ComplexMatrix) -> torch.Tensor:
    """(..., N_T, K) complex -> (..., K, 2 N_T) real; token k = [Re h_k, Im h_k]."""
    return torch.cat([h.re, h.im], dim=-2).transpose(-1, -2)


def from_tokens(t: torch.Tensor) -> ComplexMatrix:
    """Inverse of :func:`to_tokens`: first half of each token is the real part."""
    n = t.shape[-1] // 2
    t = t.transpose(-1, -2)
    return ComplexMatrix(t[..., :n, :], t[..., n:, :])


# -- differentiation -----------------------------------------------------------------


def backward(loss: torch.Tensor, params: Mapping[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Gradients of a scalar ``loss`` with respect to each named tensor.

    Tensors that do not influence the loss get a zero gradient.
    """
    if loss.numel() != 1:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    names = [n for n, p in params.items() if p.requires_grad]
    grads = torch.autograd.grad(loss.reshape(()), [params[n] for n in names], allow_unused=True)
    out = {}
    for n, g in zip(names, grads):
        out[n] = torch.zeros_like(params[n]) if g is None else g
    return out


def finite_diff_check(f: Callable[[torch.Tensor], torch.Tensor], theta: torch.Tensor,
                      h: float = 1e-5, coords=None) -> float:
    """Max relative error between autograd and central differences.

    The error per coordinate is |analytic - numeric| / max(1, |numeric|).
    ``coords`` optionally restricts the check to a subset of flat indices.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    theta = theta.detach().clone().to(DTYPE)
    t = theta.clone().requires_grad_(True)
    value = f(t)
    if value.numel() != 1:
        raise ValueError("f must return a scalar")
    (analytic,) = torch.autograd.grad(value.reshape(()), t, allow_unused=True)
    analytic = torch.zeros_like(theta) if analytic is None else analytic.detach()
    flat = theta.reshape(-1)
    a_flat = analytic.reshape(-1)
    idx = range(flat.numel()) if coords is None else coords
    worst = 0.0
    with torch.no_grad():
        for i in idx:
            plus = flat.clone()
            minus = flat.clone()
            plus[i] += h
            minus[i] -= h
            fp = f(plus.reshape(theta.shape))
            fm = f(minus.reshape(theta.shape))
            if not (torch.isfinite(fp) and torch.isfinite(fm)):
                raise NonFiniteError(f"non-finite function value perturbing coordinate {i}")
            numeric = float(fp - fm) / (2 * h)
            err = abs(float(a_flat[i]) - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def flat_params(module: torch.nn.Module) -> torch.Tensor:
    return torch.cat([p.detach().reshape(-1) for p in module.parameters()])


def as_flat_function(module: torch.nn.Module,
                     closure: Callable[[torch.nn.Module], torch.Tensor]) -> Callable[[torch.Tensor], torch.Tensor]:
    """Wrap ``closure(module)`` as a function of the flattened parameter vector."""
    named = list(module.named_parameters())
    sizes = [p.numel() for _, p in named]

    def f(theta: torch.Tensor) -> torch.Tensor:
        chunks = torch.split(theta, sizes)
        params = {n: c.reshape(p.shape) for (n, p), c in zip(named, chunks)}
        return _call_with(module, params, closure)

    return f


def _call_with(module, params, closure):
    # closures may call methods other than forward(), so rebind parameters in place
    saved = {}
    for name, value in params.items():
        owner, attr = _resolve(module, name)
        saved[name] = owner._parameters[attr]
        owner._parameters[attr] = value
    try:
        return closure(module)
    finally:
        for name, value in saved.items():
            owner, attr = _resolve(module, name)
            owner._parameters[attr] = value


def _resolve(module, name):
    *path, attr = name.split(".")
    owner = module
    for p in path:
        owner = getattr(owner, p)
    return owner, attr


# -- checkpoint container -------------------------------------------------------------

_BSWT_MAGIC = b"BSWT"
_BSWT_VERSION = 1


def save_tensors(path, tensors: Mapping[str, torch.Tensor]) -> None:
    """Write named tensors to the little-endian "BSWT" container."""
    parts = [_BSWT_MAGIC, struct.pack("<II", _BSWT_VERSION, len(tensors))]
    for name, t in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(t.detach().cpu().numpy(), dtype="<f8")  # keeps 0-d shape; tobytes is C order
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tensors(path) -> dict[str, torch.Tensor]:
    buf = Path(path).read_bytes()
    if buf[:4] != _BSWT_MAGIC:
        raise ValueError("bad magic")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ValueError("truncated payload")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != _BSWT_VERSION:
        raise ValueError(f"unsupported version {version}")
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(take(8 * size), dtype="<f8").reshape(dims)
        out[name] = torch.from_numpy(arr.astype(np.float64))
    return out


def save_module(path, module: torch.nn.Module) -> None:
    save_tensors(path, module.state_dict())


def load_module(path, module: torch.nn.Module) -> torch.nn.Module:
    module.load_state_dict(load_tensors(path))
    return module
