"""Noise-conditional score network over user tokens and annealed Langevin sampling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import torch
from torch import nn

from .channel import CsiDataset
from .numerics import ComplexMatrix, activation, check_finite, from_tokens, layer_norm, softmax, to_tokens
from .training import TrainResult, TrainSettings, fit

ScoreFn = Callable[[ComplexMatrix, int], ComplexMatrix]


@dataclass(frozen=True)
class NoiseSchedule:
    delta2: tuple[float, ...]
    epsilon: float = 2e-5
    T: int = 100

    def __post_init__(self):
        d = self.delta2
        if len(d) < 1 or any(x <= 0 for x in d):
            raise ValueError("noise powers must be positive")
        if any(a <= b for a, b in zip(d, d[1:])):
            raise ValueError("noise powers must be strictly descending")
        if self.epsilon <= 0 or self.T < 0:
            raise ValueError("epsilon must be positive and T nonnegative")

    @property
    def L(self) -> int:
        return len(self.delta2)

    def step_size(self, level: int) -> float:
        """nu_l = epsilon * delta2_l / delta2_L for 1-based ``level``."""
        return self.epsilon * self.delta2[level - 1] / self.delta2[-1]

    @property
    def steps(self) -> tuple[float, ...]:
        return tuple(self.step_size(l) for l in range(1, self.L + 1))

    def to_dict(self):
        return asdict(self)


def make_schedule(delta2_max: float = 1.0, delta2_min: float = 0.01, L: int = 10,
                  epsilon: float = 2e-5, T: int = 100) -> NoiseSchedule:
    """Geometric ladder of noise standard deviations between the two endpoints."""
    if not delta2_max > delta2_min > 0:
        raise ValueError("need delta2_max > delta2_min > 0")
    if L < 2:
        raise ValueError("need at least two levels")
    d = np.geomspace(math.sqrt(delta2_max), math.sqrt(delta2_min), L) ** 2
    d[0], d[-1] = delta2_max, delta2_min
    return NoiseSchedule(tuple(float(x) for x in d), epsilon, T)


class ModulatedBlock(nn.Module):
    """Transformer encoder block whose norms, shifts and residual gates are set by a condition vector."""

    def __init__(self, dim: int, heads: int, ffn_dim: int, dropout: float = 0.0):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim, self.heads = dim, heads

        def lin(i, o):
            return nn.Linear(i, o, bias=False)

        self.v_scale, self.v_shift, self.v_gate = lin(dim, dim), lin(dim, dim), lin(dim, dim)
        self.w_q, self.w_k, self.w_v, self.w_o = lin(dim, dim), lin(dim, dim), lin(dim, dim), lin(dim, dim)
        self.v2_scale, self.v2_shift, self.v2_gate = lin(dim, dim), lin(dim, dim), lin(dim, dim)
        self.w_1, self.w_2 = lin(dim, ffn_dim), lin(ffn_dim, dim)
        self.drop = nn.Dropout(dropout)

    def attention(self, h: torch.Tensor) -> torch.Tensor:
        *lead, K, D = h.shape
        C, dh = self.heads, D // self.heads

        def split(t):
            return t.reshape(*lead, K, C, dh).transpose(-2, -3)  # (..., C, K, dh)

        q, k, v = split(self.w_q(h)), split(self.w_k(h)), split(self.w_v(h))
        w = softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
        o = (self.drop(w) @ v).transpose(-2, -3).reshape(*lead, K, D)
        return self.w_o(o)

    def forward(self, h: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        """``h``: (..., K, D) tokens, ``c``: (..., D) condition."""
        c = c.unsqueeze(-2)
        am = layer_norm(h) * self.v_scale(c) + self.v_shift(c)
        h = h + self.attention(am) * self.v_gate(c)
        am = layer_norm(h) * self.v2_scale(c) + self.v2_shift(c)
        ffn = self.w_2(self.drop(activation(self.w_1(am), "gelu")))
        return h + ffn * self.v2_gate(c)


@dataclass
class NcsnConfig:
    dim: int = 64
    ffn_dim: int = 256
    heads: int = 4
    blocks: int = 4
    dropout: float = 0.0

    def to_dict(self):
        return asdict(self)


class NcsnModel(nn.Module):
    def __init__(self, n_t: int, levels: int, config: NcsnConfig | None = None):
        super().__init__()
        cfg = config or NcsnConfig()
        self.n_t, self.levels, self.config = n_t, levels, cfg
        self.embed = nn.Embedding(levels, cfg.dim)
        self.w_ib = nn.Linear(2 * n_t, cfg.dim, bias=False)
        self.blocks = nn.ModuleList(ModulatedBlock(cfg.dim, cfg.heads, cfg.ffn_dim, cfg.dropout)
                                    for _ in range(cfg.blocks))
        self.w_ob = nn.Linear(cfg.dim, 2 * n_t, bias=False)

    def forward(self, H_bar: ComplexMatrix, level) -> ComplexMatrix:
        """Score estimate at 1-based noise ``level`` (int or per-sample LongTensor)."""
        if H_bar.shape[-2] != self.n_t:
            raise ValueError(f"expected {self.n_t} antennas, got {H_bar.shape[-2]}")
        lv = torch.as_tensor(level, dtype=torch.long)
        if (lv < 1).any() or (lv > self.levels).any():
            raise ValueError(f"level {level} outside 1..{self.levels}")
        c = self.embed(lv - 1)
        h = self.w_ib(to_tokens(H_bar))
        if c.dim() == 1:
            c = c.expand(*h.shape[:-2], -1)
        for block in self.blocks:
            h = block(h, c)
        return from_tokens(self.w_ob(h))


def ncsn_forward(model: NcsnModel, H_bar: ComplexMatrix, level) -> ComplexMatrix:
    return model(H_bar, level)


def ncsn_loss(score_fn: ScoreFn, H: ComplexMatrix, schedule: NoiseSchedule,
              generator: torch.Generator | None = None) -> torch.Tensor:
    """Denoising score matching summed over every level, weighted by the noise power."""
    total = 0.0
    for l, d2 in enumerate(schedule.delta2, start=1):
        Z = ComplexMatrix.randn(*H.shape, variance=d2, generator=generator)
        H_bar = H + Z
        s = score_fn(H_bar, l)
        resid = s + Z.scale(1.0 / d2)
        total = total + d2 * resid.frob2()
    per_sample = total / (2 * schedule.L)
    return per_sample.mean()


def langevin_sample(score_fn: ScoreFn, schedule: NoiseSchedule, shape: tuple[int, ...],
                    generator: torch.Generator | None = None, inject_noise: bool = True,
                    init: ComplexMatrix | None = None) -> ComplexMatrix:
    """Annealed Langevin dynamics; each level's chain starts where the previous one ended."""
    H = ComplexMatrix.randn(*shape, generator=generator) if init is None else init
    with torch.no_grad():
        for l in range(1, schedule.L + 1):
            nu = schedule.step_size(l)
            for _ in range(schedule.T):
                H = H + score_fn(H, l).scale(nu / 2)
                if inject_noise:
                    H = H + ComplexMatrix.randn(*shape, generator=generator).scale(math.sqrt(nu))
            check_finite(H.re, f"Langevin iterate at level {l}")
            check_finite(H.im, f"Langevin iterate at level {l}")
    return H


def model_score_fn(model: NcsnModel) -> ScoreFn:
    def score(H: ComplexMatrix, level: int) -> ComplexMatrix:
        return model(H, level)

    return score


def train_ncsn(dataset: CsiDataset, schedule: NoiseSchedule, config: NcsnConfig | None = None,
               settings: TrainSettings | None = None, model: NcsnModel | None = None) -> TrainResult:
    """Fit the score network; keeps the checkpoint with the lowest validation loss."""
    settings = settings or TrainSettings()
    torch.manual_seed(settings.seed)
    if model is None:
        model = NcsnModel(dataset.config.N_T, schedule.L, config)
    score = model_score_fn(model)
    val = ComplexMatrix.from_numpy(dataset.val)

    def loss_fn(batch, gen):
        return ncsn_loss(score, ComplexMatrix.from_numpy(batch), schedule, gen)

    def val_loss():
        # identical noise every epoch so checkpoints compare fairly
        with torch.no_grad():
            return float(ncsn_loss(score, val, schedule, torch.Generator().manual_seed(settings.seed + 1)))

    return fit(model, dataset.train, loss_fn, val_loss, settings, higher_is_better=False, val_name="val_loss")


def generate(model: NcsnModel, schedule: NoiseSchedule, count: int, K: int,
             generator: torch.Generator | None = None, chunk: int = 500) -> np.ndarray:
    """Draw ``count`` CSI matrices, returned as (count, N_T, K) complex."""
    model.eval()
    out = []
    for start in range(0, count, chunk):
        n = min(chunk, count - start)
        out.append(langevin_sample(model_score_fn(model), schedule, (n, model.n_t, K), generator).numpy())
    return np.concatenate(out) if out else np.empty((0, model.n_t, K), dtype=np.complex128)
