"""Denoising score network: one score-guided refinement step for imperfect CSI."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .channel import CsiDataset, ErrorLevel, perturb_csi
from .numerics import ComplexMatrix, from_tokens, to_tokens
from .ncsn import ModulatedBlock
from .training import TrainResult, TrainSettings, fit

DEFAULT_LEVELS_DB = (-10.0, -5.0, 0.0, 5.0, 10.0)


class DenoiseResult(NamedTuple):
    S_score: ComplexMatrix
    Delta: ComplexMatrix
    eta: ComplexMatrix  # (..., 1, K); broadcasts down each column
    H_hat: ComplexMatrix


@dataclass
class DsnConfig:
    dim: int = 64
    blocks: int = 4
    heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.0

    def to_dict(self):
        return asdict(self)


class DenoiseNet(nn.Module):
    def __init__(self, n_t: int, config: DsnConfig | None = None):
        super().__init__()
        cfg = config or DsnConfig()
        self.n_t, self.config = n_t, cfg
        self.embed = nn.Linear(1, cfg.dim)  # weight and bias are the error-level embedding vectors
        self.w_ib = nn.Linear(2 * n_t, cfg.dim, bias=False)
        self.score_blocks = nn.ModuleList(ModulatedBlock(cfg.dim, cfg.heads, cfg.ffn_dim, cfg.dropout)
                                          for _ in range(cfg.blocks))
        self.denoise_block = ModulatedBlock(cfg.dim, cfg.heads, cfg.ffn_dim, cfg.dropout)
        self.w_score = nn.Linear(cfg.dim, 2 * n_t, bias=False)
        self.w_teb = nn.Linear(cfg.dim, 2 * n_t, bias=False)
        self.mlp_ss = nn.Sequential(nn.Linear(cfg.dim, cfg.dim), nn.GELU(), nn.Linear(cfg.dim, 2))

    def forward(self, H_tilde: ComplexMatrix, delta_E) -> DenoiseResult:
        if H_tilde.shape[-2] != self.n_t:
            raise ValueError(f"expected {self.n_t} antennas, got {H_tilde.shape[-2]}")
        lead = H_tilde.shape[:-2]
        d = torch.as_tensor(delta_E, dtype=torch.float64)
        if (d < 0).any():
            raise ValueError("delta_E must be nonnegative")
        c = self.embed(d.expand(lead).unsqueeze(-1) if d.dim() == 0 else d.unsqueeze(-1))
        tokens = self.w_ib(to_tokens(H_tilde))
        h = tokens
        for block in self.score_blocks:
            h = block(h, c)
        h_de = self.denoise_block(tokens + h, c)
        S = from_tokens(self.w_score(h))
        Delta = from_tokens(self.w_teb(h_de))
        e = self.mlp_ss(h_de)  # (..., K, 2)
        eta = ComplexMatrix(e[..., 0].unsqueeze(-2), e[..., 1].unsqueeze(-2))
        return DenoiseResult(S, Delta, eta, H_tilde + eta * Delta)


def debert_forward(model: DenoiseNet, H_tilde: ComplexMatrix, delta_E) -> DenoiseResult:
    return model(H_tilde, delta_E)


def dsn_loss_terms(out: DenoiseResult, H: ComplexMatrix, H_tilde: ComplexMatrix, delta2_E):
    """Per-sample (score, reconstruction) terms."""
    d2 = torch.as_tensor(delta2_E, dtype=torch.float64)
    if (d2 <= 0).any():
        raise ValueError("score term needs delta2_E > 0")
    ref = torch.sqrt(H.frob2())
    if (ref == 0).any():
        raise ValueError("reference channel has zero norm")
    resid = out.S_score + (H_tilde - H).scale(1.0 / d2[..., None, None] if d2.dim() else 1.0 / d2)
    score = d2 * resid.frob2()
    recon = torch.sqrt((H - out.H_hat).frob2()) / ref
    return score, recon


def dsn_loss(model: DenoiseNet, H: ComplexMatrix, H_tilde: ComplexMatrix, delta2_E,
             lam: float = 1.0) -> torch.Tensor:
    d2 = torch.as_tensor(delta2_E, dtype=torch.float64)
    out = model(H_tilde, torch.sqrt(d2))
    score, recon = dsn_loss_terms(out, H, H_tilde, d2)
    return (score + lam * recon).mean()


def denoise(model: DenoiseNet, H_tilde: np.ndarray, delta2_E: float) -> np.ndarray:
    """Refined CSI for one or a stack of imperfect observations."""
    was_training = model.training
    model.eval()
    with torch.no_grad():
        out = model(ComplexMatrix.from_numpy(H_tilde), float(np.sqrt(delta2_E)))
    model.train(was_training)
    return out.H_hat.numpy()


def train_dsn(dataset: CsiDataset, levels_db: Sequence[float] = DEFAULT_LEVELS_DB,
              config: DsnConfig | None = None, lam: float = 1.0,
              settings: TrainSettings | None = None, model: DenoiseNet | None = None) -> TrainResult:
    """Multi-task training; every sample in a batch draws its own error level from ``levels_db``."""
    settings = settings or TrainSettings()
    torch.manual_seed(settings.seed)
    if model is None:
        model = DenoiseNet(dataset.config.N_T, config)
    levels = np.array([ErrorLevel.from_db(db).delta2_E for db in levels_db])
    rng = np.random.default_rng(settings.seed)

    def loss_fn(batch, gen):
        d2 = rng.choice(levels, size=len(batch))
        noisy = batch + np.sqrt(d2)[:, None, None] * perturb_csi(np.zeros_like(batch), 1.0, rng)
        return dsn_loss(model, ComplexMatrix.from_numpy(batch), ComplexMatrix.from_numpy(noisy), torch.from_numpy(d2), lam)

    val_rng = np.random.default_rng(settings.seed + 1)
    val_clean = dataset.val
    val_sets = [(d2, perturb_csi(val_clean, d2, val_rng)) for d2 in levels]
    H_val = ComplexMatrix.from_numpy(val_clean)

    def val_loss():
        with torch.no_grad():
            return float(np.mean([float(dsn_loss(model, H_val, ComplexMatrix.from_numpy(noisy), d2, lam))
                                  for d2, noisy in val_sets]))

    return fit(model, dataset.train, loss_fn, val_loss, settings, higher_is_better=False, val_name="val_loss")
