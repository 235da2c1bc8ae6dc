"""Hybrid node/edge graph attention network for hybrid beamforming."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .channel import CsiDataset, SystemConfig
from .numerics import ComplexMatrix, activation, softmax
from .training import TrainResult, TrainSettings, fit

EPS_C = 1e-12


class BeamGraph(NamedTuple):
    node_x: torch.Tensor  # (..., K, 2 N_T)
    edge_e: torch.Tensor  # (..., K, K, 6); [i, j] is the edge i -> j


class HbfSolution(NamedTuple):
    P_RF: ComplexMatrix  # (..., N_T, K)
    P_BB: ComplexMatrix  # (..., K, K), column k is p_BB,k
    beta: torch.Tensor  # (..., K)


class RawOutputs(NamedTuple):
    P_RF: ComplexMatrix
    beta: torch.Tensor
    P_BB: ComplexMatrix


def build_graph(H: ComplexMatrix) -> BeamGraph:
    """Node features [Re h_i; Im h_i] and edge features from h_i^H h_i, h_i^H h_j, h_j^H h_j."""
    x = torch.cat([H.re, H.im], dim=-2).transpose(-1, -2)
    gram = H.H @ H  # [i, j] = h_i^H h_j
    K = H.shape[-1]
    diag_re = torch.diagonal(gram.re, dim1=-2, dim2=-1)
    diag_im = torch.diagonal(gram.im, dim1=-2, dim2=-1)
    ii_re = diag_re.unsqueeze(-1).expand(*diag_re.shape, K)
    jj_re = diag_re.unsqueeze(-2).expand(*diag_re.shape[:-1], K, K)
    ii_im = diag_im.unsqueeze(-1).expand(*diag_im.shape, K)
    jj_im = diag_im.unsqueeze(-2).expand(*diag_im.shape[:-1], K, K)
    e = torch.stack([ii_re, gram.re, jj_re, ii_im, gram.im, jj_im], dim=-1)
    return BeamGraph(x, e)


def rms_normalize(H: ComplexMatrix) -> ComplexMatrix:
    """Scale each sample so its entries have unit mean power."""
    rms = torch.clamp(H.abs2().mean(dim=(-2, -1), keepdim=True).sqrt(), min=EPS_C)
    return ComplexMatrix(H.re / rms, H.im / rms)


def _uniform(shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return nn.Parameter(torch.empty(shape).uniform_(-bound, bound))


class HMGAL(nn.Module):
    """One hybrid message layer: node attention plus source-shared edge attention."""

    def __init__(self, f_in: int, d_in: int, f_out: int, d_out: int, heads: int,
                 dropout: float = 0.0, slope: float = 0.01):
        super().__init__()
        self.f_in, self.d_in, self.f_out, self.d_out, self.heads = f_in, d_in, f_out, d_out, heads
        self.slope = slope
        M = heads
        # node side
        self.theta = _uniform((M, f_out, f_in), f_in)
        self.theta_r = _uniform((f_out, f_in), f_in)
        self.phi = _uniform((M, d_out, d_in), d_in)
        self.a = _uniform((M, 2 * f_out + d_out), 2 * f_out + d_out)
        # edge side
        self.phi_hat = _uniform((M, d_out, d_in), d_in)
        self.phi_hat_r = _uniform((d_out, d_in), d_in)
        self.theta_n = _uniform((d_out, 2 * f_in), 2 * f_in)
        self.theta_hat = _uniform((M, f_out, f_in), f_in)
        self.b = _uniform((M, 2 * d_out + f_out), 2 * d_out + f_out)
        self.drop = nn.Dropout(dropout)

    def _check(self, x, e):
        K = x.shape[-2]
        if x.shape[-1] != self.f_in or e.shape[-1] != self.d_in or e.shape[-3:-1] != (K, K):
            raise ValueError(f"feature dims {tuple(x.shape)}, {tuple(e.shape)} do not match layer "
                             f"(F={self.f_in}, D={self.d_in})")

    def node_attention(self, x: torch.Tensor, e: torch.Tensor):
        """Returns (alpha[..., m, i, j], projected nodes[..., m, j, :])."""
        self._check(x, e)
        tx = torch.einsum("mof,...kf->...mko", self.theta, x)
        pe = torch.einsum("mod,...ijd->...mijo", self.phi, e)
        fo = self.f_out
        a_src, a_dst, a_edge = self.a[:, :fo], self.a[:, fo:2 * fo], self.a[:, 2 * fo:]
        s_i = torch.einsum("...mko,mo->...mk", tx, a_src)
        s_j = torch.einsum("...mko,mo->...mk", tx, a_dst)
        s_e = torch.einsum("...mijo,mo->...mij", pe, a_edge)
        scores = activation(s_i.unsqueeze(-1) + s_j.unsqueeze(-2) + s_e, "leaky_relu", self.slope)
        return softmax(scores, dim=-1), tx

    def edge_attention(self, x: torch.Tensor, e: torch.Tensor):
        """Returns (beta[..., m, i, j, n], projected edges[..., m, i, n, :])."""
        self._check(x, e)
        pe = torch.einsum("mod,...ind->...mino", self.phi_hat, e)
        tx = torch.einsum("mof,...if->...mio", self.theta_hat, x)
        do = self.d_out
        b_ij, b_in, b_src = self.b[:, :do], self.b[:, do:2 * do], self.b[:, 2 * do:]
        z_ij = torch.einsum("...mino,mo->...min", pe, b_ij)
        z_in = torch.einsum("...mino,mo->...min", pe, b_in)
        z_src = torch.einsum("...mio,mo->...mi", tx, b_src)
        z = z_ij.unsqueeze(-1) + z_in.unsqueeze(-2) + z_src[..., None, None]
        return softmax(activation(z, "leaky_relu", self.slope), dim=-1), pe

    def node_update(self, x: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        alpha, tx = self.node_attention(x, e)
        agg = torch.einsum("...mij,...mjo->...mio", self.drop(alpha), tx).mean(dim=-3)
        return agg + x @ self.theta_r.T

    def edge_update(self, x: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        beta, pe = self.edge_attention(x, e)
        agg = torch.einsum("...mijn,...mino->...mijo", self.drop(beta), pe).mean(dim=-4)
        K = x.shape[-2]
        xi = x.unsqueeze(-2).expand(*x.shape[:-2], K, K, x.shape[-1])
        xj = x.unsqueeze(-3).expand(*x.shape[:-2], K, K, x.shape[-1])
        pair = torch.cat([xi, xj], dim=-1)
        return agg + e @ self.phi_hat_r.T + pair @ self.theta_n.T

    def forward(self, x, e):
        # both updates read the same layer-(l-1) snapshot
        return self.node_update(x, e), self.edge_update(x, e)


def hmgal_node_update(x, e, layer: HMGAL):
    return layer.node_update(x, e)


def hmgal_edge_update(x, e, layer: HMGAL):
    return layer.edge_update(x, e)


def mlp(d_in: int, hidden: int, depth: int, d_out: int, dropout: float, slope: float) -> nn.Sequential:
    mods, d = [], d_in
    for _ in range(depth):
        mods += [nn.Linear(d, hidden), nn.LeakyReLU(slope), nn.Dropout(dropout)]
        d = hidden
    mods.append(nn.Linear(d, d_out))
    return nn.Sequential(*mods)


@dataclass
class HmgatConfig:
    layers: int = 3
    heads: int = 4
    node_dim: int = 128
    edge_dim: int = 128
    mlp_hidden: int = 256
    mlp_depth: int = 2
    dropout: float = 0.1
    slope: float = 0.01
    normalize_input: bool = True  # scale each sample to unit RMS before building the graph

    def to_dict(self):
        return asdict(self)


class HMGAT(nn.Module):
    def __init__(self, n_t: int, config: HmgatConfig | None = None):
        super().__init__()
        cfg = config or HmgatConfig()
        self.n_t, self.config = n_t, cfg
        f, d = 2 * n_t, 6
        layers = []
        for _ in range(cfg.layers):
            layers.append(HMGAL(f, d, cfg.node_dim, cfg.edge_dim, cfg.heads, cfg.dropout, cfg.slope))
            f, d = cfg.node_dim, cfg.edge_dim
        self.layers = nn.ModuleList(layers)
        self.mlp_rf = mlp(f, cfg.mlp_hidden, cfg.mlp_depth, 2 * n_t, cfg.dropout, cfg.slope)
        self.mlp_power = mlp(f, cfg.mlp_hidden, cfg.mlp_depth, 1, cfg.dropout, cfg.slope)
        self.mlp_bb = mlp(d, cfg.mlp_hidden, cfg.mlp_depth, 2, cfg.dropout, cfg.slope)

    def encode(self, H: ComplexMatrix):
        # no activation between layers; the nonlinearity lives in the attention weights
        if self.config.normalize_input:
            H = rms_normalize(H)
        x, e = build_graph(H)
        for layer in self.layers:
            x, e = layer(x, e)
        return x, e

    def forward(self, H: ComplexMatrix) -> RawOutputs:
        return decode_outputs(*self.encode(H), self)

    def solve(self, H: ComplexMatrix, P_max: float) -> HbfSolution:
        return constrain_outputs(self(H), P_max)


def decode_outputs(x: torch.Tensor, e: torch.Tensor, model: HMGAT) -> RawOutputs:
    n_t = model.n_t
    rf = model.mlp_rf(x)  # (..., K, 2 N_T): first N_T reals are the real part of column i
    P_RF = ComplexMatrix(rf[..., :n_t].transpose(-1, -2), rf[..., n_t:].transpose(-1, -2))
    beta = model.mlp_power(x).squeeze(-1)
    bb = model.mlp_bb(e)  # (..., K, K, 2); [i, j] -> entry j of p_BB,i
    P_BB = ComplexMatrix(bb[..., 0].transpose(-1, -2), bb[..., 1].transpose(-1, -2))
    return RawOutputs(P_RF, beta, P_BB)


def constrain_outputs(raw: RawOutputs, P_max: float) -> HbfSolution:
    """Project raw decoder outputs onto the feasible set of the sum-rate problem."""
    s = torch.sigmoid(raw.beta)
    beta = s * P_max / torch.clamp(s.sum(dim=-1, keepdim=True), min=1.0)
    n_t = raw.P_RF.shape[-2]
    # hard floor keeps the modulus exact for any entry above EPS_C
    mod = torch.clamp(raw.P_RF.abs2().sqrt(), min=EPS_C) * math.sqrt(n_t)
    P_RF = ComplexMatrix(raw.P_RF.re / mod, raw.P_RF.im / mod)
    eff = P_RF @ raw.P_BB
    col = torch.clamp(eff.abs2().sum(dim=-2, keepdim=True).sqrt(), min=EPS_C)
    P_BB = ComplexMatrix(raw.P_BB.re / col, raw.P_BB.im / col)
    return HbfSolution(P_RF, P_BB, beta)


def effective_gains(H: ComplexMatrix, sol: HbfSolution) -> torch.Tensor:
    """|h_k^H P_RF p_BB,j|^2 as a (..., K, K) tensor indexed [k, j]."""
    return (H.H @ (sol.P_RF @ sol.P_BB)).abs2()


def achievable_rate(H: ComplexMatrix, sol: HbfSolution, sigma2: float = 1.0) -> torch.Tensor:
    """Per-user rates in bit/s/Hz, shape (..., K)."""
    g = effective_gains(H, sol) * sol.beta.unsqueeze(-2)
    signal = torch.diagonal(g, dim1=-2, dim2=-1)
    interference = g.sum(dim=-1) - signal
    return torch.log2(1 + signal / (interference + sigma2))


def sum_rate(H: ComplexMatrix, sol: HbfSolution, sigma2: float = 1.0) -> torch.Tensor:
    return achievable_rate(H, sol, sigma2).sum(dim=-1)


def hmgat_loss(H: ComplexMatrix, model: HMGAT, system: SystemConfig) -> torch.Tensor:
    """Negative sum rate averaged over the batch."""
    sol = model.solve(H, system.P_max)
    return -sum_rate(H, sol, system.sigma2).mean()


def solver_from_model(model: HMGAT, system: SystemConfig):
    """Wrap a trained model as an ``np.ndarray -> HbfSolution`` solver."""

    def solve(H: np.ndarray) -> HbfSolution:
        model.eval()
        with torch.no_grad():
            return model.solve(ComplexMatrix.from_numpy(H), system.P_max)

    return solve


def evaluate_model(model: HMGAT, H_input: np.ndarray, system: SystemConfig,
                   H_true: np.ndarray | None = None) -> np.ndarray:
    """Per-sample sum rates of the model fed ``H_input`` and scored under ``H_true``."""
    H_true = H_input if H_true is None else H_true
    was_training = model.training
    model.eval()
    with torch.no_grad():
        sol = model.solve(ComplexMatrix.from_numpy(H_input), system.P_max)
        rates = sum_rate(ComplexMatrix.from_numpy(H_true), sol, system.sigma2).numpy()
    model.train(was_training)
    return rates


def train_hmgat(dataset: CsiDataset, config: HmgatConfig | None = None,
                settings: TrainSettings | None = None, model: HMGAT | None = None,
                train_samples: np.ndarray | None = None) -> TrainResult:
    """Unsupervised sum-rate training; keeps the best-validation checkpoint.

    ``train_samples`` overrides the dataset's training split (used for augmentation).
    """
    settings = settings or TrainSettings()
    system = dataset.config
    torch.manual_seed(settings.seed)
    if model is None:
        cfg = config or HmgatConfig(dropout=settings.dropout)
        model = HMGAT(system.N_T, cfg)
    train = dataset.train if train_samples is None else train_samples
    val = ComplexMatrix.from_numpy(dataset.val)

    def loss_fn(batch: np.ndarray, gen: torch.Generator) -> torch.Tensor:
        return hmgat_loss(ComplexMatrix.from_numpy(batch), model, system)

    def val_score() -> float:
        with torch.no_grad():
            return float(sum_rate(val, model.solve(val, system.P_max), system.sigma2).mean())

    return fit(model, train, loss_fn, val_score, settings, higher_is_better=True)
