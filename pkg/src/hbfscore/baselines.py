"""Classical reference precoders and a brute-force oracle for micro instances."""

from __future__ import annotations

import itertools
from enum import Enum

import numpy as np
import torch

from .channel import SystemConfig
from .hmgat import HbfSolution
from .numerics import ComplexMatrix

PINV_RCOND = 1e-10


class BaselineKind(str, Enum):
    pzf = "pzf"
    equal_power_random = "equal_power_random"


def _normalize_digital(P_RF: np.ndarray, P_BB: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(P_RF @ P_BB, axis=-2, keepdims=True)
    return P_BB / np.where(norms > 0, norms, 1.0)


def _solution(P_RF, P_BB, beta) -> HbfSolution:
    return HbfSolution(ComplexMatrix.from_numpy(P_RF), ComplexMatrix.from_numpy(P_BB),
                       torch.as_tensor(np.asarray(beta, dtype=np.float64)))


def pzf_arrays(H: np.ndarray, config: SystemConfig):
    """Phase-matched analog stage, zero-forcing digital stage, equal power."""
    H = np.asarray(H)
    n_t, K = H.shape[-2:]
    P_RF = np.exp(1j * np.angle(H)) / np.sqrt(n_t)
    G = np.conj(np.swapaxes(H, -1, -2)) @ P_RF
    P_BB = _normalize_digital(P_RF, np.linalg.pinv(G, rcond=PINV_RCOND))
    beta = np.full(H.shape[:-2] + (K,), config.P_max / K)
    return P_RF, P_BB, beta


def pzf(H: np.ndarray, config: SystemConfig) -> HbfSolution:
    return _solution(*pzf_arrays(H, config))


def equal_power_random(H: np.ndarray, config: SystemConfig, rng: np.random.Generator) -> HbfSolution:
    H = np.asarray(H)
    n_t, K = H.shape[-2:]
    lead = H.shape[:-2]
    P_RF = np.exp(1j * rng.uniform(0, 2 * np.pi, lead + (n_t, K))) / np.sqrt(n_t)
    P_BB = rng.standard_normal(lead + (K, K)) + 1j * rng.standard_normal(lead + (K, K))
    beta = np.full(lead + (K,), config.P_max / K)
    return _solution(P_RF, _normalize_digital(P_RF, P_BB), beta)


def _rates_np(H, P_RF, P_BB, beta, sigma2):
    g = np.abs(np.conj(np.swapaxes(H, -1, -2)) @ P_RF @ P_BB) ** 2  # [..., k, j]
    g = g * beta[..., None, :]
    sig = np.diagonal(g, axis1=-2, axis2=-1)
    return np.log2(1 + sig / (g.sum(-1) - sig + sigma2)).sum(-1)


def tiny_grid_oracle(H: np.ndarray, config: SystemConfig, phase_bits: int = 3,
                     power_grid: int = 11) -> float:
    """Best sum rate over quantized analog phases, ZF digital stage and gridded power splits."""
    H = np.asarray(H)
    n_t, K = H.shape
    if K > 2 or n_t > 2 or phase_bits > 4:
        raise ValueError("instance too large for exhaustive search (need K <= 2, N_T <= 2, phase_bits <= 4)")
    if power_grid < 2:
        raise ValueError("power_grid needs at least two points")
    levels = np.exp(2j * np.pi * np.arange(2 ** phase_bits) / 2 ** phase_bits)
    combos = np.array(list(itertools.product(range(len(levels)), repeat=n_t * K)))
    P_RF = levels[combos].reshape(-1, n_t, K) / np.sqrt(n_t)
    G = np.conj(H.T)[None] @ P_RF
    P_BB = _normalize_digital(P_RF, np.linalg.pinv(G, rcond=PINV_RCOND))
    frac = np.linspace(0.0, 1.0, power_grid)
    if K == 1:
        betas = (frac * config.P_max)[:, None]
    else:
        betas = np.stack([frac, 1 - frac], axis=-1) * config.P_max
    best = -np.inf
    for beta in betas:
        rates = _rates_np(H[None], P_RF, P_BB, beta[None], config.sigma2)
        best = max(best, float(np.nanmax(rates)))
    return best


def run_baseline(kind: str | BaselineKind, H: np.ndarray, config: SystemConfig,
                 rng: np.random.Generator | None = None) -> HbfSolution:
    kind = BaselineKind(kind)
    if kind is BaselineKind.pzf:
        return pzf(H, config)
    return equal_power_random(H, config, rng or np.random.default_rng(config.seed))
