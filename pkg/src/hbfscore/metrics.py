"""Reconstruction error, distribution distances and sum-rate summaries."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .hmgat import HbfSolution, sum_rate
from .numerics import ComplexMatrix


def nre(H: np.ndarray, H_hat: np.ndarray) -> float:
    """||H - H_hat||_F / ||H||_F."""
    H, H_hat = np.asarray(H), np.asarray(H_hat)
    ref = np.linalg.norm(H)
    if ref == 0:
        raise ValueError("reference channel has zero norm")
    return float(np.linalg.norm(H - H_hat) / ref)


def nre_per_sample(H: np.ndarray, H_hat: np.ndarray) -> np.ndarray:
    H, H_hat = np.asarray(H), np.asarray(H_hat)
    ref = np.linalg.norm(H, axis=(-2, -1))
    if (ref == 0).any():
        raise ValueError("reference channel has zero norm")
    return np.linalg.norm(H - H_hat, axis=(-2, -1)) / ref


class Histogram(NamedTuple):
    edges: np.ndarray
    counts: np.ndarray

    @property
    def mass(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else self.counts.astype(float)


def shared_histograms(a, b, bins: int = 50) -> tuple[Histogram, Histogram]:
    """Histograms of both sets over uniform bins spanning their pooled range."""
    a, b = np.ravel(a), np.ravel(b)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    if bins < 2:
        raise ValueError("need at least two bins")
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    return Histogram(edges, np.histogram(a, edges)[0]), Histogram(edges, np.histogram(b, edges)[0])


def _kl2(p, q):
    m = p > 0
    return float(np.sum(p[m] * np.log2(p[m] / q[m])))


def js_divergence(a, b, bins: int = 50) -> float:
    """Jensen-Shannon divergence in bits between histogram estimates of two sample sets."""
    ha, hb = shared_histograms(a, b, bins)
    p, q = ha.mass, hb.mass
    m = 0.5 * (p + q)
    return 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a, b = np.sort(np.ravel(a)), np.sort(np.ravel(b))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    x = np.concatenate([a, b])
    fa = np.searchsorted(a, x, side="right") / a.size
    fb = np.searchsorted(b, x, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def component_js(generated: np.ndarray, reference: np.ndarray, bins: int = 50) -> dict[str, float]:
    """JS divergence of the real, imaginary and magnitude parts of CSI entries."""
    g, r = np.asarray(generated), np.asarray(reference)
    return {
        "real": js_divergence(g.real, r.real, bins),
        "imag": js_divergence(g.imag, r.imag, bins),
        "magnitude": js_divergence(np.abs(g), np.abs(r), bins),
    }


Solver = Callable[[np.ndarray], HbfSolution]


def evaluate_sum_rates(H_true: np.ndarray, solver: Solver, sigma2: float = 1.0,
                       H_input: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean and per-sample sum rates, always scored under the true channel.

    ``H_input`` is what the solver sees (imperfect or denoised CSI); it defaults to
    the true channel.
    """
    H_true = np.asarray(H_true)
    H_input = H_true if H_input is None else np.asarray(H_input)
    rates = np.empty(len(H_true))
    for i, (h_true, h_in) in enumerate(zip(H_true, H_input)):
        sol = solver(h_in)
        rates[i] = float(sum_rate(ComplexMatrix.from_numpy(h_true), sol, sigma2))
    # fsum keeps the mean independent of sample order
    return (math.fsum(rates) / len(rates) if len(rates) else float("nan")), rates
