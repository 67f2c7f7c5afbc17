"""Gaussian belief propagation detector for y = H x + w with QPSK symbols.

Messages live on the edges (n, m) of the dense factor graph, stored as
N x M arrays. Exclusion sums are formed from full row/column sums minus the
edge's own term, so one iteration costs O(N M).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    iterations: int = 50
    damping: float = 0.5
    es: float = 1.0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.iterations < 1:
            raise ValueError("at least one iteration is required")
        if not self.es > 0:
            raise ValueError("symbol energy must be positive")


@dataclass
class Detection:
    symbols: np.ndarray  # hard decisions
    soft: np.ndarray  # consensus means
    variance: np.ndarray  # consensus variances
    undetectable: np.ndarray  # bool mask of all-zero columns


def sic_signals(y, H, x_hat, var_hat, noise_var):
    """Per-edge soft interference cancellation: (y_tilde, var_tilde)."""
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    hx = H * x_hat
    hv = np.abs(H) ** 2 * var_hat
    y_t = y[:, None] - (hx.sum(axis=1, keepdims=True) - hx)
    v_t = hv.sum(axis=1, keepdims=True) - hv + noise_var
    return y_t, np.maximum(v_t, VAR_FLOOR)


def _combine_terms(H, y_t, v_t):
    a = np.abs(H) ** 2 / v_t
    b = H.conj() * y_t / v_t
    return a, b


def extrinsic_beliefs(H, y_t, v_t):
    """Per-edge extrinsic (mean, variance) over all rows except the edge's own.

    Edges that receive no information carry mean 0 and infinite variance.
    """
    a, b = _combine_terms(H, y_t, v_t)
    prec = a.sum(axis=0, keepdims=True) - a
    num = b.sum(axis=0, keepdims=True) - b
    ok = prec > 0
    var = np.full(prec.shape, np.inf)
    var[ok] = np.maximum(1.0 / prec[ok], VAR_FLOOR)
    mean = np.zeros(prec.shape, dtype=complex)
    mean[ok] = var[ok] * num[ok]
    return mean, var


def qpsk_denoise(mean, var, es: float = 1.0):
    """Bayes-optimal QPSK estimate and its MSE, E_S - |x_hat|^2."""
    c = np.sqrt(es / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        re = np.where(np.isinf(var), 0.0, 2 * c * np.real(mean) / var)
        im = np.where(np.isinf(var), 0.0, 2 * c * np.imag(mean) / var)
    x = c * (np.tanh(re) + 1j * np.tanh(im))
    return x, np.clip(es - np.abs(x) ** 2, 0.0, es)


def damp(new, old, beta):
    return beta * new + (1 - beta) * old


def consensus(H, y_t, v_t):
    """Full-sum combination over every row: (mean, variance, undetectable)."""
    a, b = _combine_terms(H, y_t, v_t)
    prec = a.sum(axis=0)
    dead = prec <= 0
    safe = np.where(dead, 1.0, prec)
    mean = np.where(dead, 0.0, b.sum(axis=0) / safe)
    var = np.where(dead, np.inf, 1.0 / safe)
    return mean, var, dead


def slice_qpsk(x, es: float = 1.0):
    c = np.sqrt(es / 2)
    return c * (np.where(np.real(x) < 0, -1.0, 1.0) + 1j * np.where(np.imag(x) < 0, -1.0, 1.0))


def detect(y, H, noise_var: float, cfg: DetectorConfig = DetectorConfig()) -> Detection:
    y = np.asarray(y, dtype=complex)
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != y.size:
        raise ValueError(f"H of shape {H.shape} does not match y of length {y.size}")
    x_hat = np.zeros(H.shape, dtype=complex)
    var_hat = np.full(H.shape, cfg.es)
    for _ in range(cfg.iterations):
        y_t, v_t = sic_signals(y, H, x_hat, var_hat, noise_var)
        mean, var = extrinsic_beliefs(H, y_t, v_t)
        x_new, v_new = qpsk_denoise(mean, var, cfg.es)
        x_hat = damp(x_new, x_hat, cfg.damping)
        var_hat = damp(v_new, var_hat, cfg.damping)
    y_t, v_t = sic_signals(y, H, x_hat, var_hat, noise_var)
    soft, var, dead = consensus(H, y_t, v_t)
    return Detection(symbols=slice_qpsk(soft, cfg.es), soft=soft, variance=var, undetectable=dead)
