"""Numerical helpers for categorical distributions in linear and log space."""
from __future__ import annotations

import numpy as np

NORM_ATOL = 1e-12


def normalize(x: np.ndarray) -> np.ndarray:
    """Rescale a non-negative vector to sum to 1."""
    x = np.asarray(x, dtype=float)
    total = x.sum()
    if total <= 0.0:
        raise ValueError("cannot normalize a vector with non-positive mass")
    return x / total


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a finite logit vector."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    """log(sum(exp(x))) tolerating -inf entries (zero probabilities)."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def safe_log(x: np.ndarray) -> np.ndarray:
    """Elementwise log mapping 0 to -inf without warnings."""
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, with 0*log(0) = 0."""
    p = np.asarray(p, dtype=float)
    m = p > 0
    return float(-np.sum(p[m] * np.log(p[m])))


def kl_divergence(q: np.ndarray, p: np.ndarray) -> float:
    """KL(q || p) in nats. Entries of p must be positive wherever q is."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    m = q > 0
    if np.any(p[m] <= 0):
        return float("inf")
    return float(np.sum(q[m] * (np.log(q[m]) - np.log(p[m]))))


def column_entropies(matrix: np.ndarray) -> np.ndarray:
    """Entropy of each column of a stochastic matrix (observations x states)."""
    a = np.asarray(matrix, dtype=float)
    logs = np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), 0.0)
    return -np.sum(a * logs, axis=0)


def is_distribution(p: np.ndarray, atol: float = NORM_ATOL) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(p >= 0) and abs(p.sum() - 1.0) <= atol)
