"""Tabular probability helpers shared by the planner and the naming game.

Vectors are plain ``numpy`` arrays. Anything that multiplies many small
numbers goes through log space and is clamped at ``LOG_FLOOR``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

LOG_FLOOR = float(np.log(1e-300))
DEFAULT_ALPHA = 0.1


class AllZeroError(ValueError):
    """Raised when a vector with no positive mass is normalized."""


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("negative entry in probability vector")
    total = v.sum()
    if not total > 0:
        raise AllZeroError("cannot normalize an all-zero vector")
    return v / total


def log_normalize(log_v) -> np.ndarray:
    """Return exp(log_v) normalized to sum to one."""
    log_v = np.asarray(log_v, dtype=float)
    with np.errstate(divide="ignore"):
        z = logsumexp(log_v)
    if not np.isfinite(z):
        raise AllZeroError("cannot normalize an all-zero vector")
    return np.exp(log_v - z)


def safe_log(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def poe(p, q) -> np.ndarray:
    """Product of experts: elementwise product of two categoricals, renormalized."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    return log_normalize(safe_log(p) + safe_log(q))


def sample(probs, rng: np.random.Generator) -> int:
    cdf = np.cumsum(np.asarray(probs, dtype=float))
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(cdf) - 1))


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of a (n, k) matrix of row-normalized weights."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def argmax(v) -> int:
    # np.argmax already returns the first (lowest) index on ties
    return int(np.argmax(np.asarray(v)))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a named sub-task of a seeded run."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


class ConditionalTable:
    """Row-stochastic table p(out | cond).

    Rows flagged in ``mask`` as False are placeholders for impossible
    conditioning values; they hold zeros and must never be sampled.
    """

    def __init__(self, rows, mask=None, atol: float = 1e-9):
        rows = np.array(rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("ConditionalTable needs a 2-d array")
        if mask is None:
            mask = np.ones(len(rows), dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if np.any(rows < 0):
            raise ValueError("negative probability")
        sums = rows.sum(axis=1)
        if not np.allclose(sums[mask], 1.0, rtol=0, atol=atol):
            raise ValueError("rows must sum to one")
        if np.any(rows[~mask] != 0):
            raise ValueError("masked rows must be empty")
        rows.setflags(write=False)
        mask.setflags(write=False)
        self.rows = rows
        self.mask = mask

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def row(self, cond: int) -> np.ndarray:
        if not 0 <= cond < len(self.rows):
            raise IndexError(f"conditioning index {cond} out of range")
        if not self.mask[cond]:
            raise IndexError(f"row {cond} is masked")
        return self.rows[cond]

    def __getitem__(self, idx):
        return self.rows[idx]

    def __repr__(self):
        return f"ConditionalTable(shape={self.shape})"


class CountTable:
    """Dirichlet-smoothed counts used to estimate a ConditionalTable."""

    def __init__(self, n_cond: int, n_out: int, alpha: float = DEFAULT_ALPHA):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.counts = np.zeros((n_cond, n_out))
        self.alpha = float(alpha)

    def update(self, cond: int, out: int, weight: float = 1.0) -> "CountTable":
        n_cond, n_out = self.counts.shape
        if not (0 <= cond < n_cond and 0 <= out < n_out):
            raise IndexError(f"cell ({cond}, {out}) out of range")
        if weight < 0:
            raise ValueError("weight must be non-negative")
        self.counts[cond, out] += weight
        return self

    def add_many(self, conds, outs, weights=None) -> "CountTable":
        conds = np.asarray(conds)
        outs = np.asarray(outs)
        n_cond, n_out = self.counts.shape
        if conds.size and (conds.min() < 0 or conds.max() >= n_cond
                           or outs.min() < 0 or outs.max() >= n_out):
            raise IndexError("cell out of range")
        if weights is None:
            weights = np.ones(len(conds))
        np.add.at(self.counts, (conds, outs), weights)
        return self

    def to_table(self) -> ConditionalTable:
        n_out = self.counts.shape[1]
        smoothed = self.counts + self.alpha
        denom = self.counts.sum(axis=1, keepdims=True) + n_out * self.alpha
        return ConditionalTable(smoothed / denom)


def update_counts(t: CountTable, cond: int, out: int, weight: float = 1.0) -> CountTable:
    return t.update(cond, out, weight)
