"""Training objectives: reconstruction, batch Pearson correlation, the
correlation loss over one target and any number of biases, and their sum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from projfair import diffgraph as dg

MIN_CORR_BATCH = 8


class DegenerateBatch(ValueError):
    """An attribute is constant within a batch, so its correlation is undefined."""


@dataclass(frozen=True)
class LossConfig:
    eta: float = 0.5
    lam: float = 1.0
    eps_v: float = 1e-8

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not 1e-12 <= self.eps_v <= 1e-6:
            raise ValueError(f"eps_v must lie in [1e-12, 1e-6], got {self.eps_v}")


def _column(x) -> dg.Node:
    if isinstance(x, dg.Node):
        node = x
    else:
        node = dg.const(np.asarray(x, dtype=np.float64).reshape(-1, 1))
    if node.value.shape[1] != 1:
        raise dg.ShapeError(f"expected a vector, got shape {node.value.shape}")
    return node


def pearson_corr_node(a, b, eps_v: float = 1e-8) -> dg.Node:
    """Differentiable population-moment Pearson correlation of two vectors.

    ``cov(a, b) / ((std(a) + eps_v) * (std(b) + eps_v))``
    """
    a, b = _column(a), _column(b)
    d = a.value.shape[0]
    if b.value.shape[0] != d:
        raise dg.ShapeError(f"pearson_corr: lengths {d} and {b.value.shape[0]} differ")
    if d < 2:
        raise ValueError("pearson_corr needs at least two samples")
    if not (np.all(np.isfinite(a.value)) and np.all(np.isfinite(b.value))):
        raise ValueError("pearson_corr: non-finite input")
    if eps_v == 0 and (np.ptp(a.value) == 0 or np.ptp(b.value) == 0):
        raise DegenerateBatch("zero-variance input with no variance floor")
    ac = dg.sub(a, dg.reduce_mean(a))
    bc = dg.sub(b, dg.reduce_mean(b))
    cov = dg.reduce_mean(dg.mul(ac, bc))
    sd_a = dg.sqrt(dg.reduce_mean(dg.square(ac)))
    sd_b = dg.sqrt(dg.reduce_mean(dg.square(bc)))
    denom = dg.mul(dg.add(sd_a, eps_v * np.ones((1, 1))), dg.add(sd_b, eps_v * np.ones((1, 1))))
    return dg.div(cov, denom)


def pearson_corr(a, b, eps_v: float = 1e-8) -> float:
    return float(pearson_corr_node(a, b, eps_v).value[0, 0])


def rec_loss(X, X_rec) -> dg.Node:
    """Mean squared error over every element."""
    X = X if isinstance(X, dg.Node) else dg.const(X)
    X_rec = X_rec if isinstance(X_rec, dg.Node) else dg.const(X_rec)
    if X.value.shape != X_rec.value.shape:
        raise dg.ShapeError(f"rec_loss: shapes {X.value.shape} and {X_rec.value.shape} differ")
    return dg.reduce_mean(dg.square(dg.sub(X, X_rec)))


def _bias_columns(S, d):
    if S is None:
        return np.zeros((d, 0))
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S.reshape(-1, 1)
    if S.shape[0] != d:
        raise dg.ShapeError(f"bias matrix has {S.shape[0]} rows, expected {d}")
    return S


def corr_loss(z_p, t, S, eta: float = 0.5, eps_v: float = 1e-8) -> dg.Node:
    """``sum_i |Corr(z_p, s_i)| - eta * |Corr(z_p, t)|`` on one batch.

    ``S`` holds one bias per column and may have zero columns.
    """
    z_p = _column(z_p)
    d = z_p.value.shape[0]
    if d < MIN_CORR_BATCH:
        raise ValueError(f"correlation batch of {d} rows is below the minimum {MIN_CORR_BATCH}")
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if t.shape[0] != d:
        raise dg.ShapeError(f"target has {t.shape[0]} rows, expected {d}")
    S = _bias_columns(S, d)
    if np.ptp(t) == 0:
        raise DegenerateBatch("target is constant within the batch")
    for i in range(S.shape[1]):
        if np.ptp(S[:, i]) == 0:
            raise DegenerateBatch(f"bias column {i} is constant within the batch")

    loss = dg.scale(dg.abs(pearson_corr_node(z_p, t, eps_v)), -eta)
    for i in range(S.shape[1]):
        loss = dg.add(loss, dg.abs(pearson_corr_node(z_p, S[:, i], eps_v)))
    return loss


def joint_terms(X, X_rec, z_p, t, S, config: LossConfig):
    """Return ``(joint, rec, corr)`` nodes; ``corr`` is None when ``lam == 0``."""
    rec = rec_loss(X, X_rec)
    if config.lam == 0:
        return rec, rec, None
    corr = corr_loss(z_p, t, S, config.eta, config.eps_v)
    return dg.add(rec, dg.scale(corr, config.lam)), rec, corr


def joint_loss(X, X_rec, z_p, t, S, config: LossConfig) -> dg.Node:
    return joint_terms(X, X_rec, z_p, t, S, config)[0]


def dummy_encode(labels, reference):
    """Indicator columns for every category except ``reference``.

    Returns ``(matrix, categories)`` with columns in sorted category order.
    """
    labels = np.asarray(labels)
    categories = sorted(set(labels.tolist()))
    if len(categories) < 2:
        raise ValueError("dummy_encode needs at least two distinct categories")
    if reference not in categories:
        raise ValueError(f"reference category {reference!r} not present")
    others = [c for c in categories if c != reference]
    matrix = np.column_stack([(labels == c).astype(np.float64) for c in others])
    return matrix, others
