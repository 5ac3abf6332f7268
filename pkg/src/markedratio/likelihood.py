"""Quasi-log-likelihoods of the side and mark ratio models.

The estimating functions only charge event times, so everything is computed from an
:class:`EventDesign`: the event labels together with the covariates at the left limit of
each event time.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import (
    CovariatePath,
    EventStream,
    InvalidInputError,
    ModelSpec,
    ParamSet,
    log_softmax_with_reference,
)


@dataclass
class QuasiLik:
    value: float
    gradient: np.ndarray
    neg_hessian: np.ndarray


@dataclass
class EventDesign:
    """Per-event labels and left-limit covariates for one model specification."""

    spec: ModelSpec
    types: np.ndarray
    marks: np.ndarray
    side: np.ndarray
    mark: list[np.ndarray]
    horizon: float

    @classmethod
    def from_path(cls, stream: EventStream, path: CovariatePath, spec: ModelSpec) -> "EventDesign":
        stream.validate(spec)
        side = path.left_limits(stream.times, spec.side_covariates)
        mark = [path.left_limits(stream.times, cols) for cols in spec.mark_covariates]
        return cls(spec, stream.types, stream.marks, side, mark, stream.horizon)

    @classmethod
    def from_columns(cls, stream: EventStream, columns: Mapping[str, np.ndarray], spec: ModelSpec) -> "EventDesign":
        """Build from covariate values already evaluated at the event times."""
        stream.validate(spec)

        def stack(names):
            missing = [n for n in names if n not in columns]
            if missing:
                raise InvalidInputError(f"missing covariates {missing}")
            if not names:
                return np.zeros((len(stream), 0))
            return np.column_stack([np.asarray(columns[n], dtype=float) for n in names])

        side = stack(spec.side_covariates)
        mark = [stack(cols) for cols in spec.mark_covariates]
        return cls(spec, stream.types, stream.marks, side, mark, stream.horizon)

    def __len__(self) -> int:
        return len(self.types)

    def side_block(self) -> tuple[np.ndarray, np.ndarray, int]:
        return self.types, self.side, self.spec.n_types

    def mark_block(self, type_i: int) -> tuple[np.ndarray, np.ndarray, int]:
        keep = self.types == type_i
        return self.marks[keep], self.mark[type_i][keep], self.spec.marks_per_type[type_i]


def compress_rows(labels: np.ndarray, z: np.ndarray):
    """Collapse identical (covariates, label) rows into weighted rows.

    The multinomial quasi-log-likelihood only depends on these counts, so fitting on the
    compressed table is exact.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        return labels, z, np.zeros(0)
    table = np.column_stack([z, labels.astype(float)])
    uniq, counts = np.unique(table, axis=0, return_counts=True)
    return uniq[:, -1].astype(np.int64), uniq[:, :-1], counts.astype(float)


def multinomial_logvalue(labels: np.ndarray, z: np.ndarray, coef: np.ndarray, n_categories: int,
                         weights: np.ndarray | None = None) -> float:
    """Value only of :func:`multinomial_loglik` (cheap; used inside samplers)."""
    coef = np.asarray(coef, dtype=float).reshape(n_categories - 1, z.shape[1])
    total = len(labels) if weights is None else float(np.sum(weights))
    if len(labels) == 0 or coef.size == 0:
        return float(-total * np.log(n_categories))
    logp = log_softmax_with_reference(z @ coef.T)[np.arange(len(labels)), labels]
    return float(logp.sum() if weights is None else logp @ weights)


def multinomial_loglik(labels: np.ndarray, z: np.ndarray, coef: np.ndarray, n_categories: int,
                       weights: np.ndarray | None = None) -> QuasiLik:
    """Sum over rows of ``log softmax(z @ coef.T)[label]`` with its score and information.

    ``coef`` has shape ``(n_categories - 1, p)``; parameters are flattened row-major.
    Optional ``weights`` are row multiplicities (see :func:`compress_rows`).
    """
    coef = np.asarray(coef, dtype=float).reshape(n_categories - 1, z.shape[1])
    m1, p = coef.shape
    dim = m1 * p
    n = len(labels)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if n == 0 or dim == 0:
        # no parameters: every category equally likely
        value = -w.sum() * np.log(n_categories)
        return QuasiLik(float(value), np.zeros(dim), np.zeros((dim, dim)))
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(coef))):
        raise InvalidInputError("non-finite covariates or parameters")
    eta = z @ coef.T
    logp = log_softmax_with_reference(eta)
    value = float(logp[np.arange(n), labels] @ w)
    probs = np.exp(logp[:, 1:])
    resid = -probs
    nonref = labels > 0
    resid[np.flatnonzero(nonref), labels[nonref] - 1] += 1.0
    gradient = ((resid * w[:, None]).T @ z).ravel()
    # V(probs) per event: diag(p) - p p^T over non-reference categories
    zz = (w[:, None, None] * z[:, :, None]) * z[:, None, :]
    diag_part = np.einsum("na,njl->ajl", probs, zz)
    cross = np.einsum("na,nb,njl->ajbl", probs, probs, zz)
    neg_hessian = -cross
    for a in range(m1):
        neg_hessian[a, :, a, :] += diag_part[a]
    neg_hessian = neg_hessian.reshape(dim, dim)
    neg_hessian = 0.5 * (neg_hessian + neg_hessian.T)
    return QuasiLik(value, gradient, neg_hessian)


def side_loglik(design: EventDesign, theta) -> QuasiLik:
    """Quasi-log-likelihood of the type ratios: sum of ``log r^i(t-)`` over events."""
    labels, z, m = design.side_block()
    return multinomial_loglik(labels, z, theta, m)


def mark_loglik(design: EventDesign, rho_i, type_i: int) -> QuasiLik:
    """Quasi-log-likelihood of the mark ratios of one type; only events of that type count."""
    labels, z, m = design.mark_block(type_i)
    return multinomial_loglik(labels, z, rho_i, m)


def block_logliks(design: EventDesign, params: ParamSet) -> list[QuasiLik]:
    out = [side_loglik(design, params.theta)]
    out += [mark_loglik(design, params.rho[i], i) for i in range(design.spec.n_types)]
    return out


def pooled_loglik(design: EventDesign, params: ParamSet) -> QuasiLik:
    blocks = block_logliks(design, params)
    dim = sum(len(b.gradient) for b in blocks)
    neg_hessian = np.zeros((dim, dim))
    pos = 0
    for b in blocks:
        d = len(b.gradient)
        neg_hessian[pos:pos + d, pos:pos + d] = b.neg_hessian
        pos += d
    value = float(sum(b.value for b in blocks))
    gradient = np.concatenate([b.gradient for b in blocks]) if dim else np.zeros(0)
    return QuasiLik(value, gradient, neg_hessian)
