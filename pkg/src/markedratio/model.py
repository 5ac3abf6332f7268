"""Index structure, parameters and the softmax evaluators of the two-step ratio model.

Types are indexed ``0..n_types-1`` and marks of type ``i`` by ``0..marks_per_type[i]-1``.
Index 0 is the reference category everywhere, so only difference parameters are stored:
``theta`` has shape ``(n_types - 1, n_side)`` and ``rho[i]`` has shape
``(marks_per_type[i] - 1, n_mark[i])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_FLOOR = 1e-300
DEFAULT_BOUND = 20.0


class InvalidInputError(ValueError):
    """Raised on malformed or non-finite inputs."""


@dataclass(frozen=True)
class ModelSpec:
    marks_per_type: tuple[int, ...]
    side_covariates: tuple[str, ...]
    mark_covariates: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "marks_per_type", tuple(int(m) for m in self.marks_per_type))
        object.__setattr__(self, "side_covariates", tuple(self.side_covariates))
        object.__setattr__(self, "mark_covariates", tuple(tuple(c) for c in self.mark_covariates))
        if self.n_types < 2:
            raise InvalidInputError("need at least two event types")
        if any(m < 1 for m in self.marks_per_type):
            raise InvalidInputError("every type needs at least one mark")
        if len(self.mark_covariates) != self.n_types:
            raise InvalidInputError("one mark covariate list per type is required")

    @property
    def n_types(self) -> int:
        return len(self.marks_per_type)

    @property
    def n_side_covariates(self) -> int:
        return len(self.side_covariates)

    @property
    def n_mark_covariates(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.mark_covariates)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        names = list(self.side_covariates)
        for cols in self.mark_covariates:
            names.extend(c for c in cols if c not in names)
        return tuple(names)

    @property
    def side_dim(self) -> int:
        return (self.n_types - 1) * self.n_side_covariates

    @property
    def mark_dims(self) -> tuple[int, ...]:
        return tuple((m - 1) * len(c) for m, c in zip(self.marks_per_type, self.mark_covariates))

    @property
    def dim(self) -> int:
        return self.side_dim + sum(self.mark_dims)

    def block_names(self) -> list[str]:
        return ["theta"] + [f"rho{i}" for i in range(self.n_types)]

    def parameter_labels(self) -> list[str]:
        labels = [f"theta[{a}][{c}]" for a in range(1, self.n_types) for c in self.side_covariates]
        for i, (m, cols) in enumerate(zip(self.marks_per_type, self.mark_covariates)):
            labels += [f"rho{i}[{k}][{c}]" for k in range(1, m) for c in cols]
        return labels

    def to_dict(self) -> dict:
        return {
            "marks_per_type": list(self.marks_per_type),
            "side_covariates": list(self.side_covariates),
            "mark_covariates": [list(c) for c in self.mark_covariates],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(d["marks_per_type"], d["side_covariates"], d["mark_covariates"])


@dataclass
class ParamSet:
    theta: np.ndarray
    rho: list[np.ndarray]

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParamSet":
        theta = np.zeros((spec.n_types - 1, spec.n_side_covariates))
        rho = [np.zeros((m - 1, len(c))) for m, c in zip(spec.marks_per_type, spec.mark_covariates)]
        return cls(theta, rho)

    @classmethod
    def from_vector(cls, spec: ModelSpec, vec) -> "ParamSet":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (spec.dim,):
            raise InvalidInputError(f"expected {spec.dim} parameters, got {vec.shape}")
        out = cls.zeros(spec)
        pos = spec.side_dim
        out.theta = vec[:pos].reshape(out.theta.shape).copy()
        for i, d in enumerate(spec.mark_dims):
            out.rho[i] = vec[pos:pos + d].reshape(out.rho[i].shape).copy()
            pos += d
        return out

    @classmethod
    def from_raw(cls, raw_side: np.ndarray, raw_marks: Sequence[np.ndarray]) -> "ParamSet":
        """Difference parameters from raw (non-identifiable) ones; row 0 is the reference."""
        raw_side = np.asarray(raw_side, dtype=float)
        theta = raw_side[1:] - raw_side[0]
        rho = []
        for r in raw_marks:
            r = np.asarray(r, dtype=float)
            rho.append(r[1:] - r[0])
        return cls(theta, rho)

    def to_vector(self) -> np.ndarray:
        parts = [self.theta.ravel()] + [r.ravel() for r in self.rho]
        return np.concatenate(parts) if parts else np.zeros(0)

    def blocks(self) -> list[np.ndarray]:
        return [self.theta] + list(self.rho)

    def validate(self, spec: ModelSpec, bound: float | None = None):
        ref = ParamSet.zeros(spec)
        for name, got, want in zip(spec.block_names(), self.blocks(), ref.blocks()):
            if got.shape != want.shape:
                raise InvalidInputError(f"{name}: shape {got.shape}, expected {want.shape}")
            if not np.all(np.isfinite(got)):
                raise InvalidInputError(f"{name}: non-finite entries")
            if bound is not None and np.any(np.abs(got) > bound):
                raise InvalidInputError(f"{name}: entries outside [-{bound}, {bound}]")

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "rho": [r.tolist() for r in self.rho]}

    @classmethod
    def from_dict(cls, spec: ModelSpec, d: dict) -> "ParamSet":
        out = cls.zeros(spec)
        out.theta = np.asarray(d["theta"], dtype=float).reshape(out.theta.shape)
        out.rho = [np.asarray(r, dtype=float).reshape(z.shape) for r, z in zip(d["rho"], out.rho)]
        return out


@dataclass
class CovariatePath:
    """Named piecewise-constant, right-continuous covariates on ``[0, horizon]``.

    ``values[s]`` holds on ``[breakpoints[s], breakpoints[s+1])``. An optional ``baseline``
    carries the latent intensity at each segment start (simulated data only); between
    breakpoints it relaxes towards ``baseline_mu`` at rate ``baseline_beta``.
    """

    breakpoints: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray
    horizon: float
    baseline: np.ndarray | None = None
    baseline_mu: float = 0.0
    baseline_beta: float = 0.0

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.breakpoints), len(self.names))
        self.names = tuple(self.names)
        if len(self.breakpoints) == 0 or self.breakpoints[0] != 0.0:
            raise InvalidInputError("covariate path must start at t=0")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise InvalidInputError("breakpoints must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise InvalidInputError(f"unknown covariate {name!r}") from None

    def segment_left(self, times) -> np.ndarray:
        """Index of the segment in force just before each time."""
        times = np.asarray(times, dtype=float)
        if times.size and (times.min() <= 0.0 or times.max() > self.horizon):
            raise InvalidInputError("event time outside the covariate domain (0, horizon]")
        return np.searchsorted(self.breakpoints, times, side="left") - 1

    def left_limits(self, times, names: Sequence[str]) -> np.ndarray:
        seg = self.segment_left(times)
        cols = [self.names.index(n) if n in self.names else None for n in names]
        missing = [n for n, c in zip(names, cols) if c is None]
        if missing:
            raise InvalidInputError(f"unknown covariates {missing}")
        return self.values[seg][:, cols] if len(cols) else np.zeros((len(seg), 0))

    def value_at(self, t: float, name: str) -> float:
        """Right-continuous value at ``t``."""
        s = np.searchsorted(self.breakpoints, t, side="right") - 1
        return float(self.column(name)[s])


@dataclass
class EventStream:
    times: np.ndarray
    types: np.ndarray
    marks: np.ndarray
    horizon: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.types = np.asarray(self.types, dtype=np.int64)
        self.marks = np.asarray(self.marks, dtype=np.int64)
        if not (len(self.times) == len(self.types) == len(self.marks)):
            raise InvalidInputError("times, types and marks must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    def validate(self, spec: ModelSpec | None = None):
        t = self.times
        if len(t) and (t[0] <= 0 or t[-1] > self.horizon):
            raise InvalidInputError("event times must lie in (0, horizon]")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("event times must be strictly increasing (no simultaneous events)")
        if spec is not None and len(t):
            if self.types.min() < 0 or self.types.max() >= spec.n_types:
                raise InvalidInputError("event type out of range")
            mpt = np.asarray(spec.marks_per_type)
            if self.marks.min() < 0 or np.any(self.marks >= mpt[self.types]):
                raise InvalidInputError("mark out of range for its type")

    def restrict(self, start: float, end: float) -> "EventStream":
        """Events in ``(start, end]``."""
        keep = (self.times > start) & (self.times <= end)
        return EventStream(self.times[keep], self.types[keep], self.marks[keep], self.horizon)

    def times_of(self, type_i: int, mark: int | None = None) -> np.ndarray:
        keep = self.types == type_i
        if mark is not None:
            keep &= self.marks == mark
        return self.times[keep]


def _softmax_with_reference(eta: np.ndarray) -> np.ndarray:
    # eta: (..., m-1) linear predictors of the non-reference categories
    full = np.concatenate([np.zeros(eta.shape[:-1] + (1,)), eta], axis=-1)
    full -= full.max(axis=-1, keepdims=True)
    np.exp(full, out=full)
    full /= full.sum(axis=-1, keepdims=True)
    return full


def log_softmax_with_reference(eta: np.ndarray) -> np.ndarray:
    full = np.concatenate([np.zeros(eta.shape[:-1] + (1,)), eta], axis=-1)
    mx = full.max(axis=-1, keepdims=True)
    lse = mx + np.log(np.exp(full - mx).sum(axis=-1, keepdims=True))
    return np.maximum(full - lse, np.log(PROB_FLOOR))


def category_probs(z, coef) -> np.ndarray:
    """Softmax probabilities with category 0 as reference; ``z`` may be a batch of rows."""
    z = np.asarray(z, dtype=float)
    coef = np.asarray(coef, dtype=float)
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(coef))):
        raise InvalidInputError("non-finite covariates or parameters")
    eta = z @ coef.T if coef.size else np.zeros(z.shape[:-1] + (coef.shape[0],))
    return _softmax_with_reference(eta)


def side_ratios(x, theta) -> np.ndarray:
    """Probability that an event is of each type, given side covariates ``x``."""
    return category_probs(x, theta)


def mark_probs(y, rho_i) -> np.ndarray:
    """Conditional mark distribution of a type given its mark covariates ``y``."""
    return category_probs(y, rho_i)


def multinomial_variance(probs) -> np.ndarray:
    """Covariance of the one-hot indicator of categories ``1..m-1``."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-12:
        raise InvalidInputError("probabilities must lie in [0,1] and sum to 1")
    q = p[1:]
    return np.diag(q) - np.outer(q, q)
