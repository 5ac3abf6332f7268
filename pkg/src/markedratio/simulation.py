"""Ground-truth simulators: exponential Hawkes baseline, two-state Markov covariates and
the marked ratio process itself (Ogata thinning against the total intensity)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import (
    CovariatePath,
    EventStream,
    InvalidInputError,
    ModelSpec,
    ParamSet,
    category_probs,
)


class SimulationIntegrityError(RuntimeError):
    """A thinning bound was exceeded."""


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn(seed, n: int) -> list[np.random.SeedSequence]:
    if isinstance(seed, np.random.SeedSequence):
        return seed.spawn(n)
    if isinstance(seed, np.random.Generator):
        return [np.random.SeedSequence(int(s)) for s in seed.integers(0, 2**63, size=n)]
    return np.random.SeedSequence(seed).spawn(n)


@dataclass(frozen=True)
class HawkesParams:
    mu: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.mu < 0 or self.alpha < 0 or self.beta <= 0:
            raise InvalidInputError("Hawkes parameters need mu >= 0, alpha >= 0, beta > 0")
        if self.alpha / self.beta >= 1:
            raise InvalidInputError("non-stationary Hawkes parameters (alpha/beta >= 1)")

    @property
    def mean_intensity(self) -> float:
        return self.mu / (1.0 - self.alpha / self.beta)


@dataclass(frozen=True)
class MarkovChainParams:
    rate: float
    initial: str | int = "stationary"

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise InvalidInputError("transition rate must be finite and positive")
        if self.initial not in ("stationary", -1, 1):
            raise InvalidInputError("initial state must be -1, +1 or 'stationary'")


@dataclass
class HawkesPath:
    """Event times on ``(0, horizon]`` plus the excess intensity inherited at ``t=0``."""

    times: np.ndarray
    params: HawkesParams
    horizon: float
    initial_excess: float = 0.0

    def intensity(self, query, left: bool = False) -> np.ndarray:
        """Intensity at sorted query times; ``left=True`` excludes jumps at the query time."""
        query = np.asarray(query, dtype=float)
        mu, alpha, beta = self.params.mu, self.params.alpha, self.params.beta
        out = np.empty(len(query))
        side = "left" if left else "right"
        idx = np.searchsorted(self.times, query, side=side)
        # excess just after each event (right-continuous), by recursion
        after = np.empty(len(self.times))
        prev_t, exc = 0.0, self.initial_excess
        for n, t in enumerate(self.times):
            exc = exc * np.exp(-beta * (t - prev_t)) + alpha
            after[n] = exc
            prev_t = t
        for q, (t, k) in enumerate(zip(query, idx)):
            if k == 0:
                out[q] = mu + self.initial_excess * np.exp(-beta * t)
            else:
                out[q] = mu + after[k - 1] * np.exp(-beta * (t - self.times[k - 1]))
        return out


def simulate_hawkes(params: HawkesParams, horizon: float, seed=None, burn_in: float | None = None) -> HawkesPath:
    """Exact Ogata thinning for a one-dimensional exponential Hawkes process.

    A warm-up of ``burn_in`` seconds (default ``10/beta``) is simulated before ``t=0`` and
    discarded; its residual excitation is kept in ``initial_excess``.
    """
    if horizon < 0:
        raise InvalidInputError("horizon must be non-negative")
    if horizon == 0:
        return HawkesPath(np.zeros(0), params, 0.0)
    rng = as_rng(seed)
    mu, alpha, beta = params.mu, params.alpha, params.beta
    burn = 10.0 / beta if burn_in is None else float(burn_in)
    t = -burn
    excess = 0.0
    times = []
    while True:
        bound = mu + excess
        if bound <= 0:
            break
        w = rng.exponential(1.0 / bound)
        t_new = t + w
        if t_new > horizon:
            break
        excess *= np.exp(-beta * w)
        lam = mu + excess
        if lam > bound * (1 + 1e-12):
            raise SimulationIntegrityError("Hawkes thinning bound exceeded")
        if rng.random() * bound <= lam:
            times.append(t_new)
            excess += alpha
        t = t_new
    times = np.asarray(times)
    past = times[times <= 0]
    initial_excess = float(np.sum(alpha * np.exp(-beta * (0.0 - past)))) if len(past) else 0.0
    return HawkesPath(times[times > 0], params, float(horizon), initial_excess)


def simulate_markov_covariate(params: MarkovChainParams, horizon: float, seed=None,
                              name: str = "X", burn_in: float | None = None) -> CovariatePath:
    """Symmetric two-state chain on {-1, +1} with exponential holding times."""
    rng = as_rng(seed)
    rate = params.rate
    if params.initial == "stationary":
        state = 1.0 if rng.random() < 0.5 else -1.0
    else:
        state = float(params.initial)
    burn = 10.0 / rate if burn_in is None else float(burn_in)
    if params.initial == "stationary" and burn > 0:
        t = -burn
        while True:
            t += rng.exponential(1.0 / rate)
            if t > 0:
                break
            state = -state
        first = t
    else:
        first = rng.exponential(1.0 / rate)
    breaks, vals = [0.0], [state]
    t = first
    while t < horizon:
        state = -state
        breaks.append(t)
        vals.append(state)
        t += rng.exponential(1.0 / rate)
    return CovariatePath(np.asarray(breaks), (name,), np.asarray(vals)[:, None], float(horizon))


def merge_paths(paths: Sequence[CovariatePath], horizon: float, extra_breaks=None) -> CovariatePath:
    """Combine single-grid paths onto the union of their breakpoints."""
    grids = [p.breakpoints for p in paths]
    if extra_breaks is not None:
        grids.append(np.asarray(extra_breaks, dtype=float))
    grid = np.unique(np.concatenate(grids + [np.zeros(1)]))
    grid = grid[(grid >= 0) & (grid < horizon)] if horizon > 0 else np.zeros(1)
    names, cols = [], []
    for p in paths:
        seg = np.searchsorted(p.breakpoints, grid, side="right") - 1
        for j, n in enumerate(p.names):
            names.append(n)
            cols.append(p.values[seg, j])
    values = np.column_stack(cols) if cols else np.zeros((len(grid), 0))
    return CovariatePath(grid, tuple(names), values, float(horizon))


@dataclass
class GroundTruth:
    """Raw (non-identifiable) parameters used only for data generation."""

    raw_side: np.ndarray
    raw_marks: list[np.ndarray]
    baseline: HawkesParams
    covariates: Mapping[str, MarkovChainParams] = field(default_factory=dict)

    def __post_init__(self):
        self.raw_side = np.asarray(self.raw_side, dtype=float)
        self.raw_marks = [np.asarray(r, dtype=float) for r in self.raw_marks]

    def check(self, spec: ModelSpec):
        if self.raw_side.shape != (spec.n_types, spec.n_side_covariates):
            raise InvalidInputError("raw side parameters do not match the model spec")
        for i, (m, cols) in enumerate(zip(spec.marks_per_type, spec.mark_covariates)):
            if self.raw_marks[i].shape != (m, len(cols)):
                raise InvalidInputError(f"raw mark parameters of type {i} do not match the model spec")

    def params(self) -> ParamSet:
        return ParamSet.from_raw(self.raw_side, self.raw_marks)


def example1() -> tuple[GroundTruth, ModelSpec]:
    """Two types, two marks each, one +-1 chain for the side and one shared by both mark models."""
    spec = ModelSpec((2, 2), ("X1",), (("Y1",), ("Y1",)))
    truth = GroundTruth(
        raw_side=np.array([[-0.75], [0.75]]),
        raw_marks=[np.array([[-0.5], [0.5]]), np.array([[-1.0], [1.0]])],
        baseline=HawkesParams(mu=0.5, alpha=1.0, beta=2.0),
        covariates={"X1": MarkovChainParams(0.5), "Y1": MarkovChainParams(0.5)},
    )
    return truth, spec


def _baseline_at_breaks(hawkes: HawkesPath, grid: np.ndarray) -> np.ndarray:
    return hawkes.intensity(grid, left=False)


def _segment_rates(truth: GroundTruth, spec: ModelSpec, path: CovariatePath):
    """Side scale ``sum_i exp(x . vartheta^i)`` and per-category factors on every segment."""
    x = path.values[:, [path.names.index(n) for n in spec.side_covariates]]
    eta = x @ truth.raw_side.T
    shift = eta.max(axis=1, keepdims=True)
    w = np.exp(eta - shift)
    scale = w.sum(axis=1) * np.exp(shift[:, 0])
    side_probs = w / w.sum(axis=1, keepdims=True)
    mark_probs = []
    for i, cols in enumerate(spec.mark_covariates):
        y = path.values[:, [path.names.index(n) for n in cols]]
        raw = truth.raw_marks[i]
        mark_probs.append(category_probs(y, raw[1:] - raw[0]))
    return scale, side_probs, mark_probs


def simulate_marked_process(truth: GroundTruth, spec: ModelSpec, horizon: float, seed=None
                            ) -> tuple[EventStream, CovariatePath]:
    """Simulate events with intensity ``lambda0(t) exp(x . vartheta^i) p^k_i(t)`` on ``[0, horizon]``.

    Accepted candidates pick the type from the side ratios and then the mark from that
    type's mark probabilities.
    """
    truth.check(spec)
    if horizon < 0:
        raise InvalidInputError("horizon must be non-negative")
    names = spec.covariate_names
    seeds = spawn(seed, 2 + len(names))
    hawkes = simulate_hawkes(truth.baseline, horizon, seeds[0]) if horizon > 0 else HawkesPath(np.zeros(0), truth.baseline, 0.0)
    chains = []
    for n, s in zip(names, seeds[2:]):
        if n not in truth.covariates:
            raise InvalidInputError(f"no generator for covariate {n!r}")
        chains.append(simulate_markov_covariate(truth.covariates[n], horizon, s, name=n))
    path = merge_paths(chains, horizon, extra_breaks=hawkes.times)
    mu, beta = truth.baseline.mu, truth.baseline.beta
    path.baseline = _baseline_at_breaks(hawkes, path.breakpoints)
    path.baseline_mu, path.baseline_beta = mu, beta
    if horizon == 0:
        empty = np.zeros(0)
        return EventStream(empty, empty, empty, 0.0), path

    rng = as_rng(seeds[1])
    scale, side_probs, mark_probs = _segment_rates(truth, spec, path)
    side_cdf = np.cumsum(side_probs, axis=1)
    mark_cdf = [np.cumsum(p, axis=1) for p in mark_probs]
    ends = np.append(path.breakpoints[1:], horizon)
    times, types, marks = [], [], []
    exp, rand = rng.exponential, rng.random
    for s, (b, end) in enumerate(zip(path.breakpoints, ends)):
        excess = path.baseline[s] - mu
        sc = scale[s]
        t = b
        bound = (mu + excess) * sc
        while bound > 0:
            t_c = t + exp(1.0 / bound)
            if t_c >= end:
                break
            lam = (mu + excess * np.exp(-beta * (t_c - b))) * sc
            if lam > bound * (1 + 1e-12):
                raise SimulationIntegrityError(f"thinning bound exceeded at t={t_c}")
            if rand() * bound <= lam:
                i = int(np.searchsorted(side_cdf[s], rand() * side_cdf[s, -1], side="right"))
                i = min(i, spec.n_types - 1)
                cdf = mark_cdf[i][s]
                k = min(int(np.searchsorted(cdf, rand() * cdf[-1], side="right")), len(cdf) - 1)
                times.append(t_c)
                types.append(i)
                marks.append(k)
            t = t_c
            bound = lam
    stream = EventStream(np.asarray(times), np.asarray(types, dtype=np.int64),
                         np.asarray(marks, dtype=np.int64), float(horizon))
    return stream, path


def true_compensator(truth: GroundTruth, spec: ModelSpec, path: CovariatePath, times,
                     type_i: int, mark: int | None = None) -> np.ndarray:
    """Integrated true intensity of category ``(type_i, mark)`` (or of the whole type) from 0 to each time."""
    if path.baseline is None:
        raise InvalidInputError("path carries no baseline intensity")
    mu, beta = path.baseline_mu, path.baseline_beta
    scale, side_probs, mark_probs = _segment_rates(truth, spec, path)
    factor = scale * side_probs[:, type_i]
    if mark is not None:
        factor = factor * mark_probs[type_i][:, mark]
    b = path.breakpoints
    ends = np.append(b[1:], path.horizon)
    excess = path.baseline - mu

    def seg_integral(s, upto):
        d = upto - b[s]
        decay = (1 - np.exp(-beta * d)) / beta if beta > 0 else d
        return factor[s] * (mu * d + excess[s] * decay)

    full = seg_integral(np.arange(len(b)), ends)
    cum = np.concatenate([[0.0], np.cumsum(full)])
    times = np.asarray(times, dtype=float)
    s = np.clip(np.searchsorted(b, times, side="right") - 1, 0, len(b) - 1)
    return cum[s] + seg_integral(s, times)


def simulate_multivariate_hawkes(mu, alpha, beta, horizon: float, seed=None) -> list[np.ndarray]:
    """Ogata thinning for a D-dimensional exponential Hawkes process started empty at ``t=0``.

    ``alpha[a, b]`` and ``beta[a, b]`` are the kernel of source ``b`` on target ``a``.
    Returns the event times of each dimension.
    """
    mu = np.asarray(mu, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    D = len(mu)
    if alpha.shape != (D, D) or beta.shape != (D, D):
        raise InvalidInputError("alpha and beta must be D x D")
    if np.any(mu < 0) or np.any(alpha < 0) or np.any(beta <= 0):
        raise InvalidInputError("need mu >= 0, alpha >= 0, beta > 0")
    if np.max(np.abs(np.linalg.eigvals(alpha / beta))) >= 1:
        raise InvalidInputError("non-stationary kernel (spectral radius >= 1)")
    rng = as_rng(seed)
    excess = np.zeros((D, D))
    out = [[] for _ in range(D)]
    t = 0.0
    while True:
        bound = float(np.sum(mu) + excess.sum())
        if bound <= 0:
            break
        w = rng.exponential(1.0 / bound)
        t += w
        if t > horizon:
            break
        excess *= np.exp(-beta * w)
        lam = mu + excess.sum(axis=1)
        total = lam.sum()
        if total > bound * (1 + 1e-12):
            raise SimulationIntegrityError("multivariate Hawkes thinning bound exceeded")
        u = rng.random() * bound
        if u <= total:
            d = min(int(np.searchsorted(np.cumsum(lam), u, side="right")), D - 1)
            out[d].append(t)
            excess[:, d] += alpha[:, d]
    return [np.asarray(x) for x in out]
