"""Synthetic order flow: market orders (side x aggressiveness) driven by a toy best-limit book.

Event types: 0 = bid side (sell market order), 1 = ask side (buy market order).
Marks: 0 = non-aggressive, 1 = aggressive (consumes the whole best queue).

Book covariates, all predictable (values in force just before each event):

* ``Z1`` imbalance ``(qB - qA) / (qB + qA)``
* ``Z2`` sign of the last market order (+1 ask side, -1 bid side)
* ``Z3`` signed spread: ``+1`` if the spread exceeds its reference, ``-1`` otherwise, times ``Z2``

``Z4..Z9`` are log-intensities of exponential Hawkes fits to sub-streams of the market
orders; see :func:`hawkes_covariates`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hawkes import ExpHawkesFit, fit_exp_hawkes_1d, hawkes_log_intensity_path
from .model import CovariatePath, EventStream, InvalidInputError, ModelSpec, category_probs
from .simulation import HawkesParams, SimulationIntegrityError, as_rng, simulate_hawkes, spawn

BOOK_COVARIATES = ("Z0", "Z1", "Z2", "Z3")
HAWKES_SOURCES = {
    "Z4": (0, 1),
    "Z5": (0, 0),
    "Z6": (1, 1),
    "Z7": (1, 0),
    "Z8": (0, None),
    "Z9": (1, None),
}
ALL_COVARIATES = BOOK_COVARIATES + tuple(HAWKES_SOURCES)
CATEGORY_NAMES = ("bid-nonagg", "bid-agg", "ask-nonagg", "ask-agg")


@dataclass
class LobConfig:
    horizon: float = 3600.0
    baseline: HawkesParams = field(default_factory=lambda: HawkesParams(0.25, 0.5, 1.5))
    limit_rate: float = 1.0
    cancel_rate: float = 0.15
    refill_mean: float = 4.0
    initial_queue: int = 5
    spread_open_rate: float = 0.05
    spread_close_rate: float = 0.5
    max_spread: int = 4
    median_spread: int = 1
    side_covariates: tuple[str, ...] = ("Z0", "Z1", "Z2")
    raw_side: tuple = ((0.0, 0.0, 0.0), (0.0, 2.0, 0.8))
    mark_covariates: tuple[tuple[str, ...], ...] = (("Z0", "Z1", "Z3"), ("Z0", "Z1"))
    raw_marks: tuple = (((0.0, 0.0, 0.0), (-0.8, -2.0, 0.8)), ((0.0, 0.0), (-0.8, 2.0)))

    def __post_init__(self):
        if isinstance(self.baseline, dict):
            self.baseline = HawkesParams(**self.baseline)
        self.side_covariates = tuple(self.side_covariates)
        self.mark_covariates = tuple(tuple(c) for c in self.mark_covariates)
        for cols in (self.side_covariates, *self.mark_covariates):
            bad = [c for c in cols if c not in BOOK_COVARIATES]
            if bad:
                raise InvalidInputError(f"synthetic generator only drives book covariates, got {bad}")
        spec = self.spec
        if np.shape(self.raw_side) != (2, spec.n_side_covariates):
            raise InvalidInputError("raw_side must have one row per side and one column per side covariate")
        for i, cols in enumerate(self.mark_covariates):
            if np.shape(self.raw_marks[i]) != (2, len(cols)):
                raise InvalidInputError(f"raw_marks[{i}] must be 2 x {len(cols)}")
        if min(self.limit_rate, self.cancel_rate, self.spread_close_rate) <= 0 or self.spread_open_rate < 0:
            raise InvalidInputError("book rates must be positive")

    @property
    def spec(self) -> ModelSpec:
        return ModelSpec((2, 2), self.side_covariates, self.mark_covariates)

    def true_probabilities(self, columns: dict) -> np.ndarray:
        """True probability of each of the four categories given covariates at event times."""
        x = np.column_stack([columns[c] for c in self.side_covariates])
        raw = np.asarray(self.raw_side, dtype=float)
        r = category_probs(x, raw[1:] - raw[0])
        out = []
        for i, cols in enumerate(self.mark_covariates):
            y = np.column_stack([columns[c] for c in cols])
            rm = np.asarray(self.raw_marks[i], dtype=float)
            q = category_probs(y, rm[1:] - rm[0])
            out.append(r[:, [i]] * q)
        return np.hstack(out)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "baseline": {"mu": self.baseline.mu, "alpha": self.baseline.alpha, "beta": self.baseline.beta},
            "limit_rate": self.limit_rate,
            "cancel_rate": self.cancel_rate,
            "refill_mean": self.refill_mean,
            "initial_queue": self.initial_queue,
            "spread_open_rate": self.spread_open_rate,
            "spread_close_rate": self.spread_close_rate,
            "max_spread": self.max_spread,
            "median_spread": self.median_spread,
            "side_covariates": list(self.side_covariates),
            "raw_side": [list(r) for r in self.raw_side],
            "mark_covariates": [list(c) for c in self.mark_covariates],
            "raw_marks": [[list(r) for r in m] for m in self.raw_marks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LobConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown LOB config keys {sorted(unknown)}")
        return cls(**d)


def simulate_synthetic_lob(config: LobConfig, horizon: float | None = None, seed=None
                           ) -> tuple[EventStream, CovariatePath]:
    """Simulate one trading day of market orders together with the book covariates."""
    horizon = config.horizon if horizon is None else float(horizon)
    s_base, s_book = spawn(seed, 2)
    hawkes = simulate_hawkes(config.baseline, horizon, s_base)
    rng = as_rng(s_book)
    mu, alpha, beta = config.baseline.mu, config.baseline.alpha, config.baseline.beta

    raw_side = np.asarray(config.raw_side, dtype=float)
    raw_marks = [np.asarray(m, dtype=float) for m in config.raw_marks]
    side_idx = [BOOK_COVARIATES.index(c) for c in config.side_covariates]
    mark_idx = [[BOOK_COVARIATES.index(c) for c in cols] for cols in config.mark_covariates]

    q_bid = q_ask = int(config.initial_queue)
    spread = int(config.median_spread)
    eps = 1 if rng.random() < 0.5 else -1

    def covariates():
        sigma = 1 if spread > config.median_spread else -1
        return np.array([1.0, (q_bid - q_ask) / (q_bid + q_ask), float(eps), float(sigma * eps)])

    def flow_terms(z):
        eta = raw_side @ z[side_idx]
        w = np.exp(eta - eta.max())
        scale = w.sum() * np.exp(eta.max())
        agg = []
        for i in range(2):
            e = raw_marks[i] @ z[mark_idx[i]]
            e = np.exp(e - e.max())
            agg.append(e[1] / e.sum())
        return scale, w[1] / w.sum(), agg

    breaks, rows, book = [0.0], [], []
    z = covariates()
    rows.append(z)
    book.append((q_bid, q_ask, spread))
    scale, p_ask, p_agg = flow_terms(z)

    times, types, marks = [], [], []
    h_times = hawkes.times
    h_pos = 0
    t = 0.0
    t_ref, excess_ref = 0.0, hawkes.initial_excess
    exp, rand = rng.exponential, rng.random
    while True:
        base = mu + excess_ref * np.exp(-beta * (t - t_ref))
        bound = base * scale
        r_book = np.array([
            config.limit_rate,
            config.limit_rate,
            config.cancel_rate * (q_bid - 1),
            config.cancel_rate * (q_ask - 1),
            config.spread_close_rate * (spread - 1),
            config.spread_open_rate if spread < config.max_spread else 0.0,
        ])
        total_book = r_book.sum()
        t_book = t + exp(1.0 / total_book)
        t_mo = t + exp(1.0 / bound) if bound > 0 else np.inf
        t_h = h_times[h_pos] if h_pos < len(h_times) else np.inf
        t_next = min(t_book, t_mo, t_h)
        if t_next >= horizon:
            break
        if t_next == t_h:
            excess_ref = excess_ref * np.exp(-beta * (t_h - t_ref)) + alpha
            t_ref = t_h
            h_pos += 1
            t = t_h
            continue
        t = t_next
        if t_next == t_book:
            kind = int(np.searchsorted(np.cumsum(r_book), rand() * total_book, side="right"))
            if kind == 0:
                q_bid += 1
            elif kind == 1:
                q_ask += 1
            elif kind == 2:
                q_bid -= 1
            elif kind == 3:
                q_ask -= 1
            elif kind == 4:
                spread -= 1
            else:
                spread += 1
        else:
            lam = (mu + excess_ref * np.exp(-beta * (t - t_ref))) * scale
            if lam > bound * (1 + 1e-12):
                raise SimulationIntegrityError(f"thinning bound exceeded at t={t}")
            if rand() * bound > lam:
                continue
            side = 1 if rand() < p_ask else 0
            mark = 1 if rand() < p_agg[side] else 0
            times.append(t)
            types.append(side)
            marks.append(mark)
            eps = 1 if side == 1 else -1
            if mark == 1:
                refill = 1 + int(rng.poisson(config.refill_mean))
                if side == 0:
                    q_bid = refill
                else:
                    q_ask = refill
                spread = min(spread + 1, config.max_spread)
            elif side == 0:
                q_bid = max(q_bid - 1, 1)
            else:
                q_ask = max(q_ask - 1, 1)
        z = covariates()
        if np.array_equal(z, rows[-1]) and book[-1] == (q_bid, q_ask, spread):
            continue
        breaks.append(t)
        rows.append(z)
        book.append((q_bid, q_ask, spread))
        scale, p_ask, p_agg = flow_terms(z)

    values = np.hstack([np.asarray(rows), np.asarray(book, dtype=float)])
    path = CovariatePath(np.asarray(breaks), BOOK_COVARIATES + ("q_bid", "q_ask", "spread"), values, horizon)
    stream = EventStream(np.asarray(times), np.asarray(types, dtype=np.int64),
                         np.asarray(marks, dtype=np.int64), horizon)
    return stream, path


def category_labels(stream: EventStream) -> np.ndarray:
    """Flattened category index ``2 * type + mark``."""
    return 2 * stream.types + stream.marks


def source_times(stream: EventStream, source: tuple[int, int | None]) -> np.ndarray:
    type_i, mark = source
    return stream.times_of(type_i, mark)


def fit_hawkes_covariates(stream: EventStream, names=tuple(HAWKES_SOURCES)) -> dict[str, ExpHawkesFit]:
    """Fit the univariate Hawkes model behind each requested log-intensity covariate."""
    return {n: fit_exp_hawkes_1d(source_times(stream, HAWKES_SOURCES[n]), stream.horizon) for n in names}


def hawkes_covariates(stream: EventStream, fits: dict[str, ExpHawkesFit]) -> dict[str, np.ndarray]:
    """Log-intensity covariates at each event time of ``stream`` (left limits).

    ``fits`` may come from another day; only the events of ``stream`` feed the kernels.
    """
    return {n: hawkes_log_intensity_path(f, source_times(stream, HAWKES_SOURCES[n]), stream.times)
            for n, f in fits.items()}


def event_covariates(stream: EventStream, path: CovariatePath, hawkes_fits: dict[str, ExpHawkesFit] | None = None
                     ) -> dict[str, np.ndarray]:
    """All available covariates Z0..Z9 at the event times."""
    cols = {}
    names = [c for c in BOOK_COVARIATES if c in path.names]
    vals = path.left_limits(stream.times, names)
    for j, n in enumerate(names):
        cols[n] = vals[:, j]
    if "Z0" not in cols:
        cols["Z0"] = np.ones(len(stream))
    if hawkes_fits:
        cols.update(hawkes_covariates(stream, hawkes_fits))
    return cols
