"""Out-of-sample prediction of the side and aggressiveness of the next market order.

Models are fitted on day ``d`` and evaluated at every event of day ``d + 1``; covariates
on day ``d + 1`` use the Hawkes parameters fitted on day ``d``. Categories are flattened
as ``2 * side + mark``: bid non-aggressive, bid aggressive, ask non-aggressive, ask
aggressive.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimation import BlockFit, FitReport, fit_qmle, newton_block
from .hawkes import MultiHawkesFit, fit_multivariate_hawkes_4d
from .likelihood import EventDesign
from .lob import LobConfig, event_covariates, fit_hawkes_covariates, source_times
from .model import CovariatePath, EventStream, ModelSpec, category_probs
from .selection import parse_candidate

MODEL_KINDS = ("hawkes4d", "ratio_unmarked", "marked_ratio", "bayes")


@dataclass
class PredictionRun:
    model_kind: str
    covariates: dict
    times: np.ndarray
    actual_side: np.ndarray
    actual_mark: np.ndarray
    pred_side: np.ndarray
    pred_mark: np.ndarray
    joint_side: np.ndarray | None = None
    joint_mark: np.ndarray | None = None
    mark_given_actual_side: np.ndarray | None = None
    skipped: int = 0
    day: int | None = None

    @property
    def n_events(self) -> int:
        return len(self.actual_side)

    def _mean(self, hits) -> float:
        return float(np.mean(hits)) if len(hits) else float("nan")

    @property
    def side_accuracy(self) -> float:
        return self._mean(self.pred_side == self.actual_side)

    @property
    def aggressiveness_accuracy(self) -> float:
        return self._mean(self.pred_mark == self.actual_mark)

    @property
    def global_accuracy(self) -> float:
        return self._mean((self.pred_side == self.actual_side) & (self.pred_mark == self.actual_mark))

    @property
    def joint_global_accuracy(self) -> float:
        if self.joint_side is None:
            return self.global_accuracy
        return self._mean((self.joint_side == self.actual_side) & (self.joint_mark == self.actual_mark))

    @property
    def aggressiveness_accuracy_actual_side(self) -> float:
        if self.mark_given_actual_side is None:
            return self.aggressiveness_accuracy
        return self._mean(self.mark_given_actual_side == self.actual_mark)

    @property
    def joint_disagreement(self) -> float:
        if self.joint_side is None:
            return 0.0
        return self._mean((self.joint_side != self.pred_side) | (self.joint_mark != self.pred_mark))

    def accuracies(self) -> dict:
        return {
            "side": self.side_accuracy,
            "aggressiveness": self.aggressiveness_accuracy,
            "global": self.global_accuracy,
            "global_joint_argmax": self.joint_global_accuracy,
            "aggressiveness_actual_side": self.aggressiveness_accuracy_actual_side,
            "two_step_vs_joint_disagreement": self.joint_disagreement,
            "n_events": self.n_events,
            "skipped": self.skipped,
        }

    def log_rows(self) -> list[dict]:
        rows = []
        for n in range(self.n_events):
            rows.append({
                "t": self.times[n],
                "actual_type": int(self.actual_side[n]),
                "actual_mark": int(self.actual_mark[n]),
                "pred_type": int(self.pred_side[n]),
                "pred_mark": int(self.pred_mark[n]),
                "joint_type": int(self.joint_side[n]) if self.joint_side is not None else int(self.pred_side[n]),
                "joint_mark": int(self.joint_mark[n]) if self.joint_mark is not None else int(self.pred_mark[n]),
            })
        return rows


def _finite_rows(*arrays) -> np.ndarray:
    ok = None
    for a in arrays:
        a = np.asarray(a, dtype=float)
        good = np.all(np.isfinite(a.reshape(len(a), -1)), axis=1)
        ok = good if ok is None else ok & good
    return ok


def predict_from_probabilities(side_probs: np.ndarray, mark_probs: Sequence[np.ndarray], stream: EventStream,
                               model_kind: str, covariates: dict, day=None) -> PredictionRun:
    """Two-step argmax (side, then the predicted side's mark), plus joint argmax and the
    mark predicted from the actual side."""
    ok = _finite_rows(side_probs, *mark_probs)
    sp = side_probs[ok]
    mp = [m[ok] for m in mark_probs]
    n = len(sp)
    pred_side = np.argmax(sp, axis=1)
    mark_argmax = np.column_stack([np.argmax(m, axis=1) for m in mp]) if n else np.zeros((0, len(mp)), dtype=int)
    pred_mark = mark_argmax[np.arange(n), pred_side]
    widths = [m.shape[1] for m in mp]
    joint = np.hstack([sp[:, [i]] * m for i, m in enumerate(mp)])
    flat = np.argmax(joint, axis=1)
    offsets = np.cumsum([0] + widths)
    joint_side = np.searchsorted(offsets, flat, side="right") - 1
    joint_mark = flat - offsets[joint_side]
    actual_side = stream.types[ok]
    return PredictionRun(model_kind, covariates, stream.times[ok], actual_side, stream.marks[ok],
                         pred_side, pred_mark, joint_side, joint_mark,
                         mark_argmax[np.arange(n), actual_side], skipped=int(np.sum(~ok)), day=day)


def predict_from_categories(scores: np.ndarray, stream: EventStream, model_kind: str, covariates: dict,
                            day=None) -> PredictionRun:
    """Argmax over the four flattened categories (ties go to the lower index)."""
    ok = _finite_rows(scores)
    best = np.argmax(scores[ok], axis=1)
    return PredictionRun(model_kind, covariates, stream.times[ok], stream.types[ok], stream.marks[ok],
                         best // 2, best % 2, skipped=int(np.sum(~ok)), day=day)


@dataclass
class MarkedRatioModel:
    fit: FitReport
    hawkes_fits: dict
    side_set: str
    bid_set: str
    ask_set: str

    @property
    def covariates(self) -> dict:
        return {"side": self.side_set, "bid_agg": self.bid_set, "ask_agg": self.ask_set}


def marked_spec(side_set: str, bid_set: str, ask_set: str) -> ModelSpec:
    return ModelSpec((2, 2), parse_candidate(side_set), (parse_candidate(bid_set), parse_candidate(ask_set)))


def identifiable(cov: tuple[str, ...], columns: dict, label: str = "") -> tuple[str, ...]:
    """Drop non-intercept covariates that are constant over the fit events.

    A fitted Hawkes covariate with zero excitation is constant and duplicates Z0; its
    coefficient is then pinned at zero by leaving it out.
    """
    keep, dropped = [], []
    for c in cov:
        col = np.asarray(columns[c], dtype=float)
        col = col[np.isfinite(col)]
        if c != "Z0" and (len(col) == 0 or np.ptp(col) <= 1e-12 * max(1.0, float(np.max(np.abs(col))))):
            dropped.append(c)
        else:
            keep.append(c)
    if dropped:
        warnings.warn(f"{label}: constant covariates {dropped} dropped from the fit", RuntimeWarning)
    return tuple(keep)


def _hawkes_for(names, stream):
    needed = sorted({c for n in names for c in parse_candidate(n) if c in ("Z4", "Z5", "Z6", "Z7", "Z8", "Z9")})
    return fit_hawkes_covariates(stream, needed) if needed else {}


def fit_marked_ratio(stream: EventStream, path: CovariatePath, side_set: str, bid_set: str, ask_set: str,
                     ) -> MarkedRatioModel:
    hawkes_fits = _hawkes_for((side_set, bid_set, ask_set), stream)
    columns = event_covariates(stream, path, hawkes_fits)
    label = "marked_ratio-" + "-".join((side_set, bid_set, ask_set))
    spec = ModelSpec((2, 2), identifiable(parse_candidate(side_set), columns, label),
                     tuple(identifiable(parse_candidate(c), columns, label) for c in (bid_set, ask_set)))
    fit = fit_qmle(EventDesign.from_columns(stream, columns, spec))
    return MarkedRatioModel(fit, hawkes_fits, side_set, bid_set, ask_set)


def predict_marked_ratio(model: MarkedRatioModel, stream: EventStream, path: CovariatePath, day=None) -> PredictionRun:
    spec = model.fit.spec
    columns = event_covariates(stream, path, model.hawkes_fits)
    est = model.fit.estimate
    x = np.column_stack([columns[c] for c in spec.side_covariates])
    side_probs = category_probs(np.nan_to_num(x), est.theta)
    side_probs[~_finite_rows(x)] = np.nan
    mark_probs = []
    for i, cols in enumerate(spec.mark_covariates):
        y = np.column_stack([columns[c] for c in cols])
        q = category_probs(np.nan_to_num(y), est.rho[i])
        q[~_finite_rows(y)] = np.nan
        mark_probs.append(q)
    return predict_from_probabilities(side_probs, mark_probs, stream, "marked_ratio", model.covariates, day)


@dataclass
class UnmarkedRatioModel:
    fit: BlockFit
    hawkes_fits: dict
    covariate_set: str
    used: tuple[str, ...] = ()


def fit_ratio_unmarked(stream: EventStream, path: CovariatePath, covariate_set: str) -> UnmarkedRatioModel:
    """One softmax over the four flattened categories, sharing one covariate set."""
    hawkes_fits = _hawkes_for((covariate_set,), stream)
    columns = event_covariates(stream, path, hawkes_fits)
    cov = identifiable(parse_candidate(covariate_set), columns, "ratio_unmarked-" + covariate_set)
    z = np.column_stack([columns[c] for c in cov])
    fit = newton_block(2 * stream.types + stream.marks, z, 4, name="unmarked")
    return UnmarkedRatioModel(fit, hawkes_fits, covariate_set, cov)


def predict_ratio_unmarked(model: UnmarkedRatioModel, stream: EventStream, path: CovariatePath, day=None
                           ) -> PredictionRun:
    columns = event_covariates(stream, path, model.hawkes_fits)
    z = np.column_stack([columns[c] for c in model.used])
    probs = category_probs(np.nan_to_num(z), model.fit.estimate)
    probs[~_finite_rows(z)] = np.nan
    return predict_from_categories(probs, stream, "ratio_unmarked", {"all": model.covariate_set}, day)


def fit_hawkes4d(stream: EventStream) -> MultiHawkesFit:
    streams = [source_times(stream, (i, k)) for i in (0, 1) for k in (0, 1)]
    return fit_multivariate_hawkes_4d(streams, stream.horizon)


def predict_hawkes4d(fit: MultiHawkesFit, stream: EventStream, day=None) -> PredictionRun:
    labels = 2 * stream.types + stream.marks
    lam = fit.intensities_at_events(stream.times, labels)
    return predict_from_categories(lam, stream, "hawkes4d", {}, day)


def predict_bayes(config: LobConfig, stream: EventStream, path: CovariatePath, day=None) -> PredictionRun:
    """Oracle: argmax of the generator's true category probabilities."""
    columns = event_covariates(stream, path)
    probs = config.true_probabilities(columns)
    side = probs[:, :2].sum(axis=1), probs[:, 2:].sum(axis=1)
    side_probs = np.column_stack(side)
    mark_probs = [probs[:, 2 * i:2 * i + 2] / side_probs[:, [i]] for i in range(2)]
    return predict_from_probabilities(side_probs, mark_probs, stream, "bayes", {}, day)


def accuracy_report(runs: Sequence[PredictionRun]) -> dict:
    """Average accuracies per model kind (rows: side, aggressiveness, global)."""
    grouped: dict[str, list[PredictionRun]] = {}
    for r in runs:
        grouped.setdefault(r.model_kind, []).append(r)
    table = {}
    for kind, rs in grouped.items():
        acc = [r.accuracies() for r in rs]
        table[kind] = {
            "partial_side": float(np.mean([a["side"] for a in acc])),
            "partial_aggressiveness": float(np.mean([a["aggressiveness"] for a in acc])),
            "global": float(np.mean([a["global"] for a in acc])),
            "global_joint_argmax": float(np.mean([a["global_joint_argmax"] for a in acc])),
            "aggressiveness_actual_side": float(np.mean([a["aggressiveness_actual_side"] for a in acc])),
            "two_step_vs_joint_disagreement": float(np.mean([a["two_step_vs_joint_disagreement"] for a in acc])),
            "days": len(rs),
            "events": int(sum(a["n_events"] for a in acc)),
            "skipped": int(sum(a["skipped"] for a in acc)),
        }
    return table


@dataclass
class PredictionPlan:
    marked_sets: list[tuple[str, str, str]] = field(default_factory=lambda: [("12", "13", "1")])
    unmarked_sets: list[str] = field(default_factory=lambda: ["14689"])
    hawkes4d: bool = True
    bayes: LobConfig | None = None


def _guarded(label, day, fn):
    try:
        return fn()
    except np.linalg.LinAlgError as exc:
        warnings.warn(f"day {day} {label}: fit failed ({exc}), skipped", RuntimeWarning)
        return None


def predict_day_pair(args) -> list[PredictionRun]:
    """Fit on one day and evaluate on the next; models whose fit is singular are skipped."""
    day, (fit_stream, fit_path), (test_stream, test_path), plan = args
    runs = []
    for sets in plan.marked_sets:
        label = "marked_ratio-" + "-".join(sets)
        model = _guarded(label, day, lambda: fit_marked_ratio(fit_stream, fit_path, *sets))
        if model is not None:
            run = predict_marked_ratio(model, test_stream, test_path, day)
            run.model_kind = label
            runs.append(run)
    for cov in plan.unmarked_sets:
        label = "ratio_unmarked-" + cov
        model = _guarded(label, day, lambda: fit_ratio_unmarked(fit_stream, fit_path, cov))
        if model is not None:
            run = predict_ratio_unmarked(model, test_stream, test_path, day)
            run.model_kind = label
            runs.append(run)
    if plan.hawkes4d:
        runs.append(predict_hawkes4d(fit_hawkes4d(fit_stream), test_stream, day))
    if plan.bayes is not None:
        runs.append(predict_bayes(plan.bayes, test_stream, test_path, day))
    return runs


def run_prediction_study(days: Sequence[tuple[EventStream, CovariatePath]], plan: PredictionPlan,
                         mapper: Callable = map) -> list[PredictionRun]:
    jobs = [(d + 1, days[d], days[d + 1], plan) for d in range(len(days) - 1)]
    return [r for runs in mapper(predict_day_pair, jobs) for r in runs]
