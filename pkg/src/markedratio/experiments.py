"""Replication runners shared by the command line and the scripts.

Randomness: every work unit draws from ``SeedSequence(master, spawn_key=(stream, *index))``
where ``stream`` is 0 for two-type simulations, 1 for synthetic trading days and 2 for
sampler seeds. A unit's draws therefore do not depend on how many units run or on the
number of worker processes.

Each unit writes its own JSON result under a ``units/`` directory; reruns reuse existing
files, so an interrupted command picks up where it stopped.
"""
from __future__ import annotations

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import io
from .config import ExperimentConfig
from .estimation import QbeConfig, fit_qbe, fit_qmle, theoretical_gamma_example1, theoretical_sd
from .likelihood import EventDesign
from .lob import LobConfig, simulate_synthetic_lob
from .model import CovariatePath, EventStream, InvalidInputError, ModelSpec
from .prediction import PredictionPlan, accuracy_report, predict_day_pair
from .selection import ROLES, CovariateMenu, SelectionTable, select_day
from .simulation import GroundTruth, simulate_marked_process

log = logging.getLogger(__name__)

STREAM_EXAMPLE = 0
STREAM_DAYS = 1
STREAM_SAMPLER = 2


def unit_seed(master: int, stream: int, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(stream, *index))


def seed_words(seq: np.random.SeedSequence) -> list[int]:
    """A printable fingerprint of a seed sequence (for manifests)."""
    return [int(w) for w in seq.generate_state(2)]


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map; ``jobs > 1`` uses worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


@dataclass
class UnitResult:
    key: str
    ok: bool
    payload: dict


def _run_unit(args):
    fn, key, unit_args, path = args
    try:
        payload = fn(*unit_args)
        result = {"key": key, "ok": True, "payload": payload}
    except Exception as exc:  # partial-failure policy: record and continue
        result = {"key": key, "ok": False, "payload": {"error": f"{type(exc).__name__}: {exc}",
                                                      "traceback": traceback.format_exc()}}
    if path is not None and result["ok"]:
        io.write_json(path, result)
    return result


def run_units(fn: Callable, units: Sequence[tuple[str, tuple]], cache_dir: Path | None, jobs: int = 1
              ) -> list[UnitResult]:
    """Run ``fn(*args)`` for every ``(key, args)`` unit, reusing cached successes.

    Failures are not cached, so a rerun retries them.
    """
    todo, results = [], {}
    for key, args in units:
        path = None if cache_dir is None else Path(cache_dir) / f"{key}.json"
        if path is not None and path.exists():
            cached = io.read_json(path)
            results[key] = UnitResult(cached["key"], cached["ok"], cached["payload"])
            continue
        todo.append((fn, key, args, path))
    if todo:
        log.info("running %d of %d units (%d cached)", len(todo), len(units), len(units) - len(todo))
    for r in parallel_map(_run_unit, todo, jobs):
        if r["ok"] and cache_dir is not None:
            # read back through the cache so fresh and resumed runs aggregate identical floats
            r = io.read_json(Path(cache_dir) / f"{r['key']}.json")
        results[r["key"]] = UnitResult(r["key"], r["ok"], r["payload"])
    return [results[k] for k, _ in units]


# two-type simulations ---------------------------------------------------------------------

def horizon_tag(h: float) -> str:
    return f"T{h:g}"


def simulate_replication(truth: GroundTruth, spec: ModelSpec, horizon: float, master: int, h_index: int,
                         rep: int) -> tuple[EventStream, CovariatePath]:
    return simulate_marked_process(truth, spec, horizon, unit_seed(master, STREAM_EXAMPLE, h_index, rep))


def fit_design(design: EventDesign, estimator: str, qbe: QbeConfig | None = None):
    if len(design) == 0:
        raise InvalidInputError("no events to fit")
    if estimator == "qbe":
        return fit_qbe(design, qbe)
    return fit_qmle(design)


def example_unit(truth: GroundTruth, spec: ModelSpec, horizon: float, master: int, h_index: int, rep: int,
                 estimator: str = "qmle", qbe: dict | None = None) -> dict:
    """Simulate one path and fit it; returns the flat estimate and diagnostics."""
    stream, path = simulate_replication(truth, spec, horizon, master, h_index, rep)
    design = EventDesign.from_path(stream, path, spec)
    qbe_cfg = None
    if estimator == "qbe":
        qbe_cfg = QbeConfig(**{**(qbe or {}), "seed": unit_seed(master, STREAM_SAMPLER, h_index, rep)})
    fit = fit_design(design, estimator, qbe_cfg)
    est = fit.estimate.to_vector()
    return {
        "horizon": horizon,
        "replication": rep,
        "n_events": len(stream),
        "estimate": est.tolist(),
        "std_errors": fit.std_errors.tolist(),
        "converged": bool(fit.converged),
        "on_boundary": any(b.on_boundary for b in fit.blocks),
    }


def gamma_study(cfg: ExperimentConfig, jobs: int = 1, cache_dir: Path | None = None) -> dict:
    """Replicated fits per horizon; returns table rows, figure rows and failures."""
    truth, spec = cfg.truth.build()
    true_vec = truth.params().to_vector()
    labels = spec.parameter_labels()
    try:
        gamma = theoretical_gamma_example1(truth, spec)
    except InvalidInputError:
        gamma = None
    table, figure, failures, estimates = [], [], [], {}
    for hi, h in enumerate(cfg.horizons):
        units = [(f"{horizon_tag(h)}_r{r:05d}", (truth, spec, h, cfg.seed, hi, r, cfg.estimator, cfg.qbe))
                 for r in range(cfg.replications)]
        sub = None if cache_dir is None else Path(cache_dir) / horizon_tag(h)
        results = run_units(example_unit, units, sub, jobs)
        good = [r.payload for r in results if r.ok]
        failures += [{"horizon": h, "key": r.key, "error": r.payload["error"]} for r in results if not r.ok]
        est = np.array([g["estimate"] for g in good]) if good else np.zeros((0, len(true_vec)))
        estimates[h] = est
        mean = est.mean(axis=0) if len(est) else np.full(len(true_vec), np.nan)
        sd = est.std(axis=0, ddof=1) if len(est) > 1 else np.full(len(true_vec), np.nan)
        theo = theoretical_sd(gamma, h) if gamma is not None else np.full(len(true_vec), np.nan)
        for row_name, vals in (("true_value", true_vec), ("estimator_mean", mean), ("estimator_sd", sd),
                               ("theoretical_sd", theo)):
            row = {"T": h, "row": row_name, "replications": len(good)}
            row.update({lab: float(v) for lab, v in zip(labels, vals)})
            table.append(row)
        for lab, s, t in zip(labels, sd, theo):
            figure.append({"panel": lab, "T": h, "series": "empirical_sd", "value": float(s)})
            figure.append({"panel": lab, "T": h, "series": "theoretical_sd", "value": float(t)})
    return {"labels": labels, "table": table, "figure": figure, "failures": failures,
            "gamma_diag": None if gamma is None else gamma.tolist(), "estimates": estimates}


# synthetic trading days -------------------------------------------------------------------

def simulate_day(lob: LobConfig, master: int, day: int) -> tuple[EventStream, CovariatePath]:
    return simulate_synthetic_lob(lob, seed=unit_seed(master, STREAM_DAYS, day))


def day_files(root: Path, day: int) -> tuple[Path, Path]:
    return root / f"day{day:04d}_events.csv", root / f"day{day:04d}_covariates.csv"


def load_or_simulate_days(cfg: ExperimentConfig, sim_root: Path | None = None, jobs: int = 1
                          ) -> list[tuple[EventStream, CovariatePath]]:
    """Trading days from the simulate output when present, otherwise simulated afresh.

    Both routes give the same data: the files round-trip exactly.
    """
    lob = cfg.lob_config()
    days: list = [None] * cfg.days
    missing = []
    for d in range(cfg.days):
        if sim_root is not None:
            ev, cov = day_files(sim_root, d)
            if ev.exists() and cov.exists():
                days[d] = (io.read_events(ev), io.read_covariates(cov))
                continue
        missing.append(d)
    fresh = parallel_map(_simulate_day_job, [(lob, cfg.seed, d) for d in missing], jobs)
    for d, v in zip(missing, fresh):
        days[d] = v
    return days


def _simulate_day_job(args):
    return simulate_day(*args)


def selection_unit(day: int, stream: EventStream, path: CovariatePath, menu: CovariateMenu) -> dict:
    rows, failures, violations = select_day(day, stream, path, menu)
    return {"rows": rows, "failures": failures, "nesting_violations": violations}


def selection_study(days, menu: CovariateMenu, jobs: int = 1, cache_dir: Path | None = None) -> dict:
    units = [(f"day{d:04d}", (d, s, p, menu)) for d, (s, p) in enumerate(days)]
    results = run_units(selection_unit, units, cache_dir, jobs)
    rows, failures, violations = [], [], []
    for r in results:
        if r.ok:
            rows += r.payload["rows"]
            failures += r.payload["failures"]
            violations += r.payload["nesting_violations"]
        else:
            failures.append({"day": r.key, "role": None, "candidate": None, "error": r.payload["error"]})
    table = SelectionTable(rows, failures, violations)
    return {"rows": rows, "summary": table.summary(), "table": table}


PREDICTION_LOG_HEADER = ["t", "actual_type", "actual_mark", "pred_type", "pred_mark", "joint_type", "joint_mark"]


def prediction_unit(day: int, fit_day, test_day, plan: PredictionPlan, log_dir: Path | None = None) -> dict:
    """Fit on ``fit_day``, evaluate on ``test_day``; optionally write one per-event log per model."""
    runs = predict_day_pair((day, fit_day, test_day, plan))
    if log_dir is not None:
        for r in runs:
            io.write_csv(Path(log_dir) / f"day{day:04d}_{r.model_kind}.csv", PREDICTION_LOG_HEADER, r.log_rows())
    return {"runs": [{"day": day, "model": r.model_kind, "covariates": r.covariates, **r.accuracies()}
                     for r in runs]}


def prediction_study(days, plan: PredictionPlan, jobs: int = 1, cache_dir: Path | None = None,
                     log_dir: Path | None = None) -> dict:
    units = [(f"day{d + 1:04d}", (d + 1, days[d], days[d + 1], plan, log_dir)) for d in range(len(days) - 1)]
    results = run_units(prediction_unit, units, cache_dir, jobs)
    runs, failures = [], []
    for r in results:
        if r.ok:
            runs += r.payload["runs"]
        else:
            failures.append({"day": r.key, "error": r.payload["error"]})
    return {"runs": runs, "report": summarize_runs(runs), "failures": failures}


def summarize_runs(runs: list[dict]) -> dict:
    """Per-model averages of the per-day accuracies (same layout as ``accuracy_report``)."""
    table = {}
    for model in sorted({r["model"] for r in runs}):
        rs = [r for r in runs if r["model"] == model]
        table[model] = {
            "partial_side": float(np.mean([r["side"] for r in rs])),
            "partial_aggressiveness": float(np.mean([r["aggressiveness"] for r in rs])),
            "global": float(np.mean([r["global"] for r in rs])),
            "global_joint_argmax": float(np.mean([r["global_joint_argmax"] for r in rs])),
            "aggressiveness_actual_side": float(np.mean([r["aggressiveness_actual_side"] for r in rs])),
            "two_step_vs_joint_disagreement": float(np.mean([r["two_step_vs_joint_disagreement"] for r in rs])),
            "days": len(rs),
            "events": int(sum(r["n_events"] for r in rs)),
            "skipped": int(sum(r["skipped"] for r in rs)),
        }
    return table


__all__ = [
    "ROLES", "accuracy_report", "day_files", "example_unit", "gamma_study", "load_or_simulate_days",
    "parallel_map", "prediction_study", "run_units", "selection_study", "simulate_day",
    "simulate_replication", "summarize_runs", "unit_seed",
]
