"""QAIC model selection over covariate subsets, day by day."""
from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimation import BlockFit, FitReport, newton_block
from .lob import ALL_COVARIATES, HAWKES_SOURCES, event_covariates, fit_hawkes_covariates
from .model import CovariatePath, EventStream, InvalidInputError

ROLES = ("side", "bid_agg", "ask_agg")


def parse_candidate(name: str) -> tuple[str, ...]:
    """``"146"`` -> ``("Z0", "Z1", "Z4", "Z6")``; the constant ``Z0`` is always included."""
    if not name or not name.isdigit():
        raise InvalidInputError(f"candidate names are strings of covariate indices, got {name!r}")
    idx = sorted({int(c) for c in name} - {0})
    return ("Z0",) + tuple(f"Z{i}" for i in idx)


@dataclass
class CovariateMenu:
    candidates: dict[str, list[str]]
    available: tuple[str, ...] = ALL_COVARIATES

    def __post_init__(self):
        unknown_roles = set(self.candidates) - set(ROLES)
        if unknown_roles:
            raise InvalidInputError(f"unknown roles {sorted(unknown_roles)}")
        for role, names in self.candidates.items():
            for n in names:
                missing = [c for c in parse_candidate(n) if c not in self.available]
                if missing:
                    raise InvalidInputError(f"candidate {n!r} uses unavailable covariates {missing}")

    @classmethod
    def uniform(cls, names: Sequence[str]) -> "CovariateMenu":
        return cls({r: list(names) for r in ROLES})

    def hawkes_needed(self) -> list[str]:
        used = {c for names in self.candidates.values() for n in names for c in parse_candidate(n)}
        return [c for c in HAWKES_SOURCES if c in used]


def qaic(loglik: float, n_covariates: int) -> float:
    return -2.0 * loglik + 2.0 * n_covariates


def qaic_side(fit: FitReport | BlockFit, n_covariates: int) -> float:
    block = fit.side if isinstance(fit, FitReport) else fit
    return qaic(block.loglik, n_covariates)


def qaic_mark(fit: FitReport | BlockFit, n_covariates: int, type_i: int | None = None) -> float:
    block = fit.marks[type_i] if isinstance(fit, FitReport) else fit
    return qaic(block.loglik, n_covariates)


def role_data(stream: EventStream, columns: dict[str, np.ndarray], role: str, covariates: Sequence[str]):
    """Labels and design matrix for one of the three ratio models."""
    z = np.column_stack([columns[c] for c in covariates]) if covariates else np.zeros((len(stream), 0))
    if role == "side":
        return stream.types, z, 2
    type_i = 0 if role == "bid_agg" else 1
    keep = stream.types == type_i
    return stream.marks[keep], z[keep], 2


def fit_role(stream: EventStream, columns: dict[str, np.ndarray], role: str, covariates: Sequence[str]) -> BlockFit:
    labels, z, m = role_data(stream, columns, role, covariates)
    return newton_block(labels, z, m, name=role)


def selection_key(name: str, score: float) -> tuple:
    # lower QAIC, then fewer covariates, then name
    return (score, len(parse_candidate(name)), name)


@dataclass
class SelectionTable:
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    nesting_violations: list[dict] = field(default_factory=list)

    def chosen(self, role: str) -> list[str]:
        return [r["candidate"] for r in self.rows if r["role"] == role and r["chosen"]]

    def frequencies(self, role: str) -> dict[str, float]:
        picks = self.chosen(role)
        if not picks:
            return {}
        counts = Counter(picks)
        return {k: counts[k] / len(picks) for k in sorted(counts)}

    def modal(self, role: str) -> str | None:
        freq = self.frequencies(role)
        if not freq:
            return None
        return min(freq, key=lambda k: (-freq[k], len(parse_candidate(k)), k))

    def summary(self) -> dict:
        return {
            "frequencies": {r: self.frequencies(r) for r in ROLES},
            "modal": {r: self.modal(r) for r in ROLES},
            "failures": self.failures,
            "nesting_violations": self.nesting_violations,
        }


def select_day(day_index: int, stream: EventStream, path: CovariatePath, menu: CovariateMenu,
               hawkes_fits=None) -> tuple[list[dict], list[dict], list[dict]]:
    """Fit every candidate for every role on one day; returns (rows, failures, nesting violations)."""
    needed = menu.hawkes_needed()
    if hawkes_fits is None and needed:
        hawkes_fits = fit_hawkes_covariates(stream, needed)
    columns = event_covariates(stream, path, hawkes_fits)
    rows, failures, violations = [], [], []
    for role, names in menu.candidates.items():
        scored = []
        logliks = {}
        for name in names:
            cov = parse_candidate(name)
            try:
                fit = fit_role(stream, columns, role, cov)
            except np.linalg.LinAlgError as exc:
                failures.append({"day": day_index, "role": role, "candidate": name, "error": str(exc)})
                continue
            if not (fit.converged and fit.identified):
                warnings.warn(f"day {day_index} {role} {name}: fit did not converge, excluded", RuntimeWarning)
                failures.append({"day": day_index, "role": role, "candidate": name, "error": "not converged"})
                continue
            score = qaic(fit.loglik, len(cov))
            scored.append((name, cov, fit.loglik, score))
            logliks[frozenset(cov)] = (name, fit.loglik)
        for small, (n_small, ll_small) in logliks.items():
            for big, (n_big, ll_big) in logliks.items():
                if small < big and ll_big < ll_small - 1e-7 * (1 + abs(ll_small)):
                    violations.append({"day": day_index, "role": role, "smaller": n_small, "larger": n_big,
                                       "loglik_smaller": ll_small, "loglik_larger": ll_big})
        if not scored:
            failures.append({"day": day_index, "role": role, "candidate": None, "error": "no valid candidate"})
            continue
        best = min(scored, key=lambda s: selection_key(s[0], s[3]))[0]
        for name, cov, ll, score in scored:
            rows.append({"day": day_index, "role": role, "candidate": name, "n_covariates": len(cov),
                         "loglik": ll, "qaic": score, "chosen": name == best})
    return rows, failures, violations


def run_selection_study(days: Sequence[tuple[EventStream, CovariatePath]], menu: CovariateMenu,
                        mapper: Callable = map) -> SelectionTable:
    """Select the QAIC-minimizing candidate per day and role; Hawkes covariates are refit per day."""
    results = mapper(_select_job, [(d, s, p, menu) for d, (s, p) in enumerate(days)])
    table = SelectionTable()
    for rows, failures, violations in results:
        table.rows.extend(rows)
        table.failures.extend(failures)
        table.nesting_violations.extend(violations)
    return table


def _select_job(args):
    day, stream, path, menu = args
    return select_day(day, stream, path, menu)
