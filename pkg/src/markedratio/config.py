"""Experiment configuration (JSON), validated strictly: unknown keys are errors."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimation import QbeConfig
from .lob import LobConfig
from .model import InvalidInputError, ModelSpec
from .selection import ROLES, CovariateMenu
from .simulation import GroundTruth, HawkesParams, MarkovChainParams, example1

EXPERIMENTS = ("example1", "lob")
ESTIMATORS = ("qmle", "qbe")
DEFAULT_CANDIDATES = ["1", "12", "13", "123", "124", "1246", "14689"]


class ConfigError(InvalidInputError):
    pass


def _strict(cls, d, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return d


@dataclass
class TruthConfig:
    """Ground truth for simulated data (defaults: the two-type, two-mark example)."""

    spec: dict = field(default_factory=lambda: example1()[1].to_dict())
    raw_side: list = field(default_factory=lambda: [[-0.75], [0.75]])
    raw_marks: list = field(default_factory=lambda: [[[-0.5], [0.5]], [[-1.0], [1.0]]])
    baseline: dict = field(default_factory=lambda: {"mu": 0.5, "alpha": 1.0, "beta": 2.0})
    chain_rates: dict = field(default_factory=lambda: {"X1": 0.5, "Y1": 0.5})

    @classmethod
    def from_dict(cls, d, where="truth") -> "TruthConfig":
        out = cls(**_strict(cls, d, where))
        out.build()
        return out

    def build(self) -> tuple[GroundTruth, ModelSpec]:
        try:
            spec = ModelSpec.from_dict(self.spec)
            base = HawkesParams(**_strict(HawkesParams, self.baseline, "truth.baseline"))
            truth = GroundTruth(np.asarray(self.raw_side, dtype=float),
                                [np.asarray(r, dtype=float) for r in self.raw_marks], base,
                                {n: MarkovChainParams(float(r)) for n, r in self.chain_rates.items()})
            truth.check(spec)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"truth: {exc}") from None
        missing = [n for n in spec.covariate_names if n not in truth.covariates]
        if missing:
            raise ConfigError(f"truth: no chain rate for covariates {missing}")
        return truth, spec


@dataclass
class PredictionConfig:
    marked_sets: list = field(default_factory=lambda: [["12", "13", "1"]])
    unmarked_sets: list = field(default_factory=lambda: ["14689"])
    hawkes4d: bool = True
    bayes: bool = True
    use_selected: bool = False

    @classmethod
    def from_dict(cls, d, where="prediction") -> "PredictionConfig":
        out = cls(**_strict(cls, d, where))
        for s in out.marked_sets:
            if not (isinstance(s, (list, tuple)) and len(s) == 3):
                raise ConfigError(f"{where}.marked_sets: each entry is [side, bid_agg, ask_agg]")
        return out


@dataclass
class ExperimentConfig:
    experiment: str = "example1"
    seed: int = 0
    output_dir: str = "out"
    horizons: list = field(default_factory=lambda: [100.0])
    replications: int = 10
    estimator: str = "qmle"
    qbe: dict = field(default_factory=dict)
    truth: TruthConfig = field(default_factory=TruthConfig)
    lob: dict = field(default_factory=dict)
    days: int = 5
    candidates: dict = field(default_factory=lambda: {r: list(DEFAULT_CANDIDATES) for r in ROLES})
    prediction: PredictionConfig = field(default_factory=PredictionConfig)
    inputs: list = field(default_factory=list)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(self.replications, int) or self.replications < 0:
            raise ConfigError("replications must be a non-negative integer")
        if not isinstance(self.days, int) or self.days < 0:
            raise ConfigError("days must be a non-negative integer")
        try:
            self.horizons = [float(h) for h in self.horizons]
        except (TypeError, ValueError):
            raise ConfigError("horizons must be numbers") from None
        if any(not h > 0 for h in self.horizons):
            raise ConfigError("horizons must be positive")
        for item in self.inputs:
            if not (isinstance(item, dict) and set(item) <= {"events", "covariates", "horizon"} and "events" in item):
                raise ConfigError("inputs: each entry needs 'events' and may have 'covariates', 'horizon'")
        # build the nested objects once so that errors surface before any run
        self.qbe_config()
        self.lob_config()
        self.menu()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(_strict(cls, d, "config"))
        if "truth" in d:
            d["truth"] = TruthConfig.from_dict(d["truth"])
        if "prediction" in d:
            d["prediction"] = PredictionConfig.from_dict(d["prediction"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def qbe_config(self) -> QbeConfig:
        try:
            return QbeConfig(**_strict(QbeConfig, self.qbe, "qbe"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"qbe: {exc}") from None

    def lob_config(self) -> LobConfig:
        try:
            return LobConfig.from_dict(self.lob)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"lob: {exc}") from None

    def menu(self) -> CovariateMenu:
        try:
            return CovariateMenu({r: [str(c) for c in v] for r, v in self.candidates.items()})
        except (AttributeError, ValueError) as exc:
            raise ConfigError(f"candidates: {exc}") from None

    @property
    def out(self) -> Path:
        return Path(self.output_dir)
