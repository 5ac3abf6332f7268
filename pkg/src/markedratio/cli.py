"""Command line: ``markedratio {simulate,fit,gamma,select,predict,report} --config cfg.json``.

Exit codes: 0 success, 1 configuration or input error, 2 partial failure (some units
failed, the rest were written), 3 fatal error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .config import ConfigError, ExperimentConfig
from .estimation import QbeConfig
from .experiments import (
    STREAM_SAMPLER,
    day_files,
    fit_design,
    gamma_study,
    horizon_tag,
    load_or_simulate_days,
    prediction_study,
    run_units,
    selection_study,
    simulate_day,
    simulate_replication,
    unit_seed,
)
from .likelihood import EventDesign
from .model import InvalidInputError, ModelSpec
from .prediction import PredictionPlan
from .selection import ROLES

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2, 3
log = logging.getLogger("markedratio")


def _status(failures: list, total: int) -> int:
    if not failures:
        return EXIT_OK
    for f in failures:
        log.error("failed: %s", f)
    return EXIT_PARTIAL if len(failures) < total else EXIT_FATAL


def _write_manifest(root: Path, command: str, cfg: ExperimentConfig, entries: list, failures: list):
    io.write_json(root / "manifest.json", {
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "completed": entries,
        "failures": failures,
    })


# simulate ----------------------------------------------------------------------------------

def _simulate_example_unit(truth, spec, h, master, hi, r, ev_path, cov_path):
    stream, path = simulate_replication(truth, spec, h, master, hi, r)
    io.write_events(ev_path, stream)
    io.write_covariates(cov_path, path)
    return {"events": ev_path.name, "covariates": cov_path.name, "n_events": len(stream), "horizon": h}


def _simulate_day_unit(lob, master, d, ev_path, cov_path):
    stream, path = simulate_day(lob, master, d)
    io.write_events(ev_path, stream)
    io.write_covariates(cov_path, path)
    return {"events": ev_path.name, "covariates": cov_path.name, "n_events": len(stream), "horizon": stream.horizon}


def cmd_simulate(cfg: ExperimentConfig, jobs: int) -> int:
    root = cfg.out / "simulate"
    units = []
    if cfg.experiment == "example1":
        truth, spec = cfg.truth.build()
        for hi, h in enumerate(cfg.horizons):
            sub = root / horizon_tag(h)
            for r in range(cfg.replications):
                ev, cov = sub / f"rep{r:05d}_events.csv", sub / f"rep{r:05d}_covariates.csv"
                units.append((f"{horizon_tag(h)}_rep{r:05d}", (truth, spec, h, cfg.seed, hi, r, ev, cov)))
        fn = _simulate_example_unit
    else:
        lob = cfg.lob_config()
        for d in range(cfg.days):
            ev, cov = day_files(root / "days", d)
            units.append((f"day{d:04d}", (lob, cfg.seed, d, ev, cov)))
        fn = _simulate_day_unit
    results = run_units(fn, units, root / "units", jobs)
    entries = [{"key": r.key, **r.payload} for r in results if r.ok]
    failures = [{"key": r.key, "error": r.payload["error"]} for r in results if not r.ok]
    _write_manifest(root, "simulate", cfg, entries, failures)
    log.info("simulate: %d files written to %s", len(entries), root)
    return _status(failures, len(units))


# fit ---------------------------------------------------------------------------------------

def _fit_inputs(cfg: ExperimentConfig) -> list[dict]:
    if cfg.inputs:
        return cfg.inputs
    manifest = cfg.out / "simulate" / "manifest.json"
    if not manifest.exists():
        raise ConfigError(f"no inputs configured and no simulate output at {manifest}")
    m = io.read_json(manifest)
    out = []
    for e in m["completed"]:
        key = e["key"]
        sub = cfg.out / "simulate" / ("days" if key.startswith("day") else key.split("_")[0])
        out.append({"events": str(sub / e["events"]), "covariates": str(sub / e["covariates"]),
                    "horizon": e["horizon"]})
    return out


def _fit_unit(item: dict, spec_dict: dict, estimator: str, qbe: dict, master: int, index: int) -> dict:
    spec = ModelSpec.from_dict(spec_dict)
    events = Path(item["events"])
    stream = io.read_events(events, item.get("horizon"))
    if len(stream) == 0:
        raise InvalidInputError(f"{events}: no events to fit")
    if "covariates" not in item:
        raise InvalidInputError(f"{events}: no covariate file configured")
    path = io.read_covariates(item["covariates"], stream.horizon)
    design = EventDesign.from_path(stream, path, spec)
    qbe_cfg = QbeConfig(**{**qbe, "seed": unit_seed(master, STREAM_SAMPLER, 1000, index)}) if estimator == "qbe" else None
    fit = fit_design(design, estimator, qbe_cfg)
    return {"events": str(events), "fit": fit.to_dict()}


def cmd_fit(cfg: ExperimentConfig, jobs: int) -> int:
    items = _fit_inputs(cfg)
    if cfg.experiment == "example1":
        spec = cfg.truth.build()[1]
    else:
        spec = cfg.lob_config().spec
    root = cfg.out / "fit"
    units = [(_input_key(it["events"]), (it, spec.to_dict(), cfg.estimator, cfg.qbe, cfg.seed, i))
             for i, it in enumerate(items)]
    results = run_units(_fit_unit, units, root / "units", jobs)
    rows, failures = [], []
    for r in results:
        if not r.ok:
            failures.append({"key": r.key, "error": r.payload["error"]})
            continue
        fit = r.payload["fit"]
        est = [v for b in fit["blocks"] for v in _flatten(b["estimate"])]
        for lab, v, se in zip(fit["labels"], est, fit["std_errors"]):
            rows.append({"input": r.key, "parameter": lab, "estimate": v, "std_error": se,
                         "converged": fit["converged"], "method": fit["method"]})
    io.write_csv(root / "fits.csv", ["input", "parameter", "estimate", "std_error", "converged", "method"], rows)
    _write_manifest(root, "fit", cfg, [r.key for r in results if r.ok], failures)
    return _status(failures, len(units))


def _input_key(events) -> str:
    p = Path(events)
    stem = p.name[:-len("_events.csv")] if p.name.endswith("_events.csv") else p.stem
    return f"{p.parent.name}_{stem}" if p.parent.name else stem


def _flatten(x):
    if isinstance(x, list):
        return [v for item in x for v in _flatten(item)]
    return [x]


# gamma -------------------------------------------------------------------------------------

def cmd_gamma(cfg: ExperimentConfig, jobs: int) -> int:
    if cfg.experiment != "example1":
        raise ConfigError("gamma needs experiment 'example1'")
    root = cfg.out / "gamma"
    res = gamma_study(cfg, jobs, root / "units")
    labels = res["labels"]
    io.write_csv(root / "table1.csv", ["T", "row", "replications", *labels], res["table"])
    io.write_csv(root / "figure1.csv", ["panel", "T", "series", "value"], res["figure"])
    io.write_json(root / "gamma.json", {"labels": labels, "gamma_diag": res["gamma_diag"],
                                        "failures": res["failures"]})
    _write_manifest(root, "gamma", cfg, [horizon_tag(h) for h in cfg.horizons], res["failures"])
    return _status(res["failures"], len(cfg.horizons) * max(cfg.replications, 1))


# select / predict --------------------------------------------------------------------------

def _days(cfg: ExperimentConfig, jobs: int):
    if cfg.experiment != "lob":
        raise ConfigError("select and predict need experiment 'lob'")
    return load_or_simulate_days(cfg, cfg.out / "simulate" / "days", jobs)


SELECTION_HEADER = ["day", "role", "candidate", "n_covariates", "loglik", "qaic", "chosen"]


def cmd_select(cfg: ExperimentConfig, jobs: int) -> int:
    days = _days(cfg, jobs)
    root = cfg.out / "select"
    res = selection_study(days, cfg.menu(), jobs, root / "units")
    io.write_csv(root / "selection.csv", SELECTION_HEADER, res["rows"])
    freq_rows = [{"role": role, "candidate": c, "frequency": f}
                 for role in ROLES for c, f in res["summary"]["frequencies"][role].items()]
    io.write_csv(root / "frequencies.csv", ["role", "candidate", "frequency"], freq_rows)
    io.write_json(root / "summary.json", res["summary"])
    _write_manifest(root, "select", cfg, [f"day{d:04d}" for d in range(len(days))], res["summary"]["failures"])
    hard = [f for f in res["summary"]["failures"] if f.get("candidate") is None]
    return _status(hard, len(days) * len(ROLES))


PREDICTION_HEADER = ["day", "model", "side", "aggressiveness", "global", "global_joint_argmax",
                     "aggressiveness_actual_side", "two_step_vs_joint_disagreement", "n_events", "skipped"]
REPORT_HEADER = ["model", "partial_side", "partial_aggressiveness", "global", "global_joint_argmax",
                 "aggressiveness_actual_side", "two_step_vs_joint_disagreement", "days", "events", "skipped"]


def _plan(cfg: ExperimentConfig) -> PredictionPlan:
    p = cfg.prediction
    marked = [tuple(s) for s in p.marked_sets]
    if p.use_selected:
        summary = cfg.out / "select" / "summary.json"
        if not summary.exists():
            raise ConfigError(f"use_selected is set but {summary} does not exist; run select first")
        modal = io.read_json(summary)["modal"]
        if any(modal.get(r) is None for r in ROLES):
            raise ConfigError("selection summary has no modal choice for every role")
        marked = [tuple(modal[r] for r in ROLES)]
    return PredictionPlan(marked_sets=marked, unmarked_sets=list(p.unmarked_sets), hawkes4d=p.hawkes4d,
                          bayes=cfg.lob_config() if p.bayes else None)


def cmd_predict(cfg: ExperimentConfig, jobs: int) -> int:
    plan = _plan(cfg)
    days = _days(cfg, jobs)
    root = cfg.out / "predict"
    res = prediction_study(days, plan, jobs, root / "units", root / "logs")
    io.write_csv(root / "runs.csv", PREDICTION_HEADER, res["runs"])
    report_rows = [{"model": m, **v} for m, v in res["report"].items()]
    io.write_csv(root / "accuracy.csv", REPORT_HEADER, report_rows)
    io.write_json(root / "report.json", {"models": res["report"], "failures": res["failures"],
                                         "marked_sets": [list(s) for s in plan.marked_sets]})
    _write_manifest(root, "predict", cfg, [f"day{d:04d}" for d in range(1, len(days))], res["failures"])
    return _status(res["failures"], max(len(days) - 1, 1))


# report ------------------------------------------------------------------------------------

def cmd_report(cfg: ExperimentConfig, jobs: int) -> int:
    out = cfg.out
    report = {}
    for name, rel in (("gamma", "gamma/table1.csv"), ("prediction", "predict/accuracy.csv"),
                      ("selection", "select/frequencies.csv")):
        p = out / rel
        if p.exists():
            report[name] = io.read_csv(p)
    if not report:
        raise ConfigError(f"nothing to report under {out}")
    io.write_json(out / "report.json", report)
    for name, rows in report.items():
        print(f"== {name}")
        if rows:
            keys = list(rows[0])
            print("  ".join(keys))
            for r in rows:
                print("  ".join(_short(r[k]) for k in keys))
    return EXIT_OK


def _short(v: str) -> str:
    try:
        f = float(v)
    except ValueError:
        return v
    return v if f.is_integer() else f"{f:.4f}"


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "gamma": cmd_gamma,
    "select": cmd_select,
    "predict": cmd_predict,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markedratio", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="experiment configuration (JSON)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = {}
        if args.config is not None:
            cfg = ExperimentConfig.load(args.config)
            raw = cfg.to_dict()
        else:
            raw = ExperimentConfig().to_dict()
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["output_dir"] = str(args.out)
        cfg = ExperimentConfig.from_dict(raw)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg.out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot use output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = COMMANDS[args.command](cfg, args.jobs)
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except Exception as exc:  # noqa: BLE001
        log.exception("fatal")
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL
    if code == EXIT_PARTIAL:
        print("some units failed; see manifest.json", file=sys.stderr)
    elif code == EXIT_FATAL:
        print("all units failed; see manifest.json", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
