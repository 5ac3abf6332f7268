"""Next-day prediction of market-order side and aggressiveness on synthetic trading days,
comparing the marked ratio model with the unmarked ratio model, a 4-D Hawkes benchmark and
the generator's Bayes rule.

    python scripts/prediction.py --days 21 --jobs 4
"""
import argparse
from pathlib import Path

from markedratio import io
from markedratio.config import ExperimentConfig
from markedratio.experiments import load_or_simulate_days, prediction_study
from markedratio.prediction import PredictionPlan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=21)
    ap.add_argument("--horizon", type=float, default=3600.0, help="seconds per day")
    ap.add_argument("--marked", nargs=3, action="append", metavar=("SIDE", "BID", "ASK"),
                    help="marked ratio covariate sets (repeatable)")
    ap.add_argument("--unmarked", nargs="+", default=["14689"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/prediction"))
    args = ap.parse_args()

    cfg = ExperimentConfig(experiment="lob", days=args.days, seed=args.seed, lob={"horizon": args.horizon})
    days = load_or_simulate_days(cfg, jobs=args.jobs)
    plan = PredictionPlan(marked_sets=[tuple(m) for m in (args.marked or [["12", "13", "1"]])],
                          unmarked_sets=args.unmarked, hawkes4d=True, bayes=cfg.lob_config())
    res = prediction_study(days, plan, args.jobs, args.out / "units")
    io.write_json(args.out / "report.json", res["report"])

    cols = ("partial_side", "partial_aggressiveness", "global")
    print(f"{'model':<28}" + "".join(f"{c:>24}" for c in cols))
    for model, row in res["report"].items():
        print(f"{model:<28}" + "".join(f"{row[c]:>24.4f}" for c in cols))
    if res["failures"]:
        print(f"{len(res['failures'])} day pairs failed")


if __name__ == "__main__":
    main()
