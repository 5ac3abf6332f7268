"""QAIC covariate selection over synthetic trading days: per-role choice frequencies.

    python scripts/selection.py --days 50 --jobs 4
"""
import argparse
from pathlib import Path

from markedratio import io
from markedratio.config import DEFAULT_CANDIDATES, ExperimentConfig
from markedratio.experiments import load_or_simulate_days, selection_study
from markedratio.selection import ROLES, CovariateMenu


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=int, default=50)
    ap.add_argument("--horizon", type=float, default=3600.0, help="seconds per day")
    ap.add_argument("--candidates", nargs="+", default=DEFAULT_CANDIDATES)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/selection"))
    args = ap.parse_args()

    cfg = ExperimentConfig(experiment="lob", days=args.days, seed=args.seed, lob={"horizon": args.horizon})
    days = load_or_simulate_days(cfg, jobs=args.jobs)
    res = selection_study(days, CovariateMenu.uniform(args.candidates), args.jobs, args.out / "units")
    summary = res["summary"]
    io.write_json(args.out / "summary.json", summary)
    rows = [{"role": r, "candidate": c, "frequency": f} for r in ROLES for c, f in summary["frequencies"][r].items()]
    io.write_csv(args.out / "frequencies.csv", ["role", "candidate", "frequency"], rows)

    for role in ROLES:
        freq = summary["frequencies"][role]
        cells = "  ".join(f"{c}:{f:.2f}" for c, f in sorted(freq.items(), key=lambda kv: -kv[1]))
        print(f"{role:<8} modal {summary['modal'][role]!s:<6} {cells}")
    if summary["failures"]:
        print(f"{len(summary['failures'])} fits failed (excluded)")


if __name__ == "__main__":
    main()
