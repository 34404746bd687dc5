"""Coverage/width/Winkler table for a user-supplied dataset CSV (``y,x1,...,xd``).

Runs every method with each regressor at one alpha; the first 30% of rows
train. Intervals from other tools (e.g. an ARIMA baseline) can be appended to
the table with ``enpi eval``, which emits the same columns.

    python scripts/real_data_table.py data/solar.csv --out results/solar.csv
"""

import argparse
from pathlib import Path

from enpi.cli import read_dataset_csv, write_csv
from enpi.core import Dataset
from enpi.evaluation import ExperimentReport, aggregate
from enpi.experiments import METHODS, run_trials
from enpi.regressors import FAMILIES, RegressorSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", type=Path)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--train-fraction", type=float, default=0.3)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--regressors", nargs="+", choices=FAMILIES, default=list(FAMILIES))
    args = ap.parse_args()

    X, y = read_dataset_csv(args.dataset)
    data = Dataset.from_fraction(X, y, args.train_fraction)
    tag = args.dataset.stem
    reports = []
    for family in args.regressors:
        results = run_trials(data, METHODS, RegressorSpec(family), args.alpha, args.trials, args.seed)
        for m in METHODS:
            r = aggregate(results[m], m, args.alpha, family, tag)
            reports.append(r)
            print(f"{family:6s} {m:5s} coverage={r.coverage_mean:.3f} width={r.width_mean:.4g} "
                  f"winkler={r.winkler_mean:.4g}")
    write_csv(args.out, ExperimentReport.FIELDS, (r.row() for r in reports))


if __name__ == "__main__":
    main()
