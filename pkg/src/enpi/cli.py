"""Command-line front end: ``enpi generate|run|sweep|eval``.

Configs are flat TOML files whose keys must be known field names. Datasets
are CSV files with header ``y,x1,...,xd``; every float is written with 17
significant digits so files round-trip exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import Dataset
from .datagen import SimConfig, generate
from .ensemble import CENTER_MODES, Aggregator
from .evaluation import ExperimentReport, EvalRecord, aggregate, score_interval
from .experiments import METHODS, MethodConfig, default_alpha_grid, run_trials, sweep, trial_dataset
from .regressors import FAMILIES, RegressorSpec, uniform_grid


class CliError(Exception):
    """Any user-facing failure; reported as one line on stderr."""


def fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x) if math.isinf(x) or math.isnan(x) else format(x, ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------- datasets


def write_dataset(path: Path, data: Dataset) -> None:
    d = data.n_features
    header = ["y"] + [f"x{j}" for j in range(1, d + 1)]
    rows = ([float(y)] + [float(v) for v in x] for y, x in zip(data.response, data.features))
    write_csv(path, header, rows)


def read_dataset_csv(path: Path):
    """Return ``(X, y)`` from a ``y,x1,...,xd`` CSV, naming the first bad line."""
    import numpy as np

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read dataset {path}: {exc.strerror}") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CliError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    d = len(header) - 1
    if d < 1 or header != ["y"] + [f"x{j}" for j in range(1, d + 1)]:
        raise CliError(f"{path}: line 1: header must be y,x1,...,xd")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise CliError(f"{path}: line {lineno}: expected {d + 1} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise CliError(f"{path}: line {lineno}: non-numeric value") from None
        if not all(math.isfinite(v) for v in vals):
            raise CliError(f"{path}: line {lineno}: non-finite value")
        rows.append(vals)
    if len(rows) < 2:
        raise CliError(f"{path}: need at least two data rows")
    arr = np.array(rows)
    return arr[:, 1:], arr[:, 0]


# ----------------------------------------------------------------- configs


def _load_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: invalid TOML: {exc}") from None
    for k, v in raw.items():
        if isinstance(v, dict):
            raise CliError(f"{path}: config must be flat, found table {k!r}")
    return raw


def _check_keys(raw: dict, allowed, path) -> None:
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise CliError(f"{path}: unknown config key(s): {', '.join(unknown)}")


def load_sim_config(path: Path, seed: Optional[int] = None) -> SimConfig:
    raw = _load_toml(path)
    _check_keys(raw, [f.name for f in fields(SimConfig)], path)
    if seed is not None:
        raw["seed"] = seed
    try:
        return SimConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


@dataclass
class RunConfig:
    method: list = field(default_factory=lambda: ["enpi"])
    regressor: str = "ridge"
    penalty_grid: list = field(default_factory=lambda: list(uniform_grid()))
    n_trees: int = 10
    max_depth: int = 2
    alpha: float = 0.1
    alphas: Optional[list] = None
    b_tilde: int = 100
    phi: str = "mean"
    center_mode: str = "loo_quantile"
    train_fraction: float = 0.3
    n_trials: int = 10
    seed: int = 0
    dataset: Optional[str] = None
    simulation: Optional[str] = None
    dataset_tag: Optional[str] = None

    def validate(self, where) -> None:
        if isinstance(self.method, str):
            self.method = [self.method]
        for m in self.method:
            if m not in METHODS:
                raise CliError(f"{where}: unknown method {m!r} (choose from {', '.join(METHODS)})")
        if self.regressor not in FAMILIES:
            raise CliError(f"{where}: unknown regressor {self.regressor!r}")
        if not 0.0 < self.alpha < 1.0:
            raise CliError(f"{where}: alpha must lie in (0, 1)")
        if self.alphas is not None and (
            not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas)
        ):
            raise CliError(f"{where}: alphas must be a non-empty list in (0, 1)")
        if not 0.0 < self.train_fraction < 1.0:
            raise CliError(f"{where}: train_fraction must lie in (0, 1)")
        if self.n_trials < 1:
            raise CliError(f"{where}: n_trials must be >= 1")
        if (self.dataset is None) == (self.simulation is None):
            raise CliError(f"{where}: set exactly one of 'dataset' or 'simulation'")
        if self.center_mode not in CENTER_MODES:
            raise CliError(f"{where}: unknown center_mode {self.center_mode!r}")
        try:
            Aggregator.parse(self.phi)
        except ValueError as exc:
            raise CliError(f"{where}: {exc}") from None

    def regressor_spec(self) -> RegressorSpec:
        try:
            return RegressorSpec(
                family=self.regressor,
                penalty_grid=tuple(self.penalty_grid),
                n_trees=self.n_trees,
                max_depth=self.max_depth,
            )
        except ValueError as exc:
            raise CliError(str(exc)) from None

    def method_config(self) -> MethodConfig:
        return MethodConfig(self.b_tilde, self.phi, self.center_mode)


def load_run_config(path: Path, seed=None, trials=None) -> tuple[RunConfig, object, str]:
    """Parse a run config and resolve its data source.

    Relative ``dataset``/``simulation`` paths are resolved against the config
    file's directory. Returns ``(config, source, tag)`` where ``source`` is a
    :class:`Dataset` or :class:`SimConfig`.
    """
    path = Path(path)
    raw = _load_toml(path)
    _check_keys(raw, [f.name for f in fields(RunConfig)], path)
    try:
        cfg = RunConfig(**raw)
    except TypeError as exc:
        raise CliError(f"{path}: {exc}") from None
    if seed is not None:
        cfg.seed = seed
    if trials is not None:
        cfg.n_trials = trials
    cfg.validate(path)
    base = path.parent
    if cfg.dataset is not None:
        ds_path = base / cfg.dataset
        X, y = read_dataset_csv(ds_path)
        try:
            source = Dataset.from_fraction(X, y, cfg.train_fraction)
        except ValueError as exc:
            raise CliError(f"{ds_path}: {exc}") from None
        tag = cfg.dataset_tag or ds_path.stem
    else:
        source = load_sim_config(base / cfg.simulation)
        tag = cfg.dataset_tag or source.kind
    return cfg, source, tag


# ---------------------------------------------------------------- commands

INTERVAL_HEADER = (
    "method", "trial", "t", "alpha", "y_true", "center", "lower", "upper",
    "covered", "width", "winkler",
)


def cmd_generate(args) -> int:
    cfg = load_sim_config(args.config, args.seed)
    try:
        data = generate(cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_dataset(args.out, data)
    print(f"wrote {data.response.size} rows x {data.n_features} features to {args.out}")
    return 0


def _train_len(source) -> int:
    return trial_dataset(source, 0, 0).train_len if isinstance(source, SimConfig) else source.train_len


def cmd_run(args) -> int:
    cfg, source, tag = load_run_config(args.config, args.seed, args.trials)
    try:
        results = run_trials(
            source, cfg.method, cfg.regressor_spec(), cfg.alpha, cfg.n_trials, cfg.seed,
            cfg.method_config(),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    offset = _train_len(source)
    rows = []
    for m in cfg.method:
        for k, recs in enumerate(results[m]):
            for r in recs:
                rows.append([m, k, offset + r.t, cfg.alpha, r.y_true, r.center, r.lower,
                             r.upper, r.covered, r.width, r.winkler])
    write_csv(args.out, INTERVAL_HEADER, rows)
    for m in cfg.method:
        rep = aggregate(results[m], m, cfg.alpha, cfg.regressor, tag)
        print(
            f"method={m} dataset={tag} alpha={cfg.alpha:g} trials={rep.n_trials} "
            f"coverage={rep.coverage_mean:.4f} width={rep.width_mean:.6g} "
            f"winkler={rep.winkler_mean:.6g}"
        )
    return 0


def _flag_monotonicity(reports: Sequence[ExperimentReport]) -> None:
    by_method: dict[str, list[ExperimentReport]] = {}
    for r in reports:
        by_method.setdefault(r.method, []).append(r)
    for m, reps in by_method.items():
        reps = sorted(reps, key=lambda r: r.alpha)
        for a, b in zip(reps, reps[1:]):
            if b.coverage_mean > a.coverage_mean:
                print(
                    f"warning: {m} coverage rises from {a.coverage_mean:.4f} to "
                    f"{b.coverage_mean:.4f} between alpha={a.alpha:g} and alpha={b.alpha:g}",
                    file=sys.stderr,
                )


def cmd_sweep(args) -> int:
    cfg, source, tag = load_run_config(args.config, args.seed, args.trials)
    alphas = cfg.alphas if cfg.alphas is not None else list(default_alpha_grid())
    try:
        reports = sweep(
            source, cfg.method, cfg.regressor_spec(), alphas, cfg.n_trials, cfg.seed,
            cfg.method_config(), tag,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    write_csv(args.out, ExperimentReport.FIELDS, (r.row() for r in reports))
    _flag_monotonicity(reports)
    print(f"wrote {len(reports)} rows to {args.out}")
    return 0


def read_interval_csv(path: Path, alpha: Optional[float]):
    """Group interval rows by (method, alpha) then trial.

    Required columns: ``y_true, lower, upper``. Optional: ``method`` (defaults
    to the file stem), ``trial``, ``alpha`` (else ``--alpha``), ``winkler``
    (recomputed when absent).
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None
    reader = csv.DictReader(io.StringIO(text))
    cols = set(reader.fieldnames or ())
    missing = {"y_true", "lower", "upper"} - cols
    if missing:
        raise CliError(f"{path}: line 1: missing column(s) {', '.join(sorted(missing))}")
    groups: dict[tuple[str, float], dict[str, list[EvalRecord]]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            a = float(row["alpha"]) if "alpha" in cols and row["alpha"] else alpha
            if a is None:
                raise CliError(f"{path}: line {lineno}: no alpha column and no --alpha given")
            y, lo, hi = float(row["y_true"]), float(row["lower"]), float(row["upper"])
            rec = score_interval(lineno - 2, lo, hi, y, a)
            if "winkler" in cols and row["winkler"]:
                rec = EvalRecord(rec.t, y, rec.center, lo, hi, rec.covered, rec.width,
                                 float(row["winkler"]))
        except (TypeError, ValueError):
            raise CliError(f"{path}: line {lineno}: malformed row") from None
        method = row.get("method") or Path(path).stem
        trial = row.get("trial") or "0"
        groups.setdefault((method, a), {}).setdefault(trial, []).append(rec)
    return groups


def cmd_eval(args) -> int:
    reports = []
    for path in args.inputs:
        groups = read_interval_csv(path, args.alpha)
        tag = args.dataset_tag or Path(path).stem
        for (method, a), trials in groups.items():
            reports.append(aggregate(list(trials.values()), method, a, "", tag))
    if not reports:
        raise CliError("no interval rows found")
    write_csv(args.out, ExperimentReport.FIELDS, (r.row() for r in reports))
    for r in reports:
        print(
            f"method={r.method} dataset={r.dataset} alpha={r.alpha:g} "
            f"coverage={r.coverage_mean:.4f} width={r.width_mean:.6g} winkler={r.winkler_mean:.6g}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enpi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    p = sub.add_parser("generate", help="simulate a dataset to CSV")
    common(p)
    p.set_defaults(func=cmd_generate)

    for name, func, helptext in (
        ("run", cmd_run, "per-step intervals for one alpha"),
        ("sweep", cmd_sweep, "coverage/width/Winkler table over an alpha grid"),
    ):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--trials", type=int, default=None, help="overrides n_trials")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="summarize interval CSVs (ours or external)")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--dataset-tag", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"enpi: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"enpi: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
