"""Command-line entry point: run experiments, summarise results, export plot series.

    python3 -m ataria run --scenario stable --runs 20 --out res/
    python3 -m ataria summarize res/results.csv
    python3 -m ataria plot-data res/results.csv --out res/series
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import InfeasibleConfig
from .harness import SCENARIOS, ScenarioConfig, run_scenario, scenario_variants

SCHEMA = "# ataria-results v1"
COLUMNS = ("scenario", "label", "run", "episode", "utility", "optimal", "failed_fraction", "seed")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    label: str
    run: int
    episode: int
    utility: float
    optimal: float
    failed_fraction: float
    seed: int

    def __post_init__(self):
        for name in ("utility", "optimal", "failed_fraction"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def to_record(self) -> list[str]:
        return [self.scenario, self.label, str(self.run), str(self.episode), repr(self.utility),
                repr(self.optimal), repr(self.failed_fraction), str(self.seed)]

    @classmethod
    def from_record(cls, rec: dict) -> "ResultRow":
        return cls(rec["scenario"], rec["label"], int(rec["run"]), int(rec["episode"]), float(rec["utility"]),
                   float(rec["optimal"]), float(rec["failed_fraction"]), int(rec["seed"]))


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    min: float
    p25: float
    p50: float
    p75: float
    max: float
    n: int


def write_rows(path: Path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow(r.to_record())


def read_rows(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != SCHEMA:
            raise ValueError(f"unsupported results file header {first!r}")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        return [ResultRow.from_record(rec) for rec in reader]


def rows_from_results(cfg: ScenarioConfig, results) -> list[ResultRow]:
    out = []
    for rr in results:
        for e in rr.episodes:
            out.append(ResultRow(cfg.scenario, rr.label, rr.run, e.episode, e.utility, e.optimal,
                                 e.failed_fraction, rr.seed))
    return out


def describe(values) -> SummaryStats:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError("no values to summarise")
    p25, p50, p75 = np.percentile(a, [25, 50, 75], method="linear")
    return SummaryStats(float(a.mean()), float(a.std()), float(a.min()), float(p25), float(p50), float(p75),
                        float(a.max()), int(a.size))


def _final_rows(rows: list[ResultRow]) -> dict:
    last = {}
    for r in rows:
        key = (r.label, r.run)
        if key not in last or r.episode > last[key].episode:
            last[key] = r
    by_label: dict = {}
    for (label, _), r in sorted(last.items()):
        by_label.setdefault(label, []).append(r.utility)
    return by_label


def summarize(path) -> dict:
    """Final-episode utility statistics per label."""
    return {label: describe(vals) for label, vals in _final_rows(read_rows(path)).items()}


def emit_plot_data(path, out_dir) -> list[Path]:
    """Per-label series of episode mean with the 25th-75th percentile band."""
    rows = read_rows(path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grouped: dict = {}
    for r in rows:
        grouped.setdefault(r.label, {}).setdefault(r.episode, []).append(r.utility)
    written = []
    for label in sorted(grouped):
        p = out_dir / f"{label}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("episode", "mean", "lo", "hi"))
            for ep in sorted(grouped[label]):
                a = np.asarray(grouped[label][ep])
                lo, hi = np.percentile(a, [25, 75], method="linear")
                w.writerow((ep, repr(float(a.mean())), repr(float(lo)), repr(float(hi))))
        written.append(p)
    return written


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(name: str, raw: str):
    default = getattr(ScenarioConfig(), name)
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace(",", " ").split())
    except ValueError as e:
        raise ConfigError(f"{name}: {e}") from e
    return raw.strip()


def load_config(path, scenario: str) -> dict:
    """Overrides for ``scenario`` from an INI file.

    Keys in ``[DEFAULT]`` apply to every scenario; a ``[<scenario>]`` section
    overrides them.
    """
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(str(e)) from e
    unknown = [s for s in cp.sections() if s not in SCENARIOS]
    if unknown:
        raise ConfigError(f"unknown sections {unknown}")
    items = dict(cp[scenario]) if cp.has_section(scenario) else dict(cp.defaults())
    out = {}
    for k, v in items.items():
        if k not in _FIELD_TYPES or k == "scenario":
            raise ConfigError(f"unknown key {k!r}")
        out[k] = _coerce(k, v)
    return out


def write_default_config(path) -> None:
    cp = configparser.ConfigParser()
    for s in SCENARIOS:
        cfg = ScenarioConfig.for_scenario(s)
        cp[s] = {k: (" ".join(map(str, v)) if isinstance(v, tuple) else str(v))
                 for k, v in asdict(cfg).items() if k != "scenario"}
    with open(path, "w") as fh:
        cp.write(fh)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ataria", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write results.csv and summary.json")
    run.add_argument("--scenario", required=True, choices=SCENARIOS)
    run.add_argument("--runs", type=int)
    run.add_argument("--episodes", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--config", type=Path, help="INI file with per-scenario parameters")
    run.add_argument("--labels", help="comma-separated subset of algorithm labels")
    run.add_argument("--parents", type=int)
    run.add_argument("--children", type=int)
    run.add_argument("--budget", type=int, help="step budget per parent per episode")
    summ = sub.add_parser("summarize", help="final-episode statistics per label")
    summ.add_argument("csv", type=Path)
    plot = sub.add_parser("plot-data", help="write series/<label>.csv files")
    plot.add_argument("csv", type=Path)
    plot.add_argument("--out", type=Path)
    dump = sub.add_parser("default-config", help="write an INI file with every default")
    dump.add_argument("path", type=Path)
    return ap


def _config_from_args(args) -> tuple[ScenarioConfig, Optional[list]]:
    overrides = load_config(args.config, args.scenario) if args.config else {}
    for flag, key in (("runs", "runs"), ("episodes", "episodes"), ("seed", "seed"), ("parents", "n_parents"),
                      ("children", "n_children"), ("budget", "step_budget")):
        v = getattr(args, flag)
        if v is not None:
            overrides[key] = v
    try:
        cfg = ScenarioConfig.for_scenario(args.scenario, **overrides)
    except (InfeasibleConfig, TypeError) as e:
        raise ConfigError(str(e)) from e
    labels = None
    if args.labels:
        labels = [x.strip() for x in args.labels.split(",") if x.strip()]
        known = {v.label for v in scenario_variants(cfg)}
        bad = sorted(set(labels) - known)
        if bad:
            raise ConfigError(f"unknown labels {bad}; choose from {sorted(known)}")
    return cfg, labels


def cmd_run(args) -> int:
    cfg, labels = _config_from_args(args)
    results = run_scenario(cfg, labels)
    rows = rows_from_results(cfg, results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "results.csv", rows)
    stats = summarize(out / "results.csv")
    payload = {"scenario": cfg.scenario, "config": asdict(cfg),
               "final_episode": {k: asdict(v) for k, v in stats.items()}}
    with open(out / "summary.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    emit_plot_data(out / "results.csv", out / "series")
    _print_stats(stats)
    return 0


def _print_stats(stats: dict) -> None:
    print(f"{'label':16s} {'n':>4s} {'mean':>8s} {'std':>8s} {'min':>8s} {'p25':>8s} {'p50':>8s} {'p75':>8s} {'max':>8s}")
    for label, s in stats.items():
        print(f"{label:16s} {s.n:4d} {s.mean:8.3f} {s.std:8.3f} {s.min:8.3f} {s.p25:8.3f} {s.p50:8.3f} "
              f"{s.p75:8.3f} {s.max:8.3f}")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)  # argparse exits with status 2 on usage errors
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "summarize":
            _print_stats(summarize(args.csv))
            return 0
        if args.command == "plot-data":
            out = args.out or args.csv.parent / "series"
            for p in emit_plot_data(args.csv, out):
                print(p)
            return 0
        if args.command == "default-config":
            write_default_config(args.path)
            return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - surfaced as a runtime failure code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
