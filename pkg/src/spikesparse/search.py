"""Grid search for the largest sparsity weight that keeps validation accuracy.

A grid point qualifies when its best validation accuracy is at least the
baseline's (``strict``) or at most one percentage point below it
(``one_percent``).  Comparisons use integer correct-counts, so they are exact.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .datasets import LabeledImageSet
from .sparsity import ScheduleKind
from .trainer import TrainingConfig, train

log = logging.getLogger(__name__)

TOLERANCES = {"strict": 0, "one_percent": 1}
GRID_HEADER = ("schedule", "sigma0", "best_epoch", "val_accuracy", "val_avg_spikes",
               "val_correct", "val_total", "strict_ok", "one_percent_ok")
SUMMARY_HEADER = ("schedule", "sigma0", "best_epoch", "accuracy", "avg_spikes",
                  "reduction_pct", "qualified")


def normalize_tolerance(name: str) -> str:
    key = name.replace("-", "_")
    if key not in TOLERANCES:
        raise ValueError(f"tolerance must be 'strict' or 'one-percent', got {name!r}")
    return key


@dataclass(frozen=True)
class RunSummary:
    schedule: str
    sigma0: float
    best_epoch: int
    val_accuracy: float
    val_avg_spikes: float
    val_correct: int
    val_total: int


@dataclass(frozen=True)
class Selection:
    schedule: str
    sigma0: float
    best_epoch: int
    accuracy: float
    avg_spikes: float
    reduction_pct: float
    qualified: bool


@dataclass
class SearchResult:
    tolerance: str
    baseline: RunSummary
    runs: list[RunSummary]
    selections: dict[str, Selection] = field(default_factory=dict)


def qualifies(run: RunSummary, baseline: RunSummary, tolerance: str) -> bool:
    slack = TOLERANCES[normalize_tolerance(tolerance)]
    # acc >= base_acc - slack (percentage points), in integer form
    return 100 * (run.val_correct - baseline.val_correct) >= -slack * run.val_total


def reduction_pct(spikes: float, base_spikes: float) -> float:
    return 100.0 * (1.0 - spikes / base_spikes) if base_spikes else 0.0


def run_file_name(schedule: str, sigma0: float) -> str:
    return f"{schedule}_sigma{sigma0!r}.csv"


def run_point(config: TrainingConfig, train_set: LabeledImageSet, val_set: LabeledImageSet,
              metrics_path=None) -> RunSummary:
    best, history = train(config, train_set, val_set, metrics_path=metrics_path)
    rec = history[best.epoch - 1]
    return RunSummary(config.schedule, config.sigma0, best.epoch, rec.val_accuracy,
                      rec.val_avg_spikes, rec.val_correct, rec.val_total)


def _run_many(configs: Sequence[TrainingConfig], train_set, val_set, out_dir, workers) -> list[RunSummary]:
    paths = [None if out_dir is None else Path(out_dir) / "runs" / run_file_name(c.schedule, c.sigma0)
             for c in configs]
    if out_dir is not None:
        (Path(out_dir) / "runs").mkdir(parents=True, exist_ok=True)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_point, c, train_set, val_set, p) for c, p in zip(configs, paths)]
            return [f.result() for f in futures]
    out = []
    for c, p in zip(configs, paths):
        log.info("run schedule=%s sigma0=%g", c.schedule, c.sigma0)
        out.append(run_point(c, train_set, val_set, p))
    return out


def select(runs: Iterable[RunSummary], baseline: RunSummary, tolerance: str,
           kinds: Iterable[str]) -> dict[str, Selection]:
    """Largest qualifying sigma0 per schedule kind; the baseline if none qualifies."""
    runs = list(runs)
    picked = {}
    for kind in kinds:
        ok = [r for r in runs if r.schedule == kind and qualifies(r, baseline, tolerance)]
        if ok:
            r = max(ok, key=lambda r: r.sigma0)
            picked[kind] = Selection(kind, r.sigma0, r.best_epoch, r.val_accuracy, r.val_avg_spikes,
                                     reduction_pct(r.val_avg_spikes, baseline.val_avg_spikes), True)
        else:
            warnings.warn(f"no sigma0 for schedule {kind!r} meets the {tolerance} tolerance; "
                          "reporting the baseline", stacklevel=2)
            picked[kind] = Selection(kind, 0.0, baseline.best_epoch, baseline.val_accuracy,
                                     baseline.val_avg_spikes, 0.0, False)
    return picked


def run_grid(base_config: TrainingConfig, grids: Mapping[str, Sequence[float]],
             train_set: LabeledImageSet, val_set: LabeledImageSet, out_dir=None,
             workers: int = 1, baseline: RunSummary | None = None) -> tuple[RunSummary, list[RunSummary]]:
    """Train the baseline and every (schedule, sigma0) grid point.

    sigma0 = 0 points reuse the baseline run, which they reproduce bit-exactly.
    """
    for kind in grids:
        ScheduleKind(kind)
    configs = [] if baseline is not None else [base_config.replace(schedule="none", sigma0=0.0)]
    for kind, grid in grids.items():
        configs += [base_config.replace(schedule=kind, sigma0=float(s)) for s in grid if s != 0]
    summaries = _run_many(configs, train_set, val_set, out_dir, workers)
    if baseline is None:
        baseline, summaries = summaries[0], summaries[1:]
    by_key = {(s.schedule, s.sigma0): s for s in summaries}
    runs = []
    for kind, grid in grids.items():
        for s in grid:
            if s == 0:
                b = baseline
                runs.append(RunSummary(kind, 0.0, b.best_epoch, b.val_accuracy, b.val_avg_spikes,
                                       b.val_correct, b.val_total))
            else:
                runs.append(by_key[(kind, float(s))])
    return baseline, runs


def search_sigma0(base_config: TrainingConfig, grid: Sequence[float] | Mapping[str, Sequence[float]],
                  tolerance: str, train_set: LabeledImageSet, val_set: LabeledImageSet,
                  kinds: Sequence[str] = ("constant",), out_dir=None, workers: int = 1,
                  baseline: RunSummary | None = None) -> SearchResult:
    """Pick, per schedule kind, the largest grid sigma0 within tolerance of the baseline.

    ``grid`` is either one list shared by all kinds or a mapping kind -> list.
    With ``out_dir`` the per-run metrics, ``grid.csv`` and ``summary.csv`` are written.
    """
    tolerance = normalize_tolerance(tolerance)
    grids = dict(grid) if isinstance(grid, Mapping) else {k: list(grid) for k in kinds}
    if not grids or any(len(g) == 0 for g in grids.values()):
        raise ValueError("sigma0 grid must be non-empty")
    if any(s < 0 for g in grids.values() for s in g):
        raise ValueError("sigma0 grid values must be nonnegative")
    baseline, runs = run_grid(base_config, grids, train_set, val_set, out_dir, workers, baseline)
    result = SearchResult(tolerance, baseline, runs, select(runs, baseline, tolerance, grids))
    if out_dir is not None:
        write_grid_csv(Path(out_dir) / "grid.csv", baseline, runs)
        write_summary_csv(Path(out_dir) / "summary.csv", baseline, result.selections)
    return result


# ---------------------------------------------------------------- tables

def write_grid_csv(path, baseline: RunSummary, runs: Sequence[RunSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for r in [baseline, *runs]:
            w.writerow([r.schedule, repr(r.sigma0), r.best_epoch, repr(r.val_accuracy),
                        repr(r.val_avg_spikes), r.val_correct, r.val_total,
                        int(qualifies(r, baseline, "strict")), int(qualifies(r, baseline, "one_percent"))])


def summary_rows(baseline: RunSummary, selections: Mapping[str, Selection]) -> list[Selection]:
    base = Selection("none", 0.0, baseline.best_epoch, baseline.val_accuracy,
                     baseline.val_avg_spikes, 0.0, True)
    return [base, *selections.values()]


def write_summary_csv(path, baseline: RunSummary, selections: Mapping[str, Selection]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in summary_rows(baseline, selections):
            w.writerow([s.schedule, repr(s.sigma0), s.best_epoch, repr(s.accuracy), repr(s.avg_spikes),
                        repr(s.reduction_pct), int(s.qualified)])


def format_table(baseline: RunSummary, selections: Mapping[str, Selection], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'schedule':<20}{'sigma0':>12}{'epochs':>8}{'accuracy':>11}{'avg spikes':>13}{'reduction':>11}")
    for s in summary_rows(baseline, selections):
        flag = "" if s.qualified else "  (no qualifying sigma0)"
        lines.append(f"{s.schedule:<20}{s.sigma0:>12.6g}{s.best_epoch:>8d}{s.accuracy:>10.2f}%"
                     f"{s.avg_spikes:>13.1f}{s.reduction_pct:>10.1f}%{flag}")
    return "\n".join(lines)
