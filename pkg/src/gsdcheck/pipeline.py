"""Per-experiment analysis: fit and test every stimulus, then judge the set."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .consistency import (ConsistencyVerdict, PPPlotData, PValueSeries, build_ppplot,
                          classify_experiment, render_plot)
from .diagnostics import distribution_tags
from .estimation import FitCache, ParamGrid
from .gof import GofConfig, StimulusResult, batch_gof, write_results_csv
from .ingest import ExperimentData

FLAGGED_COLUMNS = ["stimulus_id", "p_value", "k1", "k2", "k3", "k4", "k5", "tags"]


@dataclass
class ExperimentReport:
    experiment_id: str
    results: list[StimulusResult]
    series: PValueSeries
    plot: PPPlotData
    verdict: ConsistencyVerdict

    @property
    def errors(self) -> list[str]:
        return [r.error for r in self.results if not r.ok]

    def flagged_table(self) -> list[dict]:
        """Flagged stimuli with counts and tags, ascending by p-value."""
        by_id = {r.stimulus_id: r for r in self.results if r.ok}
        rows = []
        for sid in self.verdict.flagged:
            r = by_id[sid]
            rows.append({
                "stimulus_id": sid,
                "p_value": r.p_value,
                **{f"k{j + 1}": int(r.counts[j]) for j in range(5)},
                "tags": distribution_tags(r.counts),
            })
        rows.sort(key=lambda row: (row["p_value"], row["stimulus_id"]))
        return rows


def analyze_experiment(experiment: ExperimentData, grid: ParamGrid, config: GofConfig | None = None,
                       beta: float = 0.05, alpha_cap: float = 0.2, exact_z: bool = False,
                       workers: int = 1, cache: FitCache | None = None,
                       rule: str = "cap_test") -> ExperimentReport:
    results = batch_gof(experiment.samples(), grid, config, workers=workers, cache=cache)
    series = PValueSeries.from_results(results)
    return ExperimentReport(
        experiment_id=experiment.experiment_id,
        results=results,
        series=series,
        plot=build_ppplot(series, beta, exact_z),
        verdict=classify_experiment(series, beta, alpha_cap, exact_z, rule=rule),
    )


def write_report(report: ExperimentReport, out_dir, formats=("svg", "csv")) -> Path:
    """Write results.csv, ppplot.{svg,csv}, verdict.json and flagged.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results_csv(report.results, out / "results.csv")
    for fmt in formats:
        render_plot(report.plot, out / f"ppplot.{fmt}", fmt, title=report.experiment_id)
    verdict = {"experiment_id": report.experiment_id,
               "n_stimuli": report.series.n_stimuli,
               **report.verdict.to_dict(),
               "errors": report.errors}
    (out / "verdict.json").write_text(json.dumps(verdict, indent=2) + "\n", encoding="utf-8")
    with (out / "flagged.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=FLAGGED_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in report.flagged_table():
            writer.writerow({**row, "p_value": repr(float(row["p_value"])),
                             "tags": ";".join(row["tags"])})
    return out
