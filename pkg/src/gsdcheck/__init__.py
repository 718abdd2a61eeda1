"""Subjective experiment consistency check with the Generalized Score Distribution.

Each stimulus's 5-point scores are fitted with the GSD on a fixed grid and
tested with a bootstrapped G-test; the resulting p-values are then judged
as a set on a p-value P-P plot.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .consistency import (ConsistencyVerdict, PPPlotData, PValueSeries, build_ppplot,
                          classify_experiment, ecdf, experiment_test, render_plot,
                          threshold_line)
from .diagnostics import distribution_tags, tag_flagged_stimuli
from .estimation import (FitCache, FitResult, ParamGrid, build_grid, fit_mle, load_grid,
                         log_likelihood, save_grid)
from .gof import GofConfig, StimulusResult, batch_gof, bootstrap_pvalue, g_statistic
from .gsd import GsdParams, gsd_moments, gsd_pmf, mos, sample, variance_bounds
from .ingest import ExperimentData, ScoreRecord, aggregate, parse_csv
from .pipeline import ExperimentReport, analyze_experiment
from .simulate import SimConfig, contaminate, generate_experiment
