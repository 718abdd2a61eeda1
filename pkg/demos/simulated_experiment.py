"""Simulate whole experiments and check their consistency.

A clean experiment draws every stimulus from a GSD; a contaminated one
replaces a share of stimuli with atypical score distributions.  Writes
P-P plots next to this script.
"""

from pathlib import Path

from gsdcheck import GofConfig, FitCache, SimConfig, generate_experiment
from gsdcheck.consistency import render_plot
from gsdcheck.estimation import build_grid
from gsdcheck.pipeline import analyze_experiment
from gsdcheck.simulate import confusion

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)
grid = build_grid()
cache = FitCache(grid)
config = GofConfig(bootstrap_iterations=1_000, seed=0)

for label, contamination in [("clean", ()),
                             ("contaminated", (("bimodal", 0.15), ("sudden_cutoff", 0.15)))]:
    data, truth = generate_experiment(SimConfig(seed=3, contamination=contamination))
    report = analyze_experiment(data, grid, config, workers=4, cache=cache)
    v = report.verdict
    print(f"{label}: {v.decision}, experiment p at alpha=0.2: {v.experiment_p_value:.4f}, "
          f"crossing alpha: {v.crossing_alpha}")
    print("  flagged vs truth:", confusion(v.flagged, truth))
    for row in report.flagged_table()[:5]:
        counts = [row[f"k{j}"] for j in range(1, 6)]
        print(f"  {row['stimulus_id']} {counts} p={row['p_value']:.4f} {row['tags']}")
    print("  plot:", render_plot(report.plot, out / f"{label}.svg", title=label))
