"""``gsdcheck`` command line: grid management, analysis and simulation.

Exit codes: 0 success (whatever the verdicts), 1 usage error, 2 data or
grid integrity error.  Every option can also be set through an environment
variable named ``GSDCHECK_<OPTION>`` (e.g. ``GSDCHECK_SEED``); flags win.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .estimation import (FitCache, GridFileError, build_grid, grid_checksum, grid_to_bytes,
                         load_grid, save_grid)
from .gof import GofConfig
from .gsd import gsd_log_pmf_array
from .ingest import (ScoreFileError, aggregate, is_counts_file, parse_column_map, parse_csv,
                     read_counts_csv, write_counts_csv)
from .pipeline import analyze_experiment, write_report
from .simulate import CLASSES, SimConfig, confusion, generate_experiment, write_labels_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class DataError(click.ClickException):
    exit_code = EXIT_DATA


def default_grid_path() -> Path:
    base = Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache"))
    return base / "gsdcheck" / "gsd_grid_v1.bin"


def _env(name: str) -> str:
    return "GSDCHECK_" + name.upper().replace("-", "_")


def grid_option(f):
    return click.option("--grid-path", type=click.Path(dir_okay=False, path_type=Path),
                        default=default_grid_path, show_default="~/.cache/gsdcheck/gsd_grid_v1.bin",
                        envvar=_env("grid_path"), help="Grid cache file.")(f)


def bootstrap_options(f):
    for opt in reversed([
        click.option("--bootstrap-iters", type=click.IntRange(min=100), default=10_000,
                     show_default=True, envvar=_env("bootstrap_iters"),
                     help="Bootstrap replicates per stimulus."),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, show_default=True,
                     envvar=_env("seed"), help="Master seed."),
        click.option("--beta", type=click.FloatRange(0, 1, min_open=True, max_open=True),
                     default=0.05, show_default=True, envvar=_env("beta"),
                     help="Significance level of the threshold line."),
        click.option("--alpha-cap", type=click.FloatRange(0, 1, min_open=True, max_open=True),
                     default=0.2, show_default=True, envvar=_env("alpha_cap"),
                     help="Upper end of the alpha range used for the verdict."),
        click.option("--exact-z", is_flag=True, envvar=_env("exact_z"),
                     help="Use the exact normal quantile instead of the 2-decimal one."),
        click.option("--decision-rule", type=click.Choice(["cap_test", "any_exceedance"]),
                     default="cap_test", show_default=True, envvar=_env("decision_rule")),
        click.option("--pvalue-convention", type=click.Choice(["count_over_T", "plus_one_smoothing"]),
                     default="count_over_T", show_default=True, envvar=_env("pvalue_convention")),
        click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
                     envvar=_env("workers"), help="Worker threads (affects wall time only)."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
                     default=Path("gsdcheck-out"), show_default=True, envvar=_env("out")),
        click.option("--format", "formats", default="svg,csv", show_default=True,
                     envvar=_env("format"), help="Comma-separated P-P plot formats."),
    ]):
        f = opt(f)
    return f


def _formats(value: str) -> tuple[str, ...]:
    formats = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [v for v in formats if v not in ("svg", "csv")]
    if bad:
        raise click.UsageError(f"unsupported plot format(s): {', '.join(bad)}")
    return formats


def _load_grid(path: Path):
    """Load the grid cache, building it on first use."""
    try:
        if not path.exists():
            click.echo(f"building parameter grid at {path}", err=True)
            save_grid(build_grid(), path)
        return load_grid(path), grid_checksum(path)
    except GridFileError as exc:
        raise DataError(f"{exc} (rebuild with `gsdcheck grid build --grid-path {path}`)")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, grid_path: Path, grid_sum: str,
                    inputs=()) -> None:
    manifest = {
        "tool": "gsdcheck",
        "version": __version__,
        "command": command,
        "config": config,
        "grid_path": str(grid_path),
        "grid_checksum": grid_sum,
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _safe_name(experiment_id: str) -> str:
    name = "".join(c if c.isalnum() or c in "-_." else "_" for c in experiment_id)
    return name or "_"


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="gsdcheck")
def cli():
    """Consistency check of subjective experiments with the GSD."""


@cli.group()
def grid():
    """Build or verify the precomputed (psi, rho) probability grid."""


@grid.command("build")
@grid_option
def grid_build(grid_path: Path):
    save_grid(build_grid(), grid_path)
    click.echo(f"{grid_path}  sha256={grid_checksum(grid_path)}")


@grid.command("verify")
@grid_option
@click.option("--cells", type=click.IntRange(min=1), default=100, show_default=True,
              help="Number of random cells to recompute.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, envvar=_env("seed"))
def grid_verify(grid_path: Path, cells: int, seed: int):
    """Check the file checksum and recompute random cells bit-exactly."""
    try:
        g = load_grid(grid_path)
    except GridFileError as exc:
        raise DataError(str(exc))
    rng = np.random.default_rng(seed)
    idx = rng.choice(g.n_cells, size=min(cells, g.n_cells), replace=False)
    i, j = np.divmod(idx, g.shape[1])
    fresh = gsd_log_pmf_array(g.psi_values[i], g.rho_values[j])
    stored = g.log_pmf.reshape(-1, 5)[idx]
    if not np.array_equal(fresh, stored):
        bad = int(np.count_nonzero(~np.all(fresh == stored, axis=1)))
        raise DataError(f"{bad} of {len(idx)} recomputed cells differ from {grid_path}")
    if grid_to_bytes(g) != Path(grid_path).read_bytes():
        raise DataError(f"{grid_path} does not re-serialise identically")
    click.echo(f"ok: {grid_path} ({len(idx)} cells verified, sha256={grid_checksum(grid_path)})")


def _read_experiments(inputs, columns: str | None, strict: bool):
    try:
        column_map = parse_column_map(columns)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    experiments = {}
    for path in inputs:
        try:
            if is_counts_file(path):
                found = read_counts_csv(path)
            else:
                parsed = parse_csv(path, column_map, strict=strict)
                for err in parsed.errors:
                    click.echo(f"{path}: skipped {err}", err=True)
                if not parsed.records:
                    raise ScoreFileError(f"{path} has no valid score rows")
                found = aggregate(parsed.records)
        except (ScoreFileError, OSError, UnicodeDecodeError) as exc:
            raise DataError(str(exc))
        for exp_id, data in found.items():
            if exp_id in experiments:
                raise DataError(f"experiment {exp_id!r} appears in more than one input")
            experiments[exp_id] = data
    return experiments


@cli.command()
@click.argument("inputs", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False, path_type=Path))
@grid_option
@bootstrap_options
@click.option("--columns", envvar=_env("columns"),
              help="Column remapping, e.g. 'experiment=study,stimulus=pvs,score=vote'.")
@click.option("--experiment", "only", multiple=True, help="Analyse only these experiment ids.")
@click.option("--strict", is_flag=True, help="Abort on the first malformed row.")
def analyze(inputs, grid_path, bootstrap_iters, seed, beta, alpha_cap, exact_z, decision_rule,
            pvalue_convention, workers, out_dir, formats, columns, only, strict):
    """Analyse tidy score CSV files (or per-stimulus counts CSV files)."""
    formats = _formats(formats)
    experiments = _read_experiments(inputs, columns, strict)
    if only:
        missing = sorted(set(only) - set(experiments))
        if missing:
            raise DataError(f"unknown experiment id(s): {', '.join(missing)}")
        experiments = {k: v for k, v in experiments.items() if k in only}
    g, grid_sum = _load_grid(grid_path)
    config = GofConfig(bootstrap_iters, seed, pvalue_convention)
    cache = FitCache(g)
    summary = []
    reports = []
    for exp_id, data in sorted(experiments.items()):
        report = analyze_experiment(data, g, config, beta, alpha_cap, exact_z, workers, cache,
                                    rule=decision_rule)
        reports.append(report)
        v = report.verdict
        click.echo(f"{exp_id}: {v.decision} (n={report.series.n_stimuli}, "
                   f"experiment p={v.experiment_p_value:.5f}, flagged={len(v.flagged)})")
        summary.append({"experiment_id": exp_id, "n_stimuli": report.series.n_stimuli,
                        **v.to_dict(), "flagged_count": len(v.flagged)})
    for report in reports:
        write_report(report, out_dir / _safe_name(report.experiment_id), formats)
    with (out_dir / "verdicts.jsonl").open("w", encoding="utf-8") as fh:
        for row in summary:
            fh.write(json.dumps(row) + "\n")
    _write_manifest(out_dir, "analyze", {
        "bootstrap_iters": bootstrap_iters, "seed": seed, "beta": beta, "alpha_cap": alpha_cap,
        "exact_z": exact_z, "decision_rule": decision_rule, "pvalue_convention": pvalue_convention,
        "workers": workers, "formats": list(formats), "columns": parse_column_map(columns),
        "experiments": sorted(experiments), "strict": strict,
    }, grid_path, grid_sum, inputs)


def _parse_range(value: str, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value.split(","))
    except ValueError:
        raise click.UsageError(f"{name} must look like 'low,high'")
    return lo, hi


def _parse_contamination(items) -> tuple:
    out = []
    for item in items:
        cls, sep, rate = item.partition("=")
        try:
            if not sep or cls not in CLASSES:
                raise ValueError
            out.append((cls, float(rate)))
        except ValueError:
            raise click.UsageError(f"bad --contaminate {item!r}; use CLASS=RATE with CLASS in "
                                   f"{', '.join(CLASSES)}")
    return tuple(out)


@cli.command()
@grid_option
@bootstrap_options
@click.option("--n-stimuli", type=click.IntRange(min=1), default=160, show_default=True)
@click.option("--n-scores", type=click.IntRange(min=1), default=24, show_default=True)
@click.option("--psi-range", default="1.2,4.8", show_default=True)
@click.option("--rho-range", default="0.5,0.95", show_default=True)
@click.option("--contaminate", "contamination", multiple=True, metavar="CLASS=RATE",
              help=f"Atypical class and share of stimuli ({', '.join(CLASSES)}).")
@click.option("--runs", type=click.IntRange(min=1), default=1, show_default=True,
              help="Number of experiments, seeded seed, seed+1, ...")
@click.option("--analyze/--no-analyze", "run_analysis", default=True, show_default=True)
def simulate(grid_path, bootstrap_iters, seed, beta, alpha_cap, exact_z, decision_rule,
             pvalue_convention, workers, out_dir, formats, n_stimuli, n_scores, psi_range,
             rho_range, contamination, runs, run_analysis):
    """Generate synthetic experiments and optionally analyse them."""
    formats = _formats(formats)
    try:
        base = SimConfig(n_stimuli, n_scores, _parse_range(psi_range, "--psi-range"),
                         _parse_range(rho_range, "--rho-range"),
                         _parse_contamination(contamination), seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    g = grid_sum = cache = None
    if run_analysis:
        g, grid_sum = _load_grid(grid_path)
        cache = FitCache(g)
    summary = []
    for run in range(runs):
        run_seed = (seed + run) % 2**64
        cfg = SimConfig(base.n_stimuli, base.n_scores, base.psi_range, base.rho_range,
                        base.contamination, run_seed, experiment_id=f"sim_{run_seed}")
        data, labels = generate_experiment(cfg)
        run_dir = out_dir / f"run_{run_seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_counts_csv(data, run_dir / "counts.csv")
        write_labels_csv(labels, run_dir / "labels.csv")
        row = {"seed": run_seed}
        if run_analysis:
            report = analyze_experiment(data, g, GofConfig(bootstrap_iters, run_seed, pvalue_convention),
                                        beta, alpha_cap, exact_z, workers, cache,
                                        rule=decision_rule)
            write_report(report, run_dir, formats)
            conf = confusion(report.verdict.flagged, labels)
            (run_dir / "confusion.json").write_text(json.dumps(conf, indent=2) + "\n", encoding="utf-8")
            row.update(decision=report.verdict.decision,
                       experiment_p_value=report.verdict.experiment_p_value, **conf)
            click.echo(f"run {run_seed}: {report.verdict.decision} "
                       f"(flagged={len(report.verdict.flagged)}, TP={conf['true_positive']}, "
                       f"FP={conf['false_positive']})")
        summary.append(row)
    result = {"runs": summary}
    if run_analysis:
        result["consistent_rate"] = sum(r["decision"] == "consistent" for r in summary) / runs
        click.echo(f"consistent in {sum(r['decision'] == 'consistent' for r in summary)}/{runs} runs")
    (out_dir / "summary.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out_dir, "simulate", {
        "n_stimuli": n_stimuli, "n_scores": n_scores, "psi_range": list(base.psi_range),
        "rho_range": list(base.rho_range), "contamination": [list(c) for c in base.contamination],
        "seed": seed, "runs": runs, "analyze": run_analysis, "bootstrap_iters": bootstrap_iters,
        "beta": beta, "alpha_cap": alpha_cap, "exact_z": exact_z, "decision_rule": decision_rule,
        "pvalue_convention": pvalue_convention, "workers": workers, "formats": list(formats),
    }, grid_path, grid_sum or "")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="gsdcheck", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except DataError as exc:
        exc.show()
        return EXIT_DATA
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except OSError as exc:
        click.echo(f"Error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
