"""Bootstrapped G-test of goodness-of-fit of the GSD to one stimulus.

For a histogram ``k`` of ``n`` scores the procedure is

1. fit ``(psi, rho)`` on the grid;
2. ``G_obs = 2 sum_j k_j ln(k_j / E_j)`` against the fitted expected counts;
3. draw ``T`` samples of size ``n`` from the fitted GSD, refit each one and
   compute its G against its own refitted expected counts;
4. ``p = #{t : G_t >= G_obs} / T``.

Refitting in step 3 is what makes the test valid for the composite
hypothesis "the scores come from *some* GSD".  Because the statistic of a
replicate depends only on its count vector, refits are memoized in a
:class:`~gsdcheck.estimation.FitCache`.

Per-stimulus seeds for batch runs are the first 8 bytes (little-endian) of
``blake2b(f"{master_seed}:{stimulus_id}", digest_size=8)``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimation import FitCache, FitResult, ParamGrid
from .gsd import as_counts

# G_t is treated as >= G_obs within this relative tolerance, so replicates
# with the observed counts (or a mirror image of them) are not lost to
# rounding in the last bit
G_RTOL = 1e-9

PVALUE_CONVENTIONS = ("count_over_T", "plus_one_smoothing")

RESULT_COLUMNS = ["stimulus_id", "n", "k1", "k2", "k3", "k4", "k5",
                  "psi_hat", "rho_hat", "g_stat", "p_value"]


@dataclass(frozen=True)
class GofConfig:
    bootstrap_iterations: int = 10_000
    seed: int = 0
    pvalue_convention: str = "count_over_T"

    def __post_init__(self):
        if int(self.bootstrap_iterations) < 100:
            raise ValueError("bootstrap_iterations must be at least 100")
        if self.pvalue_convention not in PVALUE_CONVENTIONS:
            raise ValueError(f"pvalue_convention must be one of {PVALUE_CONVENTIONS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class StimulusResult:
    stimulus_id: str
    counts: np.ndarray
    fit: FitResult | None
    g_statistic: float
    p_value: float
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def g_statistic(observed, expected) -> float:
    """G = 2 sum_j k_j ln(k_j / E_j); zero counts contribute nothing.

    Returns ``inf`` when a category is observed but has zero expectation.
    """
    k = as_counts(observed)
    e = np.asarray(expected, dtype=float)
    if e.shape != k.shape:
        raise ValueError("observed and expected must both have 5 categories")
    if abs(e.sum() - k.sum()) > 1e-6 * max(1.0, k.sum()):
        raise ValueError("expected counts must sum to the number of observations")
    g = 0.0
    for kj, ej in zip(k, e):
        if kj == 0:
            continue
        if ej <= 0:
            return math.inf
        g += kj * math.log(kj / ej)
    return max(0.0, 2.0 * g)


def derive_seed(master_seed: int, stimulus_id: str) -> int:
    digest = hashlib.blake2b(f"{master_seed}:{stimulus_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def pvalue_from_replicates(g_obs: float, g_reps: np.ndarray, convention: str = "count_over_T") -> float:
    if math.isinf(g_obs):
        return 0.0
    t = len(g_reps)
    count = int(np.count_nonzero(g_reps >= g_obs - G_RTOL * max(1.0, g_obs)))
    if convention == "plus_one_smoothing":
        return (1 + count) / (1 + t)
    return count / t


def bootstrap_replicates(fit: FitResult, n: int, grid: ParamGrid, iterations: int,
                         seed: int, cache: FitCache) -> np.ndarray:
    """G statistics of ``iterations`` refitted samples from the fitted GSD."""
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(n, grid.pmf(fit.cell), size=iterations)
    unique, inverse = np.unique(draws, axis=0, return_inverse=True)
    _, g_unique = cache.lookup(unique)
    return g_unique[np.ravel(inverse)]


def bootstrap_pvalue(counts, grid: ParamGrid, config: GofConfig | None = None,
                     cache: FitCache | None = None, stimulus_id: str = "",
                     seed: int | None = None) -> StimulusResult:
    """Bootstrap G-test p-value for one histogram.

    ``seed`` overrides ``config.seed`` (batch runs pass derived seeds).
    """
    config = config or GofConfig()
    cache = cache if cache is not None else FitCache(grid)
    k = as_counts(counts)
    n = int(k.sum())
    if n < 1:
        raise ValueError("cannot test an empty sample")
    fit = cache.fit(k)
    g_obs = g_statistic(k, fit.expected_counts)
    reps = bootstrap_replicates(fit, n, grid, int(config.bootstrap_iterations),
                                config.seed if seed is None else seed, cache)
    p = pvalue_from_replicates(g_obs, reps, config.pvalue_convention)
    return StimulusResult(stimulus_id, k, fit, g_obs, p)


def _run_one(item, grid, config, cache):
    stimulus_id, counts = item
    try:
        return bootstrap_pvalue(counts, grid, config, cache, stimulus_id=stimulus_id,
                                seed=derive_seed(config.seed, stimulus_id))
    except (ValueError, TypeError) as exc:
        return StimulusResult(stimulus_id, np.asarray(counts), None, math.nan, math.nan,
                              error=f"{stimulus_id}: {exc}")


def batch_gof(samples, grid: ParamGrid, config: GofConfig | None = None,
              workers: int = 1, cache: FitCache | None = None) -> list[StimulusResult]:
    """Test every ``(stimulus_id, counts)`` pair; results keep input order.

    A failing stimulus yields a result with ``error`` set instead of
    aborting the batch.  Results do not depend on ``workers``.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no stimuli to test")
    config = config or GofConfig()
    cache = cache if cache is not None else FitCache(grid)
    if workers <= 1:
        return [_run_one(item, grid, config, cache) for item in samples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda item: _run_one(item, grid, config, cache), samples))


def _fmt(x: float) -> str:
    # shortest repr that round-trips exactly
    return repr(float(x))


def result_rows(results):
    for r in results:
        k = [int(v) for v in r.counts] if r.ok else [""] * 5
        yield {
            "stimulus_id": r.stimulus_id,
            "n": int(sum(k)) if r.ok else "",
            **{f"k{j + 1}": k[j] for j in range(5)},
            "psi_hat": _fmt(r.fit.params.psi) if r.ok else "",
            "rho_hat": _fmt(r.fit.params.rho) if r.ok else "",
            "g_stat": _fmt(r.g_statistic) if r.ok else "",
            "p_value": _fmt(r.p_value) if r.ok else "",
        }


def write_results_csv(results, path) -> None:
    """Write stimulus results; floats use Python's shortest round-trip repr."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(result_rows(results))


def read_results_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
