"""Synthetic experiments: pure GSD stimuli plus optional atypical ones.

The atypical generators mimic the classic shapes of problematic score
distributions:

* ``bimodal``: even mixture of GSD(psi - 1, 0.9) and GSD(psi + 1, 0.9),
  both means clipped to [1, 5];
* ``random_answers``: GSD(psi, 0.9) where each score is replaced by a
  uniformly random category with probability 0.08;
* ``sudden_cutoff``: GSD(psi, 0.8) with one interior category next to the
  mode emptied and its probability moved onto the mode;
* ``hate_or_love``: 60 % of scores are 1 or 5 (evenly), the rest come
  from GSD(psi, 0.7).

Every constant is a keyword argument of :func:`contaminate`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gsd import N_CATEGORIES, GsdParams, gsd_pmf
from .ingest import ExperimentData

CLASSES = ("bimodal", "random_answers", "sudden_cutoff", "hate_or_love")
TYPICAL = "typical"


def _pmf(psi: float, rho: float) -> np.ndarray:
    return gsd_pmf(GsdParams(float(np.clip(psi, 1.0, 5.0)), rho))


def contamination_pmf(cls: str, psi: float, rng: np.random.Generator | None = None, *,
                      offset: float = 1.0, bimodal_rho: float = 0.9,
                      replace_prob: float = 0.08, random_rho: float = 0.9,
                      cutoff_rho: float = 0.8, extreme_share: float = 0.6,
                      hate_love_rho: float = 0.7) -> np.ndarray:
    """Score probabilities of an atypical class at location ``psi``."""
    if cls == "bimodal":
        return 0.5 * _pmf(psi - offset, bimodal_rho) + 0.5 * _pmf(psi + offset, bimodal_rho)
    if cls == "random_answers":
        return (1.0 - replace_prob) * _pmf(psi, random_rho) + replace_prob / N_CATEGORIES
    if cls == "sudden_cutoff":
        p = _pmf(psi, cutoff_rho).copy()
        mode = int(np.argmax(p))
        options = [j for j in (mode - 1, mode + 1) if 1 <= j <= N_CATEGORIES - 2]
        rng = rng if rng is not None else np.random.default_rng(0)
        cut = options[0] if len(options) == 1 else int(rng.choice(options))
        p[mode] += p[cut]
        p[cut] = 0.0
        return p
    if cls == "hate_or_love":
        ends = np.zeros(N_CATEGORIES)
        ends[[0, -1]] = 0.5
        return extreme_share * ends + (1.0 - extreme_share) * _pmf(psi, hate_love_rho)
    raise ValueError(f"unknown contamination class {cls!r}; expected one of {CLASSES}")


def contaminate(cls: str, psi: float, n: int, seed: int, **knobs) -> np.ndarray:
    """Counts of ``n`` scores from the atypical class ``cls``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    p = contamination_pmf(cls, psi, rng, **knobs)
    return rng.multinomial(n, p / p.sum()).astype(np.int64)


@dataclass(frozen=True)
class SimConfig:
    n_stimuli: int = 160
    n_scores: int = 24
    psi_range: tuple[float, float] = (1.2, 4.8)
    rho_range: tuple[float, float] = (0.5, 0.95)
    contamination: tuple = field(default_factory=tuple)  # ((class, rate), ...)
    seed: int = 0
    experiment_id: str = "simulated"

    def __post_init__(self):
        if self.n_stimuli < 1 or self.n_scores < 1:
            raise ValueError("n_stimuli and n_scores must be positive")
        lo, hi = self.psi_range
        if not 1.0 < lo <= hi < 5.0:
            raise ValueError("psi_range must lie inside (1, 5)")
        lo, hi = self.rho_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("rho_range must lie inside (0, 1]")
        contamination = tuple((str(c), float(r)) for c, r in self.contamination)
        for cls, rate in contamination:
            if cls not in CLASSES:
                raise ValueError(f"unknown contamination class {cls!r}")
            if not 0.0 <= rate <= 1.0:
                raise ValueError("contamination rates must lie in [0, 1]")
        if sum(r for _, r in contamination) > 1.0 + 1e-12:
            raise ValueError("contamination rates sum to more than 1")
        object.__setattr__(self, "contamination", contamination)


def stimulus_ids(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"stim_{i:0{width}d}" for i in range(n)]


def generate_experiment(config: SimConfig) -> tuple[ExperimentData, dict[str, str]]:
    """Simulated counts and the ground-truth class of every stimulus.

    Class assignment and per-stimulus parameters come from one master
    stream; each stimulus then draws its scores from its own child seed,
    so stimuli can be generated independently.
    """
    rng = np.random.default_rng(config.seed)
    ids = stimulus_ids(config.n_stimuli)
    labels = [TYPICAL] * config.n_stimuli
    order = rng.permutation(config.n_stimuli)
    start = 0
    for cls, rate in config.contamination:
        m = int(round(rate * config.n_stimuli))
        for i in order[start : start + m]:
            labels[i] = cls
        start += m
    psis = rng.uniform(*config.psi_range, size=config.n_stimuli)
    rhos = rng.uniform(*config.rho_range, size=config.n_stimuli)
    child_seeds = np.random.SeedSequence(config.seed).spawn(config.n_stimuli)
    stimuli = {}
    for i, sid in enumerate(ids):
        seed = int(child_seeds[i].generate_state(1, np.uint64)[0])
        if labels[i] == TYPICAL:
            p = _pmf(psis[i], rhos[i])
            counts = np.random.default_rng(seed).multinomial(config.n_scores, p).astype(np.int64)
        else:
            counts = contaminate(labels[i], psis[i], config.n_scores, seed)
        stimuli[sid] = counts
    return ExperimentData(config.experiment_id, stimuli), dict(zip(ids, labels))


def write_labels_csv(labels: dict[str, str], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stimulus_id", "truth_class"])
        for sid, cls in labels.items():
            writer.writerow([sid, cls])


def read_labels_csv(path) -> dict[str, str]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return {row["stimulus_id"]: row["truth_class"] for row in csv.DictReader(fh)}


def confusion(flagged, labels: dict[str, str]) -> dict[str, int]:
    """Flagged-vs-truth counts, treating every non-typical class as positive."""
    flagged = set(flagged)
    out = {"true_positive": 0, "false_positive": 0, "false_negative": 0, "true_negative": 0}
    for sid, cls in labels.items():
        atypical = cls != TYPICAL
        if sid in flagged:
            out["true_positive" if atypical else "false_positive"] += 1
        else:
            out["false_negative" if atypical else "true_negative"] += 1
    return out
