"""Tidy score CSV ingestion and per-stimulus aggregation."""

from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gsd import N_CATEGORIES

DEFAULT_COLUMNS = {
    "experiment": "experiment",
    "stimulus": "stimulus_id",
    "subject": "subject_id",
    "score": "score",
}

COUNTS_COLUMNS = ["experiment_id", "stimulus_id", "n", "k1", "k2", "k3", "k4", "k5"]

# per-stimulus sample sizes seen in the reference data sets
TYPICAL_N_RANGE = (9, 33)


class ScoreFileError(ValueError):
    """Unreadable or structurally invalid score file."""


class ScoreRowError(ScoreFileError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class AggregationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    experiment_id: str
    stimulus_id: str
    subject_id: str | None
    score: int

    def __post_init__(self):
        if not self.experiment_id or not self.stimulus_id:
            raise ValueError("experiment_id and stimulus_id must be non-empty")
        if self.score not in range(1, N_CATEGORIES + 1):
            raise ValueError(f"score {self.score!r} outside 1..{N_CATEGORIES}")


@dataclass
class ParsedScores:
    records: list[ScoreRecord]
    errors: list[ScoreRowError] = field(default_factory=list)


@dataclass
class ExperimentData:
    experiment_id: str
    stimuli: dict[str, np.ndarray]

    @property
    def n_stimuli(self) -> int:
        return len(self.stimuli)

    @property
    def n_scores(self) -> int:
        return int(sum(k.sum() for k in self.stimuli.values()))

    def samples(self) -> list[tuple[str, np.ndarray]]:
        return list(self.stimuli.items())


def parse_column_map(text: str | None) -> dict[str, str]:
    """Parse ``"experiment=exp,score=vote"`` into a full column map."""
    mapping = dict(DEFAULT_COLUMNS)
    if not text:
        return mapping
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in DEFAULT_COLUMNS or not value:
            raise ValueError(f"bad column mapping {item!r}; use e.g. score=vote")
        mapping[key] = value
    return mapping


def parse_csv(path, column_map: dict[str, str] | None = None, strict: bool = False) -> ParsedScores:
    """Read tidy scores, one row per score.

    Row-level problems (non-integer or out-of-range score, empty ids) are
    collected with their line numbers; with ``strict=True`` the first one
    is raised instead.  A missing file, missing header or missing required
    column always raises :class:`ScoreFileError`.
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update(column_map or {})
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise ScoreFileError(f"cannot read {path}: {exc}") from exc
    records, errors = [], []
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise ScoreFileError(f"{path} is empty")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        missing = [cols[k] for k in ("experiment", "stimulus", "score") if cols[k] not in header]
        if missing:
            raise ScoreFileError(f"{path} lacks required column(s): {', '.join(missing)}")
        has_subject = cols["subject"] in header
        for row in reader:
            line = reader.line_num
            try:
                raw = (row.get(cols["score"]) or "").strip()
                try:
                    score = int(raw)
                except ValueError:
                    raise ScoreRowError(line, f"score {raw!r} is not an integer") from None
                try:
                    rec = ScoreRecord(
                        (row.get(cols["experiment"]) or "").strip(),
                        (row.get(cols["stimulus"]) or "").strip(),
                        ((row.get(cols["subject"]) or "").strip() or None) if has_subject else None,
                        score,
                    )
                except ValueError as exc:
                    raise ScoreRowError(line, str(exc)) from None
            except ScoreRowError as err:
                if strict:
                    raise
                errors.append(err)
                continue
            records.append(rec)
    if not records and not errors:
        raise ScoreFileError(f"{path} contains no score rows")
    return ParsedScores(records, errors)


def write_scores_csv(records, path, column_map: dict[str, str] | None = None) -> None:
    cols = dict(DEFAULT_COLUMNS)
    cols.update(column_map or {})
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cols["experiment"], cols["stimulus"], cols["subject"], cols["score"]])
        for r in records:
            writer.writerow([r.experiment_id, r.stimulus_id, r.subject_id or "", r.score])


def aggregate(records) -> dict[str, ExperimentData]:
    """Count scores per (experiment, stimulus).

    Experiments and stimuli are returned sorted by id, so the result does
    not depend on record order.  Duplicate (subject, stimulus) rows are
    counted and reported with an :class:`AggregationWarning`, as are
    stimuli whose sample size falls outside 9..33.
    """
    counts: dict[str, dict[str, np.ndarray]] = {}
    seen = Counter()
    for r in records:
        stim = counts.setdefault(r.experiment_id, {}).setdefault(
            r.stimulus_id, np.zeros(N_CATEGORIES, dtype=np.int64))
        stim[r.score - 1] += 1
        if r.subject_id is not None:
            seen[(r.experiment_id, r.stimulus_id, r.subject_id)] += 1
    dups = sorted(key for key, c in seen.items() if c > 1)
    if dups:
        exp, stim, subj = dups[0]
        warnings.warn(
            f"{len(dups)} duplicate subject/stimulus pair(s) counted, e.g. subject {subj!r} "
            f"on stimulus {stim!r} in {exp!r}",
            AggregationWarning, stacklevel=2)
    lo, hi = TYPICAL_N_RANGE
    out = {}
    for exp in sorted(counts):
        stimuli = {sid: counts[exp][sid] for sid in sorted(counts[exp])}
        odd = [sid for sid, k in stimuli.items() if not lo <= k.sum() <= hi]
        if odd:
            warnings.warn(
                f"{exp}: {len(odd)} stimuli have sample sizes outside {lo}..{hi} "
                f"(e.g. {odd[0]!r} with n={int(stimuli[odd[0]].sum())})",
                AggregationWarning, stacklevel=2)
        out[exp] = ExperimentData(exp, stimuli)
    return out


def write_counts_csv(experiments, path) -> None:
    """Per-stimulus counts: experiment_id, stimulus_id, n, k1..k5."""
    if isinstance(experiments, ExperimentData):
        experiments = [experiments]
    elif isinstance(experiments, dict):
        experiments = list(experiments.values())
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COUNTS_COLUMNS)
        for exp in experiments:
            for sid, k in exp.stimuli.items():
                writer.writerow([exp.experiment_id, sid, int(k.sum()), *(int(v) for v in k)])


def read_counts_csv(path) -> dict[str, ExperimentData]:
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise ScoreFileError(f"cannot read {path}: {exc}") from exc
    out: dict[str, ExperimentData] = {}
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or any(c not in reader.fieldnames for c in COUNTS_COLUMNS):
            raise ScoreFileError(f"{path} is not a counts file ({', '.join(COUNTS_COLUMNS)})")
        for row in reader:
            try:
                k = np.array([int(row[f"k{j}"]) for j in range(1, 6)], dtype=np.int64)
                n = int(row["n"])
            except ValueError:
                raise ScoreRowError(reader.line_num, "non-integer count") from None
            if np.any(k < 0) or k.sum() != n:
                raise ScoreRowError(reader.line_num, "counts must be non-negative and sum to n")
            exp = row["experiment_id"]
            out.setdefault(exp, ExperimentData(exp, {})).stimuli[row["stimulus_id"]] = k
    if not out:
        raise ScoreFileError(f"{path} contains no stimuli")
    return out


def is_counts_file(path) -> bool:
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        header = next(csv.reader(fh), [])
    return all(c in [h.strip() for h in header] for c in COUNTS_COLUMNS)
