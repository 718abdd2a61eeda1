"""Heuristic tags for atypical score distributions.

Tags are advisory: they help a reader triage flagged stimuli and never
feed back into the consistency verdict.

bimodal
    two local maxima of the counts, each holding more than
    ``stray_share`` of the scores, separated by a strictly lower category.
random_answers
    at least one score two or more categories away from every modal
    category, with all such scores together at most ``stray_share`` of n.
sudden_cutoff
    at least three categories used, and a non-extreme empty category next
    to a category holding ``heavy_share`` of n or more, with every category
    beyond the empty one also empty (the scores stop abruptly inside the
    scale).
"""

from __future__ import annotations

import numpy as np

from .gsd import as_counts

BIMODAL = "bimodal"
RANDOM_ANSWERS = "random_answers"
SUDDEN_CUTOFF = "sudden_cutoff"


def _is_bimodal(k: np.ndarray, stray_share: float) -> bool:
    n = k.sum()
    padded = np.concatenate([[-1], k, [-1]])
    # collapse plateaus so that [.., 11, 11, ..] counts as one maximum
    values = [v for i, v in enumerate(padded) if i == 0 or v != padded[i - 1]]
    peaks = [
        values[i] for i in range(1, len(values) - 1)
        if values[i] > values[i - 1] and values[i] > values[i + 1]
    ]
    return sum(v > stray_share * n for v in peaks) >= 2


def _has_random_answers(k: np.ndarray, stray_share: float) -> bool:
    modes = np.flatnonzero(k == k.max())
    cats = np.arange(len(k))
    dist = np.min(np.abs(cats[:, None] - modes[None, :]), axis=1)
    stray = int(k[dist >= 2].sum())
    return 0 < stray <= stray_share * k.sum()


def _has_sudden_cutoff(k: np.ndarray, heavy_share: float) -> bool:
    if np.count_nonzero(k) < 3:
        return False
    n = k.sum()
    last = len(k) - 1
    for j in range(1, last):
        if k[j] != 0:
            continue
        if k[j - 1] >= heavy_share * n and not k[j + 1:].any():
            return True
        if k[j + 1] >= heavy_share * n and not k[:j].any():
            return True
    return False


def distribution_tags(counts, stray_share: float = 0.10, heavy_share: float = 0.25) -> list[str]:
    k = as_counts(counts)
    if k.sum() == 0:
        return []
    tags = []
    if _is_bimodal(k, stray_share):
        tags.append(BIMODAL)
    if _has_random_answers(k, stray_share):
        tags.append(RANDOM_ANSWERS)
    if _has_sudden_cutoff(k, heavy_share):
        tags.append(SUDDEN_CUTOFF)
    return tags


def tag_flagged_stimuli(flagged, stray_share: float = 0.10,
                        heavy_share: float = 0.25) -> list[tuple[str, list[str]]]:
    """Tag each ``(stimulus_id, counts)`` pair."""
    return [(sid, distribution_tags(k, stray_share, heavy_share)) for sid, k in flagged]
