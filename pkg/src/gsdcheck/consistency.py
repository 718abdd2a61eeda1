"""Experiment-level consistency from the per-stimulus p-values.

The p-value P-P plot compares the ECDF of the stimuli's goodness-of-fit
p-values with the uniform CDF.  For each ``alpha`` the fraction of
p-values at or below ``alpha`` is tested against ``alpha`` with a
one-sided proportion test, giving the threshold line::

    f(alpha) = alpha + z_{1-beta} * sqrt(alpha * (1 - alpha) / n)

An experiment is inconsistent when the ECDF rises strictly above
``f`` somewhere in ``(0, alpha_cap]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import binom, norm

CONSISTENT = "consistent"
INCONSISTENT = "inconsistent"


@dataclass(frozen=True)
class PValueSeries:
    stimulus_ids: tuple
    p_values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_values, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("a p-value series needs at least one entry")
        if len(self.stimulus_ids) != len(p):
            raise ValueError("stimulus_ids and p_values differ in length")
        if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
            raise ValueError("p-values must lie in [0, 1]")
        object.__setattr__(self, "stimulus_ids", tuple(self.stimulus_ids))
        object.__setattr__(self, "p_values", p)

    @classmethod
    def from_pairs(cls, pairs) -> "PValueSeries":
        pairs = list(pairs)
        return cls(tuple(s for s, _ in pairs), np.array([p for _, p in pairs], dtype=float))

    @classmethod
    def from_results(cls, results) -> "PValueSeries":
        """Series from :class:`~gsdcheck.gof.StimulusResult` objects, skipping failures."""
        return cls.from_pairs((r.stimulus_id, r.p_value) for r in results if r.ok)

    @property
    def n_stimuli(self) -> int:
        return len(self.p_values)

    @property
    def entries(self) -> list[tuple[str, float]]:
        return list(zip(self.stimulus_ids, self.p_values.tolist()))


def ecdf(series: PValueSeries, alpha: float) -> float:
    """Fraction of p-values ``<= alpha`` (right-continuous ECDF)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return float(np.count_nonzero(series.p_values <= alpha)) / series.n_stimuli


def z_quantile(beta: float = 0.05, exact: bool = False) -> float:
    """Upper ``beta`` standard-normal quantile, rounded to 2 decimals unless ``exact``."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    z = float(norm.isf(beta))
    return z if exact else round(z, 2)


def threshold_line(alpha, n: int, beta: float = 0.05, exact_z: bool = False):
    """Threshold ``f(alpha)``; accepts a scalar or an array of alphas."""
    a = np.asarray(alpha, dtype=float)
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise ValueError("alpha must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    f = a + z_quantile(beta, exact_z) * np.sqrt(a * (1.0 - a) / n)
    return float(f) if f.ndim == 0 else f


@dataclass(frozen=True)
class PPPlotData:
    points: np.ndarray  # (m, 2): alpha, ecdf at each distinct observed p-value
    threshold: np.ndarray  # (512, 2): alpha, f(alpha)
    n_stimuli: int
    beta: float = 0.05
    z_quantile: float = 1.64

    def point_thresholds(self) -> np.ndarray:
        a = self.points[:, 0]
        return a + self.z_quantile * np.sqrt(a * (1.0 - a) / self.n_stimuli)


def build_ppplot(series: PValueSeries, beta: float = 0.05, exact_z: bool = False,
                 n_curve: int = 512) -> PPPlotData:
    alphas = np.unique(series.p_values)
    sorted_p = np.sort(series.p_values)
    heights = np.searchsorted(sorted_p, alphas, side="right") / series.n_stimuli
    curve = np.linspace(0.0, 1.0, n_curve)
    return PPPlotData(
        points=np.column_stack([alphas, heights]),
        threshold=np.column_stack([curve, threshold_line(curve, series.n_stimuli, beta, exact_z)]),
        n_stimuli=series.n_stimuli,
        beta=beta,
        z_quantile=z_quantile(beta, exact_z),
    )


def experiment_test(series: PValueSeries, alpha: float, method: str = "normal") -> float:
    """One-sided p-value for "the share of p-values <= alpha exceeds alpha".

    ``method="normal"`` uses the normal approximation that underlies the
    threshold line; ``method="binomial"`` returns P[Bin(n, alpha) >= count].
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    n = series.n_stimuli
    count = int(np.count_nonzero(series.p_values <= alpha))
    if method == "normal":
        z = (count / n - alpha) / math.sqrt(alpha * (1.0 - alpha) / n)
        return float(norm.sf(z))
    if method == "binomial":
        return float(binom.sf(count - 1, n, alpha))
    raise ValueError(f"unknown method {method!r}")


DECISION_RULES = ("cap_test", "any_exceedance")


@dataclass(frozen=True)
class ConsistencyVerdict:
    decision: str
    crossing_alpha: float | None
    flagged: list = field(default_factory=list)
    experiment_p_value: float = 1.0
    alpha_used: float = 0.2
    # right-most alpha in (0, alpha_used] where the ECDF is above the
    # threshold, reported even when the decision rule ignores it
    exceedance_alpha: float | None = None
    decision_rule: str = "cap_test"

    @property
    def inconsistent(self) -> bool:
        return self.decision == INCONSISTENT

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "crossing_alpha": self.crossing_alpha,
            "flagged": list(self.flagged),
            "experiment_p_value": self.experiment_p_value,
            "alpha_used": self.alpha_used,
            "exceedance_alpha": self.exceedance_alpha,
            "decision_rule": self.decision_rule,
        }


def exceedances(series: PValueSeries, beta: float = 0.05, exact_z: bool = False) -> np.ndarray:
    """Alphas in (0, 1) at which the ECDF is strictly above the threshold.

    Only the corners of the ECDF step function need checking: between two
    observed p-values the ECDF is flat while the threshold grows.  When
    some p-values are exactly 0 the ECDF exceeds the threshold as alpha
    tends to 0 from above; that limit is reported as ``alpha = 0``.
    """
    data = build_ppplot(series, beta, exact_z, n_curve=2)
    alpha, height = data.points[:, 0], data.points[:, 1]
    above = (height > data.point_thresholds()) & (alpha > 0.0) & (alpha < 1.0)
    out = alpha[above]
    if np.any(series.p_values == 0.0):
        out = np.concatenate([[0.0], out])
    return out


def classify_experiment(series: PValueSeries, beta: float = 0.05, alpha_cap: float = 0.2,
                        exact_z: bool = False, test_method: str = "normal",
                        rule: str = "cap_test") -> ConsistencyVerdict:
    """Consistency verdict and the stimuli worth inspecting.

    ``rule="cap_test"`` declares the experiment inconsistent when the share
    of p-values at or below ``alpha_cap`` is above the threshold there.
    ``rule="any_exceedance"`` does so when the ECDF is above the threshold
    anywhere in ``(0, alpha_cap]``; this is much more liberal because a
    single tiny p-value already crosses the line near ``alpha = 0``.

    For an inconsistent experiment the crossing alpha is the right-most
    exceedance, capped at ``alpha_cap``; flagged stimuli have p-values
    strictly below it, in ascending order.  If the only exceedance is the
    alpha -> 0 limit (p-values of exactly 0), the crossing alpha is the
    smallest positive p-value (or the cap), which flags the zero p-values.
    """
    if not 0.0 < alpha_cap < 1.0:
        raise ValueError("alpha_cap must lie in (0, 1)")
    if rule not in DECISION_RULES:
        raise ValueError(f"rule must be one of {DECISION_RULES}")
    exp_p = experiment_test(series, alpha_cap, test_method)
    hits = exceedances(series, beta, exact_z)
    in_range = hits[hits <= alpha_cap]
    if in_range.size == 0:
        exceedance = None
    elif in_range.max() == 0.0:
        positive = series.p_values[series.p_values > 0.0]
        exceedance = float(min(positive.min(), alpha_cap)) if positive.size else alpha_cap
    else:
        exceedance = float(in_range.max())

    if rule == "cap_test":
        bad = ecdf(series, alpha_cap) > threshold_line(alpha_cap, series.n_stimuli, beta, exact_z)
    else:
        bad = exceedance is not None
    if not bad:
        return ConsistencyVerdict(CONSISTENT, None, [], exp_p, alpha_cap, exceedance, rule)
    crossing = alpha_cap if hits.max() > alpha_cap else exceedance
    order = np.argsort(series.p_values, kind="stable")
    flagged = [series.stimulus_ids[i] for i in order if series.p_values[i] < crossing]
    return ConsistencyVerdict(INCONSISTENT, crossing, flagged, exp_p, alpha_cap, exceedance, rule)


def write_plot_csv(data: PPPlotData, path) -> None:
    """One row per P-P point: alpha, ecdf, threshold (shortest repr floats)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha", "ecdf", "threshold"])
        for (a, e), f in zip(data.points, data.point_thresholds()):
            writer.writerow([repr(float(a)), repr(float(e)), repr(float(f))])


def read_plot_csv(path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["alpha"]), float(r["ecdf"]), float(r["threshold"])] for r in rows])


def plot_svg(data: PPPlotData, title: str = "", size: int = 400) -> str:
    margin = 50
    span = size - 2 * margin

    def px(a):
        return margin + a * span

    def py(b):
        return size - margin - b * span

    def pts(pairs):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pairs)

    curve = [(a, f) for a, f in data.threshold if f <= 1.0]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<title>{escape(title or 'p-value P-P plot')}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{px(0):.2f}" y="{py(1):.2f}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<polyline class="reference" points="{pts([(0, 0), (1, 1)])}" fill="none" stroke="#888" stroke-dasharray="4 3"/>',
        f'<polyline class="threshold" points="{pts(curve)}" fill="none" stroke="black" stroke-width="1.5"/>',
    ]
    for a, e in data.points:
        parts.append(f'<circle class="point" cx="{px(a):.2f}" cy="{py(e):.2f}" r="2.5" fill="#1f77b4"/>')
    for t in np.linspace(0.0, 1.0, 6):
        parts.append(f'<text x="{px(t):.2f}" y="{py(0) + 15:.2f}" font-size="10" text-anchor="middle">{t:.1f}</text>')
        parts.append(f'<text x="{px(0) - 6:.2f}" y="{py(t) + 3:.2f}" font-size="10" text-anchor="end">{t:.1f}</text>')
    mid = size / 2
    parts += [
        f'<text x="{mid:.2f}" y="{size - 12}" font-size="12" text-anchor="middle">p-value / expected CDF</text>',
        f'<text x="14" y="{mid:.2f}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {mid:.2f})">observed ECDF</text>',
        f'<text x="{mid:.2f}" y="20" font-size="13" text-anchor="middle">{escape(title)}</text>',
        "</svg>",
        "",
    ]
    return "\n".join(parts)


def render_plot(data: PPPlotData, path, format: str = "svg", title: str = "") -> Path:
    path = Path(path)
    if format == "svg":
        path.write_text(plot_svg(data, title), encoding="utf-8")
    elif format == "csv":
        write_plot_csv(data, path)
    else:
        raise ValueError(f"unsupported plot format {format!r}")
    return path
