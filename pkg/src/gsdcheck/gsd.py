"""Generalized Score Distribution (GSD) on the 5-point ACR scale.

The GSD is parameterised by ``psi`` (the mean, i.e. the "true quality")
and ``rho`` (the spread, in (0, 1]).  Its variance interpolates linearly
between the largest and the smallest variance a 5-point distribution with
mean ``psi`` can have::

    Var = rho * V_min(psi) + (1 - rho) * V_max(psi)

Two regimes realise this.  Below the cut point

    C(psi) = 3/4 * V_max / (V_max - V_min)

the scores minus one follow a beta-binomial(4, a, b) with mean
``(psi - 1) / 4``; at and above it, the distribution is a mixture of the
binomial(4, (psi - 1) / 4) and the two-point minimum-variance distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

N_CATEGORIES = 5
SCORES = np.arange(1, N_CATEGORIES + 1)

# log binomial coefficients C(4, k), k = 0..4
_LOG_BINOM4 = gammaln(5.0) - gammaln(np.arange(5) + 1.0) - gammaln(5.0 - np.arange(5))


@dataclass(frozen=True)
class GsdParams:
    """GSD parameters: mean ``psi`` in [1, 5] and spread ``rho`` in (0, 1]."""

    psi: float
    rho: float

    def __post_init__(self):
        if not (np.isfinite(self.psi) and 1.0 <= self.psi <= 5.0):
            raise ValueError(f"psi must lie in [1, 5], got {self.psi!r}")
        if not (np.isfinite(self.rho) and 0.0 < self.rho <= 1.0):
            raise ValueError(f"rho must lie in (0, 1], got {self.rho!r}")


def as_counts(counts) -> np.ndarray:
    """Validate a score histogram ``[k1..k5]`` and return it as int64."""
    k = np.asarray(counts)
    if k.shape != (N_CATEGORIES,):
        raise ValueError(f"expected {N_CATEGORIES} category counts, got shape {k.shape}")
    if not np.issubdtype(k.dtype, np.integer):
        if not np.all(np.isfinite(k)) or np.any(k != np.round(k)):
            raise ValueError("counts must be integers")
    k = k.astype(np.int64)
    if np.any(k < 0):
        raise ValueError("counts must be non-negative")
    return k


def variance_bounds(psi: float) -> tuple[float, float]:
    """Smallest and largest variance of a 5-point distribution with mean psi.

    The minimum puts all mass on the two categories bracketing ``psi``;
    the maximum puts it on categories 1 and 5.
    """
    if not (1.0 <= psi <= 5.0):
        raise ValueError(f"psi must lie in [1, 5], got {psi!r}")
    frac = psi - np.floor(psi)
    return float(frac * (1.0 - frac)), float((psi - 1.0) * (5.0 - psi))


def gsd_log_pmf_array(psi, rho) -> np.ndarray:
    """Vectorised GSD log-probabilities for interior ``psi`` in (1, 5).

    ``psi`` and ``rho`` broadcast against each other; the result has a
    trailing axis of length 5.  Categories with zero probability (only
    possible at ``rho == 1``) get ``-inf``.
    """
    psi, rho = np.broadcast_arrays(np.asarray(psi, float), np.asarray(rho, float))
    psi = psi[..., None]
    rho = rho[..., None]
    k = np.arange(N_CATEGORIES, dtype=float)

    floor = np.floor(psi)
    frac = psi - floor
    v_min = frac * (1.0 - frac)
    v_max = (psi - 1.0) * (5.0 - psi)
    cut = 0.75 * v_max / (v_max - v_min)
    p = (psi - 1.0) / 4.0

    # beta-binomial regime, rho < cut; a + b = (4 - r) / (r - 1) with
    # r = 4 Var / V_max, and r - 1 written so it stays exact near the cut
    excess = 4.0 * (v_max - v_min) * (cut - rho) / v_max
    with np.errstate(divide="ignore", invalid="ignore"):
        total = (3.0 - excess) / excess
        # past ~1e10 the beta-binomial is numerically the binomial
        use_bb = (rho < cut) & (total < 1e10)
        total = np.where(use_bb, total, 1.0)
        a = p * total
        b = (1.0 - p) * total
        log_bb = _LOG_BINOM4 + betaln(k + a, 4.0 - k + b) - betaln(a, b)

    # binomial / two-point mixture regime, rho >= cut
    with np.errstate(divide="ignore"):
        log_binom = _LOG_BINOM4 + k * np.log(p) + (4.0 - k) * np.log1p(-p)
    lower = floor - 1.0
    two_point = np.where(k == lower, 1.0 - frac, 0.0) + np.where(k == lower + 1.0, frac, 0.0)
    weight = np.where(rho >= cut, (rho - cut) / (1.0 - cut), 0.0)
    mix = weight * two_point + (1.0 - weight) * np.exp(log_binom)
    with np.errstate(divide="ignore"):
        log_mix = np.log(mix)

    out = np.where(use_bb, log_bb, log_mix)
    return out - logsumexp(out, axis=-1, keepdims=True)


def gsd_pmf(params: GsdParams) -> np.ndarray:
    """Probabilities of scores 1..5 under GSD(psi, rho)."""
    psi, rho = params.psi, params.rho
    if psi == 1.0 or psi == 5.0:
        out = np.zeros(N_CATEGORIES)
        out[int(psi) - 1] = 1.0
        return out
    return np.exp(gsd_log_pmf_array(psi, rho))


def gsd_moments(params: GsdParams) -> tuple[float, float]:
    pmf = gsd_pmf(params)
    mean = float(SCORES @ pmf)
    return mean, float((SCORES**2) @ pmf - mean**2)


def sample(params: GsdParams, n: int, seed: int) -> np.ndarray:
    """Counts of ``n`` independent GSD draws; deterministic for a given seed."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    return rng.multinomial(n, gsd_pmf(params)).astype(np.int64)


def mos(counts) -> float:
    """Mean opinion score of a score histogram."""
    k = as_counts(counts)
    n = k.sum()
    if n == 0:
        raise ValueError("MOS of an empty sample is undefined")
    return float(SCORES @ k / n)
