"""Executable counterparts of the quantities driving the convergence analysis.

The probability-weighted squared block distance L(x, y) and its norm
sandwich, the inner-level feasibility gap against an oracle optimum, and
log-log slope fitting of gap-vs-iteration decay.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BlockStructure
from .solver import RunTrace


def weighted_distance_L(probs, x, y, blocks: BlockStructure) -> float:
    """L(x, y) = sum_i (1/p_i) ||x_i - y_i||^2 over the block partition."""
    p = np.asarray(probs, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if p.size != blocks.d:
        raise ValueError(f"{p.size} probabilities for {blocks.d} blocks")
    if np.any(p <= 0) or abs(float(p.sum()) - 1.0) > 1e-12:
        raise ValueError("probabilities must be positive and sum to 1")
    if x.shape != (blocks.n,) or y.shape != (blocks.n,):
        raise ValueError(f"vectors must have length {blocks.n}")
    total = 0.0
    for i in range(blocks.d):
        sl = blocks.block_slice(i)
        delta = x[sl] - y[sl]
        total += float(delta @ delta) / p[i]
    return total


@dataclass(frozen=True)
class SandwichReport:
    """p_min*L <= ||x-y||^2 <= p_max*L, with the two bound residuals."""

    L: float
    sq_dist: float
    lower: float
    upper: float
    lower_residual: float
    upper_residual: float
    passed: bool


def check_L_sandwich(probs, x, y, blocks: BlockStructure,
                     tol: float = 1e-12) -> SandwichReport:
    """Verify the norm sandwich around the weighted block distance.

    The weights 1/p_i lie in [1/p_max, 1/p_min], so the squared Euclidean
    distance is pinched between p_min*L and p_max*L; equality on both sides
    under uniform probabilities.
    """
    p = np.asarray(probs, dtype=float).ravel()
    L = weighted_distance_L(p, x, y, blocks)
    delta = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    sq = float(delta @ delta)
    lower = float(p.min()) * L
    upper = float(p.max()) * L
    return SandwichReport(L=L, sq_dist=sq, lower=lower, upper=upper,
                          lower_residual=sq - lower, upper_residual=upper - sq,
                          passed=(lower - tol <= sq <= upper + tol))


def feasibility_gap(trace: RunTrace, f_star: float) -> list[tuple[int, float]]:
    """Per-checkpoint inner-level gap f(xbar_k) - f*.

    f_star must come from an oracle independent of the run (a dense
    factorization, or 0 for consistent systems).
    """
    if not trace.rows:
        raise ValueError("trace has no checkpoint rows")
    return [(row.k, row.f_xbar - f_star) for row in trace.rows]


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log(gap) against log(k)."""

    slope: float
    intercept: float
    k_range: tuple[int, int]
    points_used: int
    points_excluded: int


def fit_rate_slope(gaps: Sequence[tuple[int, float]], k_min: int = 1) -> RateFit:
    """Fit the decay exponent of a gap sequence on a log-log scale.

    Checkpoints below k_min and nonpositive gaps are excluded (the excluded
    count is reported); at least 3 usable points are required. A slope of -s
    means the gap decays like k^-s over the fitted range.
    """
    usable = [(k, g) for k, g in gaps if k >= k_min and g > 0]
    excluded = sum(1 for k, g in gaps if k >= k_min and g <= 0)
    if len(usable) < 3:
        raise ValueError(f"need at least 3 positive gaps at k >= {k_min}, "
                         f"have {len(usable)}")
    ks = np.array([k for k, _ in usable], dtype=float)
    gs = np.array([g for _, g in usable], dtype=float)
    slope, intercept = np.polyfit(np.log(ks), np.log(gs), 1)
    return RateFit(slope=float(slope), intercept=float(intercept),
                   k_range=(int(ks.min()), int(ks.max())),
                   points_used=len(usable), points_excluded=excluded)


def rate_fit_footer(fit: RateFit) -> str:
    """CSV footer block appended to experiment traces."""
    return (f"#fit,slope,{fit.slope:.17g}\n"
            f"#fit,intercept,{fit.intercept:.17g}\n"
            f"#fit,k_min,{fit.k_range[0]}\n"
            f"#fit,k_max,{fit.k_range[1]}\n"
            f"#fit,points_used,{fit.points_used}\n"
            f"#fit,points_excluded,{fit.points_excluded}\n")
