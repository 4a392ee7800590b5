"""Block-structured vectors, feasible sets, and diminishing step schedules.

The solver operates on a product set X = X_1 x ... x X_d of closed convex
blocks. This module provides the block bookkeeping, closed-form Euclidean
projections for the supported set kinds, and the (gamma_k, eta_k) step/
regularization schedules together with their validity checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

SET_KINDS = ("free", "nonnegative", "box", "ball")

#: Tolerance used by set-membership checks after projection.
MEMBERSHIP_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BlockStructure:
    """Partition of n coordinates into d contiguous blocks."""

    block_sizes: tuple[int, ...]
    offsets: tuple[int, ...]
    d: int
    n: int

    def block_range(self, i: int) -> tuple[int, int]:
        """Half-open coordinate range [start, stop) of block i."""
        start = self.offsets[i]
        return start, start + self.block_sizes[i]

    def block_slice(self, i: int) -> slice:
        start, stop = self.block_range(i)
        return slice(start, stop)

    def fence(self) -> np.ndarray:
        """Offsets with a trailing n, as an int64 array of length d + 1."""
        return np.asarray(self.offsets + (self.n,), dtype=np.int64)


def make_block_structure(block_sizes: Sequence[int]) -> BlockStructure:
    """Build a BlockStructure from per-block coordinate counts.

    Raises
    ------
    ValueError
        If the list is empty or any size is not a positive integer.
    """
    sizes = tuple(int(s) for s in block_sizes)
    if len(sizes) == 0:
        raise ValueError("block_sizes must be nonempty")
    if any(s < 1 for s in sizes):
        raise ValueError(f"block sizes must be >= 1, got {block_sizes}")
    offsets = tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
    return BlockStructure(block_sizes=sizes, offsets=offsets, d=len(sizes), n=sum(sizes))


def even_block_sizes(n: int, d: int) -> tuple[int, ...]:
    """Split n coordinates into d contiguous blocks of size ceil(n/d) plus a tail.

    The tail block absorbs the remainder and must stay nonempty, so d may not
    exceed what ceil(n/d)-sized leading blocks leave room for.
    """
    if d < 1 or n < 1:
        raise ValueError("n and d must be >= 1")
    if d == 1:
        return (n,)
    head = -(-n // d)
    tail = n - head * (d - 1)
    if tail < 1:
        raise ValueError(f"cannot split {n} coordinates into {d} blocks of size {head}")
    return (head,) * (d - 1) + (tail,)


@dataclass(frozen=True)
class BlockSetSpec:
    """Descriptor of one block's feasible set (nonempty, closed, convex)."""

    kind: str
    dimension: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SET_KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("set dimension must be >= 1")


def free_set(dimension: int) -> BlockSetSpec:
    return BlockSetSpec(kind="free", dimension=int(dimension))


def nonnegative_set(dimension: int) -> BlockSetSpec:
    return BlockSetSpec(kind="nonnegative", dimension=int(dimension))


def box_set(lower, upper) -> BlockSetSpec:
    lower = _readonly(np.atleast_1d(lower))
    upper = _readonly(np.atleast_1d(upper))
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("box bounds must be 1-d vectors of equal length")
    if np.any(lower > upper):
        raise ValueError("box requires lower <= upper componentwise")
    return BlockSetSpec(kind="box", dimension=lower.size, lower=lower, upper=upper)


def ball_set(center, radius: float) -> BlockSetSpec:
    center = _readonly(np.atleast_1d(center))
    radius = float(radius)
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    return BlockSetSpec(kind="ball", dimension=center.size, center=center, radius=radius)


def project_block(spec: BlockSetSpec, v) -> np.ndarray:
    """Euclidean projection of a block vector onto its feasible set.

    Closed forms for every supported kind: identity, clamp at zero,
    componentwise clamp, and radial scaling toward the ball center.
    Idempotent, and exact up to floating-point rounding.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.dimension,):
        raise ValueError(f"expected block of dimension {spec.dimension}, got shape {v.shape}")
    if spec.kind == "free":
        return v.copy()
    if spec.kind == "nonnegative":
        return np.maximum(v, 0.0)
    if spec.kind == "box":
        return np.clip(v, spec.lower, spec.upper)
    # ball
    delta = v - spec.center
    dist = math.sqrt(float(delta @ delta))
    if dist <= spec.radius:
        return v.copy()
    return spec.center + delta * (spec.radius / dist)


def set_contains(spec: BlockSetSpec, v, tol: float = MEMBERSHIP_TOL) -> bool:
    """Membership predicate used to verify projections and iterates."""
    v = np.asarray(v, dtype=float)
    if spec.kind == "free":
        return True
    if spec.kind == "nonnegative":
        return bool(np.all(v >= -tol))
    if spec.kind == "box":
        return bool(np.all(v >= spec.lower - tol) and np.all(v <= spec.upper + tol))
    delta = v - spec.center
    return math.sqrt(float(delta @ delta)) <= spec.radius + tol


def project_onto_blocks(blocks: BlockStructure, sets: Sequence[BlockSetSpec], x) -> np.ndarray:
    """Project a full vector blockwise onto the product set."""
    x = np.asarray(x, dtype=float)
    if x.shape != (blocks.n,):
        raise ValueError(f"expected vector of length {blocks.n}, got shape {x.shape}")
    out = np.empty_like(x)
    for i in range(blocks.d):
        sl = blocks.block_slice(i)
        out[sl] = project_block(sets[i], x[sl])
    return out


@dataclass(frozen=True)
class StepSchedule:
    """Diminishing step and regularization sequences.

    gamma_k = gamma0 * (k+1)^-a and eta_k = eta0 * (k+1)^-b, with averaging
    weights gamma_k^r. When ``delta`` is given it forces a = 0.5 + 0.1*delta
    and b = 0.5 - delta, the family for which the feasibility gap decays at
    order k^-(0.5-delta).
    """

    gamma0: float
    eta0: float
    a: float
    b: float
    r: float = 0.5
    delta: Optional[float] = None

    def __post_init__(self):
        if self.gamma0 <= 0 or self.eta0 <= 0:
            raise ValueError("gamma0 and eta0 must be positive")
        if self.delta is not None:
            object.__setattr__(self, "a", 0.5 + 0.1 * self.delta)
            object.__setattr__(self, "b", 0.5 - self.delta)


def make_schedule(gamma0: float, eta0: float, *, delta: Optional[float] = None,
                  a: Optional[float] = None, b: Optional[float] = None,
                  r: float = 0.5) -> StepSchedule:
    """Construct a schedule from either delta or explicit exponents (a, b)."""
    if delta is None and (a is None or b is None):
        raise ValueError("provide delta or both exponents a and b")
    return StepSchedule(gamma0=float(gamma0), eta0=float(eta0),
                        a=float(a) if a is not None else 0.0,
                        b=float(b) if b is not None else 0.0,
                        r=float(r),
                        delta=float(delta) if delta is not None else None)


def default_schedule(d: int, mu: float, *, delta: float = 0.25, r: float = 0.5) -> StepSchedule:
    """Default schedule for a problem with d blocks and outer modulus mu.

    Places gamma0*eta0 at half the validity bound d/mu. The product is split
    asymmetrically, gamma0 = 4*eta0: a smaller eta0 keeps the late
    regularization bias on the averaged iterate low without leaving the
    validity region (the symmetric split measurably underperforms at modest
    iteration budgets).
    """
    if d < 1 or mu <= 0:
        raise ValueError("need d >= 1 and mu > 0")
    product = 0.5 * d / mu
    gamma0 = 2.0 * math.sqrt(product)
    eta0 = 0.5 * math.sqrt(product)
    return StepSchedule(gamma0=gamma0, eta0=eta0, a=0.0, b=0.0, r=r, delta=delta)


def step_schedule_eval(s: StepSchedule, k: int) -> tuple[float, float, float]:
    """Return (gamma_k, eta_k, weight_k) with weight_k = gamma_k^r."""
    if k < 0:
        raise ValueError("iteration index must be >= 0")
    gamma_k = s.gamma0 * (k + 1) ** (-s.a)
    eta_k = s.eta0 * (k + 1) ** (-s.b)
    return gamma_k, eta_k, gamma_k ** s.r


@dataclass(frozen=True)
class ScheduleReport:
    """Outcome of the schedule validity checks, one named condition each."""

    conditions: tuple[tuple[str, bool], ...]
    passed: bool
    product_bound: float

    def failed(self) -> tuple[str, ...]:
        return tuple(name for name, ok in self.conditions if not ok)

    def render(self) -> str:
        lines = [f"{'PASS' if ok else 'FAIL'}  {name}" for name, ok in self.conditions]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def validate_schedule(s: StepSchedule, mu: float, d: int,
                      probabilities: Optional[Sequence[float]] = None) -> ScheduleReport:
    """Check the step-schedule exponent conditions against a problem.

    The product bound on gamma0*eta0 is d/mu under uniform block sampling and
    1/(mu*p_min) under explicit probabilities; the two coincide when sampling
    is uniform. Failures are reported, not raised.

    Parameters
    ----------
    s : StepSchedule
    mu : positive outer strong-convexity modulus.
    d : block count.
    probabilities : optional explicit per-block sampling probabilities.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    if probabilities is None:
        bound = d / mu
        bound_name = "gamma0*eta0<d/mu"
    else:
        p_min = float(np.min(np.asarray(probabilities, dtype=float)))
        if p_min <= 0:
            raise ValueError("sampling probabilities must be positive")
        bound = 1.0 / (mu * p_min)
        bound_name = "gamma0*eta0<1/(mu*p_min)"
    checks = [
        ("a>0", s.a > 0),
        ("b>0", s.b > 0),
        ("a+b<1", s.a + s.b < 1),
        ("b<a", s.b < s.a),
        ("a>0.5", s.a > 0.5),
        ("r<1", s.r < 1),
        ("a*r<1", s.a * s.r < 1),
        (bound_name, s.gamma0 * s.eta0 < bound),
        ("delta in (0,0.5)", s.delta is None or 0.0 < s.delta < 0.5),
    ]
    conditions = tuple((name, bool(ok)) for name, ok in checks)
    return ScheduleReport(conditions=conditions,
                          passed=all(ok for _, ok in conditions),
                          product_bound=bound)


class ScheduleError(ValueError):
    """Raised when a run is started with a schedule that fails validation."""

    def __init__(self, report: ScheduleReport):
        self.report = report
        super().__init__("invalid step schedule; failed conditions: "
                         + ", ".join(report.failed()))
