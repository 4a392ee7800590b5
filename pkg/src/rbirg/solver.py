"""Randomized block iterative regularized gradient descent.

One iteration samples a block i_k, takes a projected step on that block
against the combined direction (subgradient of f) + eta_k * (subgradient of
g), and folds the new iterate into a gamma_k^r-weighted running average.
The averaged iterate is the quantity with the convergence-rate guarantee.

Runs are reproducible: block indices come from a counter-based splitmix64
generator whose stream is platform-independent, and identical (problem,
schedule, N, x0, seed) inputs produce bitwise-identical traces on a given
install. Structured least-squares problems are routed through a compiled
kernel when the extension is importable and a NumPy twin otherwise;
arbitrary Python oracles use the generic path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels_py
from .core import (ScheduleError, StepSchedule, project_block, step_schedule_eval,
                   validate_schedule)
from .problems import BilevelProblem

try:
    from . import _kernels as _kernels_ext
except ImportError:
    _kernels_ext = None

#: Name of the kernel implementation used for structured problems by default.
DEFAULT_BACKEND = "ext" if _kernels_ext is not None else "numpy"

BACKENDS = ("ext", "numpy", "generic")

#: Global iteration period of the full residual recomputation that bounds
#: drift of the incrementally maintained A@x - b.
RESIDUAL_RECOMPUTE_EVERY = 10_000


def have_extension() -> bool:
    return _kernels_ext is not None


# --------------------------------------------------------------------------
# Counter-based RNG. splitmix64: the t-th output mixes seed + (t+1)*GOLDEN
# through two xor-multiply rounds. Stateless in the counter, so streams can
# be generated in bulk and are identical across platforms.

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = float(2.0 ** -53)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def splitmix64_uniform(seed: int, start: int, count: int) -> np.ndarray:
    """Doubles in [0, 1) for counters start..start+count-1 of the seed's stream."""
    with np.errstate(over="ignore"):
        t = (np.arange(start + 1, start + count + 1, dtype=np.uint64)
             * _GOLDEN + np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        bits = _mix64(t)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV53


@dataclass
class BlockSampler:
    """I.i.d. categorical block sampling by inverse CDF over cumulative p."""

    probabilities: np.ndarray
    seed: int
    counter: int = 0
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float, copy=True).ravel()
        if p.size < 1 or np.any(p <= 0):
            raise ValueError("block probabilities must be positive")
        if abs(float(p.sum()) - 1.0) > 1e-12:
            raise ValueError(f"block probabilities sum to {p.sum()!r}, expected 1")
        p.flags.writeable = False
        self.probabilities = p
        cdf = np.cumsum(p)
        cdf[-1] = 1.0  # guard against cumsum rounding just below 1
        cdf.flags.writeable = False
        self._cdf = cdf

    @property
    def d(self) -> int:
        return self.probabilities.size

    def indices_at(self, start: int, count: int) -> np.ndarray:
        """Block indices for a counter span, without touching sampler state."""
        u = splitmix64_uniform(self.seed, start, count)
        return np.searchsorted(self._cdf, u, side="right").astype(np.int64)

    def peek(self) -> int:
        return int(self.indices_at(self.counter, 1)[0])

    def draw(self, count: int) -> np.ndarray:
        out = self.indices_at(self.counter, count)
        self.counter += count
        return out

    def sample(self) -> int:
        return int(self.draw(1)[0])

    def advanced(self, count: int) -> "BlockSampler":
        return BlockSampler(self.probabilities, self.seed, self.counter + count)


def uniform_sampler(d: int, seed: int) -> BlockSampler:
    return BlockSampler(np.full(d, 1.0 / d), seed)


def sample_block(sampler: BlockSampler) -> int:
    """Draw one block index (0-based), advancing the sampler state."""
    return sampler.sample()


# --------------------------------------------------------------------------


@dataclass
class SolverState:
    """Iterate x_k, weighted average xbar_k, weight accumulator S_k."""

    x: np.ndarray
    x_bar: np.ndarray
    S: float
    k: int
    sampler: BlockSampler


def initial_state(prob: BilevelProblem, sched: StepSchedule, x0=None,
                  seed: int = 0, probabilities=None) -> SolverState:
    """State at k = 0: x0 projected blockwise, S_0 = gamma0^r, xbar_0 = x_0."""
    if x0 is None:
        x0 = np.zeros(prob.blocks.n)
    x = prob.project(np.asarray(x0, dtype=float))
    sampler = (uniform_sampler(prob.blocks.d, seed) if probabilities is None
               else BlockSampler(probabilities, seed))
    if sampler.d != prob.blocks.d:
        raise ValueError(f"{sampler.d} probabilities for {prob.blocks.d} blocks")
    return SolverState(x=x, x_bar=x.copy(), S=sched.gamma0 ** sched.r, k=0,
                       sampler=sampler)


def rbirg_step(state: SolverState, prob: BilevelProblem,
               sched: StepSchedule) -> SolverState:
    """One iteration through the generic oracle path, returned functionally.

    Exactly one block of x changes. An oracle failure propagates with the
    input state untouched (the sampler draw is only committed on success).
    """
    k = state.k
    i = state.sampler.peek()
    gamma_k, eta_k, _ = step_schedule_eval(sched, k)
    _, gf = prob.inner_oracle(state.x)
    _, gg = prob.outer_oracle(state.x)
    sl = prob.blocks.block_slice(i)
    v = state.x[sl] - gamma_k * (gf[sl] + eta_k * gg[sl])
    v = project_block(prob.sets[i], v)
    x_new = state.x.copy()
    x_new[sl] = v
    _, _, w = step_schedule_eval(sched, k + 1)
    S_new = state.S + w
    xbar_new = (state.S * state.x_bar + w * x_new) / S_new
    return SolverState(x=x_new, x_bar=xbar_new, S=S_new, k=k + 1,
                       sampler=state.sampler.advanced(1))


def _advance_generic(prob, sched, x, xbar, S, k0, idx):
    """Oracle-path twin of the structured kernels: full subgradient, sliced."""
    for t in range(idx.shape[0]):
        k = k0 + t
        gamma_k, eta_k, _ = step_schedule_eval(sched, k)
        i = int(idx[t])
        sl = prob.blocks.block_slice(i)
        _, gf = prob.inner_oracle(x)
        _, gg = prob.outer_oracle(x)
        v = x[sl] - gamma_k * (gf[sl] + eta_k * gg[sl])
        x[sl] = project_block(prob.sets[i], v)
        w = (sched.gamma0 * (k + 2.0) ** (-sched.a)) ** sched.r
        S_new = S + w
        xbar[:] = (S * xbar + w * x) / S_new
        S = S_new
    return S


def _ls_workspace(prob: BilevelProblem) -> dict:
    """Arrays the structured kernels consume, derived once per run."""
    inst = prob.least_squares
    n = prob.blocks.n
    d = prob.blocks.d
    kinds = np.zeros(d, dtype=np.int8)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    ball_center = np.zeros(n)
    ball_radius = np.zeros(d)
    for i, spec in enumerate(prob.sets):
        sl = prob.blocks.block_slice(i)
        if spec.kind == "nonnegative":
            lo[sl] = 0.0
        elif spec.kind == "box":
            lo[sl] = spec.lower
            hi[sl] = spec.upper
        elif spec.kind == "ball":
            kinds[i] = _kernels_py.KIND_BALL
            ball_center[sl] = spec.center
            ball_radius[i] = spec.radius
    return {
        "A": np.asfortranarray(inst.A, dtype=np.float64),
        "b": np.ascontiguousarray(inst.b, dtype=np.float64),
        "fence": prob.blocks.fence(),
        "kinds": kinds,
        "lo": lo,
        "hi": hi,
        "ball_center": ball_center,
        "ball_radius": ball_radius,
        "c": np.ascontiguousarray(prob.quad_center, dtype=np.float64),
        "mu": float(prob.mu),
    }


def _resolve_backend(prob: BilevelProblem, backend: Optional[str]) -> str:
    if backend is None:
        return DEFAULT_BACKEND if prob.structured else "generic"
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend == "ext" and _kernels_ext is None:
        raise RuntimeError("compiled kernels are not available in this install")
    if backend in ("ext", "numpy") and not prob.structured:
        raise ValueError("structured backends require a least-squares problem "
                         "with a quadratic outer objective")
    return backend


class _Driver:
    """Advances solver state over iteration spans on the selected backend."""

    def __init__(self, prob, sched, state: SolverState, idx: np.ndarray,
                 backend: str, recompute_every: int):
        self.prob = prob
        self.sched = sched
        self.state = state
        self.idx = idx
        self.backend = backend
        self.recompute_every = recompute_every
        if backend == "generic":
            self.ws = None
        else:
            self.ws = _ls_workspace(prob)
            self.resid = self.ws["A"] @ state.x - self.ws["b"]

    def advance_to(self, k_stop: int):
        st = self.state
        if k_stop <= st.k:
            return
        span = self.idx[st.k:k_stop]
        if self.backend == "generic":
            st.S = _advance_generic(self.prob, self.sched, st.x, st.x_bar,
                                    st.S, st.k, span)
        else:
            kernel = (_kernels_ext if self.backend == "ext" else _kernels_py)
            ws = self.ws
            st.S = kernel.advance_least_squares(
                ws["A"], ws["b"], self.resid, st.x, st.x_bar, st.S, st.k,
                span, ws["fence"], ws["kinds"], ws["lo"], ws["hi"],
                ws["ball_center"], ws["ball_radius"], ws["c"], ws["mu"],
                self.sched.gamma0, self.sched.a, self.sched.eta0, self.sched.b,
                self.sched.r, self.recompute_every)
        st.k = k_stop


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    k: int
    f_xbar: float
    g_xbar: float
    f_x: float
    g_x: float
    dist_ref: Optional[float] = None


@dataclass
class RunTrace:
    """Per-checkpoint record of a run, plus the final solver state."""

    rows: list[TraceRow]
    snapshots: dict[int, np.ndarray]
    final: SolverState

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    def checkpoint_ks(self) -> np.ndarray:
        return np.array([row.k for row in self.rows], dtype=np.int64)


TRACE_HEADER = "k,f_xbar,g_xbar,f_x,g_x,dist_ref"


def trace_to_csv(trace: RunTrace) -> str:
    lines = [TRACE_HEADER]
    for row in trace.rows:
        dist = "" if row.dist_ref is None else f"{row.dist_ref:.17g}"
        lines.append(f"{row.k},{row.f_xbar:.17g},{row.g_xbar:.17g},"
                     f"{row.f_x:.17g},{row.g_x:.17g},{dist}")
    return "\n".join(lines) + "\n"


def default_checkpoints(N: int) -> tuple[int, ...]:
    """Log-spaced iteration marks: {1, 2, 5} x 10^j up to and including N."""
    ks = {N}
    scale = 1
    while scale <= N:
        for lead in (1, 2, 5):
            if lead * scale <= N:
                ks.add(lead * scale)
        scale *= 10
    return tuple(sorted(ks))


def _trace_row(prob, k, x, xbar, x_ref) -> TraceRow:
    f_xbar, _ = prob.inner_oracle(xbar)
    g_xbar, _ = prob.outer_oracle(xbar)
    f_x, _ = prob.inner_oracle(x)
    g_x, _ = prob.outer_oracle(x)
    dist = None if x_ref is None else float(np.linalg.norm(xbar - x_ref))
    return TraceRow(k=k, f_xbar=float(f_xbar), g_xbar=float(g_xbar),
                    f_x=float(f_x), g_x=float(g_x), dist_ref=dist)


def run_rbirg(prob: BilevelProblem, sched: StepSchedule, N: int, x0=None,
              seed: int = 0, checkpoints: Optional[Sequence[int]] = None,
              probabilities=None, x_ref=None,
              snapshot_ks: Optional[Sequence[int]] = None,
              backend: Optional[str] = None,
              recompute_every: int = RESIDUAL_RECOMPUTE_EVERY) -> RunTrace:
    """Run N iterations and record f/g values at the requested checkpoints.

    Refuses to start when the schedule fails validation against the
    problem's modulus, block count, and sampling probabilities. x0 defaults
    to the origin and is projected blockwise on entry either way. When
    ``x_ref`` is given, each row also carries ||xbar_k - x_ref||; iterations
    listed in ``snapshot_ks`` store a copy of xbar_k in the trace.

    Backends: "ext" (compiled), "numpy" (fallback twin), "generic" (oracle
    calls). None selects the fastest available path for the problem.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    report = validate_schedule(sched, prob.mu, prob.blocks.d, probabilities)
    if not report.passed:
        raise ScheduleError(report)
    backend = _resolve_backend(prob, backend)

    checkpoints = default_checkpoints(N) if checkpoints is None else tuple(checkpoints)
    if any(k < 0 or k > N for k in checkpoints):
        raise ValueError("checkpoints must lie in [0, N]")
    snapshot_ks = tuple(snapshot_ks) if snapshot_ks is not None else ()
    if any(k < 0 or k > N for k in snapshot_ks):
        raise ValueError("snapshot iterations must lie in [0, N]")

    state = initial_state(prob, sched, x0=x0, seed=seed, probabilities=probabilities)
    if x_ref is not None:
        x_ref = np.asarray(x_ref, dtype=float)
    idx = state.sampler.draw(N)
    driver = _Driver(prob, sched, state, idx, backend, recompute_every)

    cp_set, snap_set = set(checkpoints), set(snapshot_ks)
    rows: list[TraceRow] = []
    snapshots: dict[int, np.ndarray] = {}
    for mark in sorted(cp_set | snap_set | {N}):
        driver.advance_to(mark)
        if mark in cp_set:
            rows.append(_trace_row(prob, mark, state.x, state.x_bar, x_ref))
        if mark in snap_set:
            snapshots[mark] = state.x_bar.copy()
    driver.advance_to(N)
    return RunTrace(rows=rows, snapshots=snapshots, final=state)


def recompute_average(history: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Explicitly weighted mean of retained iterates (test-scale cross-check).

    ``history`` holds (gamma_t^r, x_t) pairs for t = 0..k; the result equals
    the recursively maintained xbar_k up to rounding.
    """
    history = list(history)
    if not history:
        raise ValueError("history must be nonempty")
    total = float(sum(w for w, _ in history))
    acc = np.zeros_like(np.asarray(history[0][1], dtype=float))
    for w, x in history:
        acc += (w / total) * np.asarray(x, dtype=float)
    return acc
