"""Reference schemes: classical two-loop regularization and full-vector
iterative regularization.

The two-loop baseline fixes the regularization weight eta, solves
minimize f + eta*g over X by projected subgradient descent, and repeats over
a decreasing eta sequence. It is the scheme the single-loop solver is meant
to replace; the sweep reports expose its iteration cost. full_irg is the
single-block specialization of the randomized scheme, used as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels_py
from .core import (StepSchedule, box_set, free_set, make_block_structure,
                   project_onto_blocks)
from .problems import BilevelProblem
from .solver import (RESIDUAL_RECOMPUTE_EVERY, RunTrace, _ls_workspace,
                     run_rbirg)

try:
    from . import _kernels as _kernels_ext
except ImportError:
    _kernels_ext = None

#: Step exponent of the inner projected-subgradient solver for fixed eta.
INNER_STEP_EXPONENT = 0.525


@dataclass(frozen=True)
class RegularizedSolveReport:
    """One fixed-eta solve: the approximate minimizer of f + eta*g over X."""

    eta: float
    x_eta: np.ndarray
    inner_iterations: int
    final_step_norm: float


def merge_to_single_block(prob: BilevelProblem) -> BilevelProblem:
    """View a problem as one block covering all coordinates.

    Free and box-like blocks concatenate into a single box; ball blocks have
    no exact single-block equivalent and are rejected (unless the problem is
    already single-block).
    """
    if prob.blocks.d == 1:
        return prob
    n = prob.blocks.n
    if all(s.kind == "free" for s in prob.sets):
        merged = free_set(n)
    else:
        lower = np.full(n, -np.inf)
        upper = np.full(n, np.inf)
        for i, spec in enumerate(prob.sets):
            sl = prob.blocks.block_slice(i)
            if spec.kind == "free":
                continue
            if spec.kind == "nonnegative":
                lower[sl] = 0.0
            elif spec.kind == "box":
                lower[sl] = spec.lower
                upper[sl] = spec.upper
            else:
                raise ValueError("ball blocks cannot be merged into one block")
        merged = box_set(lower, upper)
    return replace(prob, blocks=make_block_structure([n]), sets=(merged,))


def full_irg(prob: BilevelProblem, sched: StepSchedule, N: int, x0=None,
             seed: int = 0, checkpoints: Optional[Sequence[int]] = None,
             **kwargs) -> RunTrace:
    """Full-vector iterative regularized subgradient descent.

    Identical contract to run_rbirg with a single block spanning all
    coordinates; traces match that call bitwise for equal seeds.
    """
    return run_rbirg(merge_to_single_block(prob), sched, N, x0=x0, seed=seed,
                     checkpoints=checkpoints, **kwargs)


def solve_regularized(prob: BilevelProblem, eta: float, n_inner: int,
                      step0: float, seed: int = 0, x0=None) -> RegularizedSolveReport:
    """Approximately minimize f + eta*g over X by projected subgradient.

    Steps are step0/(k+1)^0.525, full-vector, projected blockwise. The solve
    is deterministic; ``seed`` is accepted for interface parity with the
    randomized schemes and ignored.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if step0 <= 0:
        raise ValueError("step0 must be positive")
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    x = prob.project(np.zeros(prob.blocks.n) if x0 is None else np.asarray(x0, float))

    structured = prob.structured
    if structured:
        try:
            merged = merge_to_single_block(prob)
        except ValueError:
            structured = False
    if structured:
        x, step_norm = _solve_regularized_structured(merged, eta, n_inner, step0, x)
    else:
        x, step_norm = _solve_regularized_generic(prob, eta, n_inner, step0, x)
    return RegularizedSolveReport(eta=float(eta), x_eta=x,
                                  inner_iterations=n_inner,
                                  final_step_norm=step_norm)


def _solve_regularized_structured(prob, eta, n_inner, step0, x):
    # Fixed eta is the b = 0 schedule; a single merged block makes each
    # kernel step a full-vector update.
    kernel = _kernels_ext if _kernels_ext is not None else _kernels_py
    ws = _ls_workspace(prob)
    resid = ws["A"] @ x - ws["b"]
    xbar = x.copy()  # maintained by the kernel, unused here
    idx = np.zeros(n_inner, dtype=np.int64)

    def advance(k0, span):
        return kernel.advance_least_squares(
            ws["A"], ws["b"], resid, x, xbar, 1.0, k0, span, ws["fence"],
            ws["kinds"], ws["lo"], ws["hi"], ws["ball_center"],
            ws["ball_radius"], ws["c"], ws["mu"], step0, INNER_STEP_EXPONENT,
            eta, 0.0, 0.0, RESIDUAL_RECOMPUTE_EVERY)

    advance(0, idx[: n_inner - 1])
    x_prev = x.copy()
    advance(n_inner - 1, idx[n_inner - 1:])
    return x, float(np.linalg.norm(x - x_prev))


def _solve_regularized_generic(prob, eta, n_inner, step0, x):
    x_prev = x
    for k in range(n_inner):
        gam = step0 * (k + 1.0) ** (-INNER_STEP_EXPONENT)
        _, gf = prob.inner_oracle(x)
        _, gg = prob.outer_oracle(x)
        x_prev = x
        x = project_onto_blocks(prob.blocks, prob.sets, x - gam * (gf + eta * gg))
    return x, float(np.linalg.norm(x - x_prev))


def two_loop_sweep(prob: BilevelProblem, etas: Sequence[float], n_inner: int,
                   step0: float, warm_start: bool = False,
                   seed: int = 0) -> list[RegularizedSolveReport]:
    """Solve a strictly decreasing eta sequence, optionally warm-starting
    each solve at the previous solution."""
    etas = [float(e) for e in etas]
    if not etas:
        raise ValueError("etas must be nonempty")
    if any(e <= 0 for e in etas):
        raise ValueError("etas must be positive")
    if any(e2 >= e1 for e1, e2 in zip(etas, etas[1:])):
        raise ValueError("etas must be strictly decreasing")
    reports = []
    x0 = None
    for eta in etas:
        report = solve_regularized(prob, eta, n_inner, step0, seed=seed, x0=x0)
        reports.append(report)
        if warm_start:
            x0 = report.x_eta
    return reports


SWEEP_HEADER = "eta,dist_to_ref,inner_iterations,final_step_norm"


def sweep_to_csv(reports: Sequence[RegularizedSolveReport], x_ref=None) -> str:
    lines = [SWEEP_HEADER]
    for rep in reports:
        dist = ("" if x_ref is None
                else f"{float(np.linalg.norm(rep.x_eta - x_ref)):.17g}")
        lines.append(f"{rep.eta:.17g},{dist},{rep.inner_iterations},"
                     f"{rep.final_step_norm:.17g}")
    return "\n".join(lines) + "\n"
