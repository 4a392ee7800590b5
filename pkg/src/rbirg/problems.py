"""Concrete bilevel problem instances and their subgradient oracles.

An oracle maps x to (value, subgradient). A BilevelProblem pairs an inner
oracle f with a strongly convex outer oracle g over a block-structured
feasible set. The two stock families are ill-posed least squares (outer
g = ||x||^2 selects the minimum-norm solution) and penalty reformulations
of nonlinearly constrained programs (f sums the positive parts of the
constraint functions).

Callers are responsible for the penalty reformulation's premise that the
original constrained problem is feasible; the library does not verify it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (BlockSetSpec, BlockStructure, even_block_sizes, free_set,
                   make_block_structure, project_onto_blocks)

Oracle = Callable[[np.ndarray], tuple[float, np.ndarray]]

#: Strong-convexity modulus of the squared-norm outer objective g(x) = ||x||^2.
SQ_NORM_MU = 2.0

#: Dense-factorization scale limit for the reference min-norm solver.
MIN_NORM_MAX_DIM = 2000


@dataclass(frozen=True)
class LeastSquaresInstance:
    """Dense linear model f(x) = ||A x - b||^2; A may be rank-deficient."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float, copy=True)
        b = np.array(self.b, dtype=float, copy=True).ravel()
        if A.ndim != 2:
            raise ValueError("A must be a 2-d matrix")
        if b.shape[0] != A.shape[0]:
            raise ValueError(f"b has length {b.shape[0]}, expected {A.shape[0]}")
        A.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]


def least_squares_value_subgrad(inst: LeastSquaresInstance, x) -> tuple[float, np.ndarray]:
    """Value ||Ax-b||^2 and gradient 2 A^T (Ax-b)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n,):
        raise ValueError(f"expected vector of length {inst.n}, got shape {x.shape}")
    r = inst.A @ x - inst.b
    return float(r @ r), 2.0 * (inst.A.T @ r)


def sq_norm_value_subgrad(x) -> tuple[float, np.ndarray]:
    """Value ||x||^2 and gradient 2x (strongly convex with modulus 2)."""
    x = np.asarray(x, dtype=float)
    return float(x @ x), 2.0 * x


def strongly_convex_quadratic_outer(c, mu: float) -> Oracle:
    """Oracle for g(x) = (mu/2) ||x - c||^2 with gradient mu (x - c)."""
    c = np.asarray(c, dtype=float).ravel()
    mu = float(mu)
    if mu <= 0:
        raise ValueError("mu must be positive")

    def oracle(x):
        x = np.asarray(x, dtype=float)
        delta = x - c
        return 0.5 * mu * float(delta @ delta), mu * delta

    return oracle


@dataclass(frozen=True)
class PenaltyInstance:
    """Constraint functions h_i with subgradient oracles, for f = sum max(0, h_i)."""

    constraints: tuple[Oracle, ...]

    def __post_init__(self):
        if len(self.constraints) == 0:
            raise ValueError("need at least one constraint oracle")

    @property
    def m(self) -> int:
        return len(self.constraints)


def penalty_value_subgrad(inst: PenaltyInstance, x) -> tuple[float, np.ndarray]:
    """Exact-penalty value sum_i max(0, h_i(x)) and one of its subgradients.

    At h_i(x) = 0 the zero vector is chosen from the subdifferential, so
    strictly feasible and boundary points both report a zero subgradient.
    """
    x = np.asarray(x, dtype=float)
    total = 0.0
    sub = np.zeros_like(x)
    for h in inst.constraints:
        value, grad = h(x)
        if value > 0.0:
            total += value
            sub += np.asarray(grad, dtype=float)
    return total, sub


def linear_constraint(coeffs, offset: float) -> Oracle:
    """h(x) = coeffs . x + offset as a constraint oracle."""
    coeffs = np.asarray(coeffs, dtype=float).ravel()

    def oracle(x):
        return float(coeffs @ np.asarray(x, dtype=float)) + offset, coeffs.copy()

    return oracle


@dataclass(frozen=True)
class BilevelProblem:
    """Inner oracle f, outer oracle g (mu-strongly convex), and block geometry.

    ``least_squares`` and ``quad_center`` are structure hints: when both are
    set the inner objective is ||Ax-b||^2 and the outer one is
    (mu/2)||x-c||^2, which lets the solver route the run through its
    incremental-residual fast path. Hand-written oracles leave them None and
    take the generic path. The optional C_f/C_g/M bounds are diagnostic
    metadata only; iterations never read them.
    """

    inner_oracle: Oracle
    outer_oracle: Oracle
    mu: float
    blocks: BlockStructure
    sets: tuple[BlockSetSpec, ...]
    bound_Cf: Optional[float] = None
    bound_Cg: Optional[float] = None
    bound_M: Optional[float] = None
    least_squares: Optional[LeastSquaresInstance] = None
    quad_center: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if len(self.sets) != self.blocks.d:
            raise ValueError(f"need one set per block: {len(self.sets)} != {self.blocks.d}")
        for size, spec in zip(self.blocks.block_sizes, self.sets):
            if spec.dimension != size:
                raise ValueError(f"set dimension {spec.dimension} != block size {size}")

    @property
    def structured(self) -> bool:
        return self.least_squares is not None and self.quad_center is not None

    def project(self, x) -> np.ndarray:
        return project_onto_blocks(self.blocks, self.sets, x)


def _resolve_blocks(n: int, block_sizes=None, num_blocks: Optional[int] = None) -> BlockStructure:
    if block_sizes is not None:
        blocks = make_block_structure(block_sizes)
    elif num_blocks is not None:
        blocks = make_block_structure(even_block_sizes(n, num_blocks))
    else:
        blocks = make_block_structure([n])
    if blocks.n != n:
        raise ValueError(f"block sizes sum to {blocks.n}, expected {n}")
    return blocks


def least_squares_problem(inst: LeastSquaresInstance, *, block_sizes=None,
                          num_blocks: Optional[int] = None,
                          sets: Optional[Sequence[BlockSetSpec]] = None,
                          outer_center=None, outer_mu: float = SQ_NORM_MU) -> BilevelProblem:
    """Bilevel problem: minimize (mu/2)||x-c||^2 over argmin ||Ax-b||^2.

    Defaults reproduce the minimum-norm selection (c = 0, mu = 2, free
    blocks). The structure hints are populated so the solver can use the
    per-block residual fast path.
    """
    blocks = _resolve_blocks(inst.n, block_sizes, num_blocks)
    if sets is None:
        sets = tuple(free_set(s) for s in blocks.block_sizes)
    else:
        sets = tuple(sets)
    center = np.zeros(inst.n) if outer_center is None else np.asarray(outer_center, dtype=float)
    center = center.copy()
    center.flags.writeable = False
    return BilevelProblem(
        inner_oracle=lambda x: least_squares_value_subgrad(inst, x),
        outer_oracle=strongly_convex_quadratic_outer(center, outer_mu),
        mu=float(outer_mu),
        blocks=blocks,
        sets=sets,
        least_squares=inst,
        quad_center=center,
    )


def penalty_problem(inst: PenaltyInstance, *, outer_center, outer_mu: float,
                    blocks: BlockStructure, sets: Sequence[BlockSetSpec]) -> BilevelProblem:
    """Bilevel form of a constrained program via the exact penalty f."""
    return BilevelProblem(
        inner_oracle=lambda x: penalty_value_subgrad(inst, x),
        outer_oracle=strongly_convex_quadratic_outer(outer_center, outer_mu),
        mu=float(outer_mu),
        blocks=blocks,
        sets=tuple(sets),
    )


def min_norm_oracle(inst: LeastSquaresInstance) -> np.ndarray:
    """Minimum-Euclidean-norm least-squares solution by dense SVD factorization.

    This is the reference answer for the minimum-norm bilevel selection and
    is computed independently of the iterative solvers. Refuses instances
    beyond the dense desk scale.
    """
    if inst.n > MIN_NORM_MAX_DIM:
        raise ValueError(f"n = {inst.n} exceeds the dense oracle limit {MIN_NORM_MAX_DIM}")
    x, *_ = np.linalg.lstsq(inst.A, inst.b, rcond=None)
    return x


def least_squares_optimum(inst: LeastSquaresInstance) -> float:
    """Optimal inner value f* = ||A x* - b||^2 at the min-norm solution."""
    x = min_norm_oracle(inst)
    r = inst.A @ x - inst.b
    return float(r @ r)


def load_matrix(path) -> np.ndarray:
    """Dense matrix from a text file: one row per line, whitespace-separated."""
    return np.loadtxt(path, dtype=float, ndmin=2)


def load_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float).ravel()


def load_least_squares(matrix_path, vector_path) -> LeastSquaresInstance:
    return LeastSquaresInstance(A=load_matrix(matrix_path), b=load_vector(vector_path))


# Built-in penalty instances, addressable by name from the experiment runner.

def _halfplane_problem() -> BilevelProblem:
    # minimize ||x - (2,0)||^2 subject to x1 <= 1 on the box [-5, 5]^2;
    # constrained optimum (1, 0).
    from .core import box_set
    inst = PenaltyInstance(constraints=(linear_constraint([1.0, 0.0], -1.0),))
    blocks = make_block_structure([1, 1])
    sets = (box_set([-5.0], [5.0]), box_set([-5.0], [5.0]))
    return penalty_problem(inst, outer_center=np.array([2.0, 0.0]), outer_mu=2.0,
                           blocks=blocks, sets=sets)


BUILTIN_PENALTY_PROBLEMS = {
    "halfplane": _halfplane_problem,
}

#: Analytic reference solution and optimal penalty value per builtin name.
BUILTIN_PENALTY_REFERENCES = {
    "halfplane": (np.array([1.0, 0.0]), 0.0),
}


def builtin_penalty_problem(name: str) -> BilevelProblem:
    try:
        factory = BUILTIN_PENALTY_PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown builtin penalty instance {name!r}; "
                         f"available: {sorted(BUILTIN_PENALTY_PROBLEMS)}") from None
    return factory()
