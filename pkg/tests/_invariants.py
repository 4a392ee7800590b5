"""Shared property suites: reusable bulk checks behind the invariant tests
and the acceptance gate."""

import numpy as np

from rbirg.core import (ball_set, box_set, free_set, make_block_structure,
                        make_schedule, nonnegative_set, project_block,
                        set_contains)
from rbirg.diagnostics import check_L_sandwich
from rbirg.problems import (LeastSquaresInstance, PenaltyInstance,
                            least_squares_problem, least_squares_value_subgrad,
                            penalty_value_subgrad, sq_norm_value_subgrad,
                            strongly_convex_quadratic_outer, linear_constraint)
from rbirg.solver import initial_state, rbirg_step, recompute_average


def _random_spec(kind, dim, rng):
    if kind == "free":
        return free_set(dim)
    if kind == "nonnegative":
        return nonnegative_set(dim)
    if kind == "box":
        lo = rng.normal(size=dim)
        return box_set(lo, lo + rng.uniform(0.1, 2.0, size=dim))
    return ball_set(rng.normal(size=dim), rng.uniform(0.2, 3.0))


def run_projection_suite(cases_per_kind=1000, seed=2024):
    """Idempotence, membership, and non-expansiveness per set kind."""
    rng = np.random.default_rng(seed)
    for kind in ("free", "nonnegative", "box", "ball"):
        for _ in range(cases_per_kind):
            dim = int(rng.integers(1, 6))
            spec = _random_spec(kind, dim, rng)
            u = rng.normal(scale=3.0, size=dim)
            v = rng.normal(scale=3.0, size=dim)
            pu, pv = project_block(spec, u), project_block(spec, v)
            assert set_contains(spec, pv, tol=1e-12), kind
            assert np.max(np.abs(project_block(spec, pv) - pv)) <= 1e-12, kind
            assert (np.linalg.norm(pu - pv)
                    <= np.linalg.norm(u - v) + 1e-12), kind


def _oracles_for_subgradient_suite(rng):
    A = rng.normal(size=(5, 4))
    inst = LeastSquaresInstance(A=A, b=rng.normal(size=5))
    pen = PenaltyInstance(constraints=(
        linear_constraint(rng.normal(size=4), 0.3),
        lambda x: (float(x @ x) - 2.0, 2.0 * np.asarray(x, dtype=float)),
    ))
    quad = strongly_convex_quadratic_outer(rng.normal(size=4), mu=1.7)
    return [
        ("least_squares", lambda x: least_squares_value_subgrad(inst, x), 0.0),
        ("sq_norm", sq_norm_value_subgrad, 2.0),
        ("penalty", lambda x: penalty_value_subgrad(pen, x), 0.0),
        ("quadratic_outer", quad, 1.7),
    ]


def run_subgradient_suite(pairs_per_oracle=1000, seed=99):
    """f(y) >= f(x) + s.(y-x) - 1e-9, plus the mu/2 ||y-x||^2 strengthening
    for the strongly convex oracles."""
    rng = np.random.default_rng(seed)
    for name, oracle, mu in _oracles_for_subgradient_suite(rng):
        for _ in range(pairs_per_oracle):
            x = rng.normal(scale=1.5, size=4)
            y = rng.normal(scale=1.5, size=4)
            fx, sx = oracle(x)
            fy, _ = oracle(y)
            bound = fx + float(sx @ (y - x)) + 0.5 * mu * float((y - x) @ (y - x))
            assert fy >= bound - 1e-9, name


def run_sandwich_suite(cases=1000, seed=5):
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        d = int(rng.integers(1, 7))
        blocks = make_block_structure(rng.integers(1, 5, size=d))
        p = rng.uniform(0.05, 1.0, size=d)
        p /= p.sum()
        x = rng.normal(size=blocks.n)
        y = rng.normal(size=blocks.n)
        assert check_L_sandwich(p, x, y, blocks).passed


def _mixed_set_instance(seed=31):
    rng = np.random.default_rng(seed)
    n = 16
    inst = LeastSquaresInstance(A=0.3 * rng.normal(size=(12, n)),
                                b=rng.normal(size=12))
    sizes = [2] * 8
    sets = []
    for i in range(8):
        if i % 4 == 0:
            sets.append(free_set(2))
        elif i % 4 == 1:
            sets.append(nonnegative_set(2))
        elif i % 4 == 2:
            sets.append(box_set([-0.5, -0.5], [0.5, 0.5]))
        else:
            sets.append(ball_set([0.1, 0.0], 0.75))
    return least_squares_problem(inst, block_sizes=sizes, sets=tuple(sets))


def run_one_block_update_suite(steps=10_000, seed=13):
    """Per step, only the sampled block moves; every iterate and average
    stays per-block feasible to 1e-10."""
    prob = _mixed_set_instance()
    sched = make_schedule(0.5, 0.25, delta=0.25, r=0.5)
    state = initial_state(prob, sched, x0=np.full(prob.blocks.n, 0.3), seed=seed)
    for t in range(steps):
        i = state.sampler.peek()
        prev = state.x
        state = rbirg_step(state, prob, sched)
        moved = np.nonzero(state.x != prev)[0]
        lo, hi = prob.blocks.block_range(i)
        assert np.all((moved >= lo) & (moved < hi)), f"step {t} touched {moved}"
        for j in range(prob.blocks.d):
            sl = prob.blocks.block_slice(j)
            assert set_contains(prob.sets[j], state.x[sl], tol=1e-10)
            if t % 100 == 0:
                assert set_contains(prob.sets[j], state.x_bar[sl], tol=1e-10)


def run_averaging_suite(iters=1000, seed=77, r=0.5):
    """Recursive running average equals the explicit weighted mean of the
    retained iterates to 1e-9 relative."""
    prob = _mixed_set_instance()
    sched = make_schedule(0.5, 0.25, delta=0.25, r=r)
    state = initial_state(prob, sched, seed=seed)
    history = [(sched.gamma0 ** sched.r, state.x.copy())]
    for _ in range(iters):
        state = rbirg_step(state, prob, sched)
        gamma_k = sched.gamma0 * (state.k + 1.0) ** (-sched.a)
        history.append((gamma_k ** sched.r, state.x.copy()))
    explicit = recompute_average(history)
    scale = max(1.0, float(np.linalg.norm(explicit)))
    assert np.linalg.norm(explicit - state.x_bar) <= 1e-9 * scale
