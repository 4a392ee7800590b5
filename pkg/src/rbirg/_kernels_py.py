"""NumPy implementation of the solver's hot loop.

This is the fallback selected at import when the compiled extension is not
available, and the reference the extension is tested against. Both backends
implement the same contract: advance the iterate, the residual, and the
weighted running average in place over a span of iterations whose block
indices were drawn up front.

Set kinds are collapsed to two projection codes: 0 clamps componentwise
against (lo, hi) bounds (covers free, nonnegative, and box blocks) and
1 rescales radially into a ball.
"""

from __future__ import annotations

import math

import numpy as np

KIND_CLAMP = 0
KIND_BALL = 1


def advance_least_squares(A, b, resid, x, xbar, S, k0, idx, fence, kinds,
                          lo, hi, ball_center, ball_radius, c, mu,
                          gamma0, a_exp, eta0, b_exp, r_exp,
                          recompute_every):
    """Run len(idx) block steps of the regularized scheme on a least-squares
    inner objective, maintaining resid = A@x - b incrementally.

    Mutates resid, x, and xbar; returns the updated weight accumulator S.
    A full residual recomputation fires whenever the global iteration count
    crosses a multiple of recompute_every, which bounds drift from the
    rank-width incremental updates.
    """
    count = idx.shape[0]
    for t in range(count):
        k = k0 + t
        gam = gamma0 * (k + 1.0) ** (-a_exp)
        eta = eta0 * (k + 1.0) ** (-b_exp)
        blk = idx[t]
        s, e = fence[blk], fence[blk + 1]
        Ablk = A[:, s:e]
        g = 2.0 * (Ablk.T @ resid)
        g += (eta * mu) * (x[s:e] - c[s:e])
        v = x[s:e] - gam * g
        if kinds[blk] == KIND_CLAMP:
            v = np.clip(v, lo[s:e], hi[s:e])
        else:
            dvec = v - ball_center[s:e]
            dist = math.sqrt(float(dvec @ dvec))
            if dist > ball_radius[blk]:
                v = ball_center[s:e] + dvec * (ball_radius[blk] / dist)
        delta = v - x[s:e]
        x[s:e] = v
        resid += Ablk @ delta
        w = (gamma0 * (k + 2.0) ** (-a_exp)) ** r_exp
        S_new = S + w
        xbar[:] = (S * xbar + w * x) / S_new
        S = S_new
        if recompute_every > 0 and (k + 1) % recompute_every == 0:
            resid[:] = A @ x - b
    return S
