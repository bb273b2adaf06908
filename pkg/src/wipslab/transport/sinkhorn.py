"""Entropic transport with a certified bracket.

Log-domain Sinkhorn iterations with epsilon-scaling.  The returned bracket
does not depend on convergence: the lower end is the dual value of the
potentials after a double c-transform (always dual feasible) and the upper
end is the cost of the plan after rounding it onto the transport polytope.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .exact import W1Result, as_points

MARGINAL_TOL = 1e-9


def _round_plan(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # rescale rows and columns down to the marginals, then add back the
    # missing mass as a rank-one correction; the result is feasible
    x = np.minimum(a / np.maximum(P.sum(axis=1), 1e-300), 1.0)
    P = P * x[:, None]
    y = np.minimum(b / np.maximum(P.sum(axis=0), 1e-300), 1.0)
    P = P * y[None, :]
    er = a - P.sum(axis=1)
    ec = b - P.sum(axis=0)
    mass = er.sum()
    if mass > 0:
        P = P + np.outer(er, ec) / mass
    return P


def _dual_lower(C: np.ndarray, f: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    g = np.min(C - f[:, None], axis=0)
    f2 = np.min(C - g[None, :], axis=1)
    return float(a @ f2 + b @ g)


def w1_sinkhorn(u, v, reg: float = 0.01, max_iters: int = 10_000, scaling: float = 0.5,
                tol: float = MARGINAL_TOL) -> W1Result:
    """Entropic approximation of W1 between two uniform-weight clouds.

    ``value`` is the transport cost of the entropic plan, clipped into the
    bracket ``[lower, upper]`` which always contains the exact W1.
    """
    if reg <= 0:
        raise ValueError("reg must be positive")
    x, y = as_points(u), as_points(v)
    if x.shape[1] != y.shape[1]:
        raise ValueError("clouds live in different dimensions")
    n, m = x.shape[0], y.shape[0]
    C = cdist(x, y)
    a, b = np.full(n, 1.0 / n), np.full(m, 1.0 / m)
    la, lb = np.log(a), np.log(b)
    f, g = np.zeros(n), np.zeros(m)
    eps = max(reg, float(C.max()) if C.size else reg)
    iters, violation, converged = 0, math.inf, False
    while True:
        final = eps <= reg
        stage_tol = tol if final else max(tol, 1e-4)
        while iters < max_iters:
            f = -eps * logsumexp((g[None, :] - C) / eps + lb[None, :], axis=1)
            g = -eps * logsumexp((f[:, None] - C) / eps + la[:, None], axis=0)
            iters += 1
            if iters % 5 == 0 or iters == max_iters:
                logP = (f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :]
                violation = float(np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum())
                if violation < stage_tol:
                    break
        if final or iters >= max_iters:
            converged = final and violation < tol
            break
        eps = max(reg, eps * scaling)
    P = np.exp((f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :])
    lower = max(_dual_lower(C, f, a, b), 0.0)
    upper = float(np.sum(C * _round_plan(P, a, b)))
    upper = max(upper, lower)
    raw = float(np.sum(C * P))
    value = min(max(raw, lower), upper)
    return W1Result(value, "sinkhorn", lower, upper, converged=converged,
                    meta={"iterations": iters, "marginal_violation": violation, "reg": reg})
