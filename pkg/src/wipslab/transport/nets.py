"""Finite families of 1-Lipschitz test functions on a cube.

The grid on ``[-R, R]^d`` has ``K = ceil(2R / eps)`` cells per axis and
spacing ``h = 2R / K <= eps``.  Node values are multiples of ``h`` and
king-adjacent nodes differ by at most ``h``, which makes the node data
1-Lipschitz; off-grid values come from linear interpolation in d = 1 and
from the McShane extension ``min_j (v_j + |x - x_j|)`` otherwise.  Members
are shifted to vanish at the origin.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from decimal import ROUND_FLOOR, Decimal, localcontext

import numpy as np
from scipy.spatial.distance import cdist

from .exact import W1Result, as_points

EXHAUSTIVE_CAP = 2_000_000
_MAX_DIGITS = 4000


def covering_count(R: float, eps: float, d: int, mode: str = "floor"):
    """Upper bound on the size of an eps-net of anchored 1-Lipschitz functions.

    Evaluates max{ (2(2 sqrt(d) + 1)/3)(R/eps) 3^([2R/eps (sqrt(d)+1)]^d), 1 }
    and returns its integer floor.  ``mode`` chooses how the bracket is read:
    "floor" takes the integer part, "identity" leaves it real.  Values too
    large to represent return ``math.inf``.
    """
    if R <= 0 or eps <= 0:
        raise ValueError("R and eps must be positive")
    if mode not in ("floor", "identity"):
        raise ValueError("mode must be 'floor' or 'identity'")
    with localcontext() as ctx:
        ctx.prec = 80
        ratio = Decimal(R) / Decimal(eps)
        sd = Decimal(d).sqrt()
        pref = 2 * (2 * sd + 1) / 3 * ratio
        inner = 2 * ratio * (sd + 1)
        if mode == "floor":
            inner = inner.to_integral_value(rounding=ROUND_FLOOR)
        if inner > 0 and float(inner.ln()) * d > math.log(_MAX_DIGITS / math.log10(3)):
            return math.inf
        expo = inner ** d
        if expo * Decimal(3).log10() + pref.log10() > _MAX_DIGITS:
            return math.inf
        val = pref * Decimal(3) ** expo
        if val < 1:
            return 1
        return int(val.to_integral_value(rounding=ROUND_FLOOR))


@dataclass(frozen=True)
class LipschitzNet:
    R: float
    eps: float
    d: int
    spacing: float
    nodes: np.ndarray
    values: np.ndarray
    mode: str
    anchored: bool = True

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.size

    def evaluate(self, points, chunk: int = 4096) -> np.ndarray:
        """Values of every member at ``points``; shape (size, P)."""
        x = as_points(points)
        if self.d == 1:
            out = _interp_rows(self.nodes[:, 0], self.values, x[:, 0])
            if self.anchored:
                out -= _interp_rows(self.nodes[:, 0], self.values, np.zeros(1))
            return out
        D = cdist(x, self.nodes)
        D0 = cdist(np.zeros((1, self.d)), self.nodes)
        out = np.empty((self.size, x.shape[0]))
        for s in range(0, self.size, chunk):
            V = self.values[s:s + chunk]
            out[s:s + chunk] = np.min(V[:, None, :] + D[None, :, :], axis=2)
            if self.anchored:
                out[s:s + chunk] -= np.min(V + D0, axis=1)[:, None]
        return out


def _interp_rows(grid: np.ndarray, values: np.ndarray, x: np.ndarray) -> np.ndarray:
    # linear interpolation of every row of ``values`` at the same points
    j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    w = (x - grid[j]) / (grid[j + 1] - grid[j])
    return values[:, j] * (1 - w) + values[:, j + 1] * w


def _grid(R: float, eps: float, d: int) -> tuple[int, float, np.ndarray]:
    K = max(1, math.ceil(2 * R / eps - 1e-12))
    h = 2 * R / K
    axis = -R + h * np.arange(K + 1)
    nodes = np.array(list(itertools.product(axis, repeat=d)))
    return K, h, nodes


def _family_size_1d(K: int) -> int:
    return 3 ** K


def _king_functions(K: int, d: int, limit: int) -> list[np.ndarray]:
    """All integer node functions (value 0 at the first node) with
    king-neighbour differences in {-1, 0, 1}, up to ``limit`` of them."""
    shape = (K + 1,) * d
    order = list(itertools.product(range(K + 1), repeat=d))
    prev = {idx: [p for p in order[:k] if max(abs(a - b) for a, b in zip(idx, p)) == 1]
            for k, idx in enumerate(order)}
    vals = np.zeros(shape, dtype=np.int64)
    found: list[np.ndarray] = []

    def rec(k: int) -> bool:
        if len(found) >= limit:
            return False
        if k == len(order):
            found.append(vals.reshape(-1).copy())
            return True
        idx = order[k]
        nb = [vals[p] for p in prev[idx]]
        lo, hi = (max(nb) - 1, min(nb) + 1) if nb else (0, 0)
        for v in range(lo, hi + 1):
            vals[idx] = v
            rec(k + 1)
        return True

    rec(0)
    return found


def build_net(R: float, eps: float, d: int, budget: int | None = None, mode: str = "exhaustive",
              seed: int = 0) -> LipschitzNet:
    """Construct a Lipschitz net on ``[-R, R]^d``.

    ``exhaustive`` enumerates the grid family (d <= 2; ``budget`` clamps
    the count).  ``sampled`` draws ``budget`` members at random: uniformly
    from the grid family when d = 1, from random quantized cone functions
    otherwise.  The size never exceeds ``covering_count(R, eps, d)``.
    """
    if R <= 0 or eps <= 0:
        raise ValueError("R and eps must be positive")
    K, h, nodes = _grid(R, eps, d)
    bound = covering_count(R, eps, d)
    cap = EXHAUSTIVE_CAP if budget is None else max(1, int(budget))
    cap = int(min(cap, bound))
    if mode == "exhaustive":
        if d > 2:
            raise ValueError("exhaustive nets are limited to d <= 2; use mode='sampled'")
        if d == 1:
            total = _family_size_1d(K)
            n = min(cap, total)
            steps = np.array(list(itertools.islice(itertools.product((1, 0, -1), repeat=K), n)))
            vals = h * np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
        else:
            vals = h * np.array(_king_functions(K, d, cap), dtype=float)
    elif mode == "sampled":
        g = np.random.default_rng(seed)
        if d == 1:
            total = _family_size_1d(K)
            n = min(cap, total)
            if total <= 10 * n:
                codes = g.choice(total, size=n, replace=False)
                steps = np.array([_digits3(c, K) for c in codes]) - 1
            else:
                steps = _unique_rows(g, n, K)
            vals = h * np.concatenate([np.zeros((n, 1)), np.cumsum(steps, axis=1)], axis=1)
        else:
            vals = _random_cones(g, cap, nodes, h)
    else:
        raise ValueError("mode must be 'exhaustive' or 'sampled'")
    vals.setflags(write=False)
    nodes.setflags(write=False)
    return LipschitzNet(R, eps, d, h, nodes, vals, mode)


def _digits3(code: int, K: int) -> list[int]:
    out = []
    for _ in range(K):
        code, r = divmod(int(code), 3)
        out.append(r)
    return out


def _unique_rows(g: np.random.Generator, n: int, K: int) -> np.ndarray:
    seen, rows = set(), []
    while len(rows) < n:
        r = tuple(g.integers(-1, 2, size=K).tolist())
        if r not in seen:
            seen.add(r)
            rows.append(r)
    return np.array(rows)


def _random_cones(g: np.random.Generator, n: int, nodes: np.ndarray, h: float) -> np.ndarray:
    # quantized minimum of a few cones, then a king-neighbour repair pass
    d = nodes.shape[1]
    out = np.empty((n, nodes.shape[0]))
    R = float(np.max(np.abs(nodes)))
    for k in range(n):
        centres = g.uniform(-R, R, size=(3, d))
        offs = g.uniform(-R, R, size=3)
        sign = g.choice([-1.0, 1.0])
        v = sign * np.min(offs[None, :] + cdist(nodes, centres), axis=1)
        out[k] = h * np.round(v / h)
    # rounding can break the h-step constraint; McShane on the nodes restores it
    D = cdist(nodes, nodes)
    for k in range(n):
        out[k] = np.min(out[k][None, :] + D, axis=1)
    return out


def w1_net_lower(u, v, net: LipschitzNet) -> W1Result:
    """Lower bound max_g |<g, u - v>| over the net; points are clipped to the cube."""
    if net.size == 0:
        raise ValueError("empty net")
    x, y = as_points(u), as_points(v)
    xc, yc = np.clip(x, -net.R, net.R), np.clip(y, -net.R, net.R)
    truncated = bool(np.any(xc != x) or np.any(yc != y))
    gap = net.evaluate(xc).mean(axis=1) - net.evaluate(yc).mean(axis=1)
    k = int(np.argmax(np.abs(gap)))
    value = float(abs(gap[k]))
    return W1Result(value, "net-lower", value, math.inf, truncated=truncated,
                    meta={"argmax": k, "net_size": net.size, "spacing": net.spacing})
