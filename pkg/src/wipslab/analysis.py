"""Measurements built on the simulator: fixed points, contraction, chaos, tails."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import dynamics, rng
from .dynamics import ParticleCloud, run_batch
from .errors import RegimeError, ToleranceUnachievableError
from .model import InitialLawSpec, ModelSpec, validate_model
from .transport import w1_assignment, w1_points

BATTERY_VERSION = "tanh16-v1"
BATTERY_SEED = 0x5EED_C4A0
BATTERY_SIZE = 16
PILOT_MAX = 10_000
W1_SUBSAMPLE = 1000


def _require_th2(spec: ModelSpec) -> None:
    rep = validate_model(spec)
    if not rep.th2_regime:
        raise RegimeError(f"step size delta = {spec.delta} is outside the contraction regime "
                          f"(needs delta < a0); diagnostics: {'; '.join(rep.diagnostics) or 'none'}")


def w1_clouds(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W1 in d = 1; otherwise assignment on the first ``W1_SUBSAMPLE`` points."""
    if a.shape[1] == 1:
        return w1_points(a, b)
    n = min(a.shape[0], b.shape[0], W1_SUBSAMPLE)
    return w1_assignment(a[:n], b[:n]).value


# --- fixed point -----------------------------------------------------------

@dataclass(frozen=True)
class FixedPointReport:
    cloud: ParticleCloud
    gaps: np.ndarray
    floors: np.ndarray
    rate: float
    iterations: int
    converged: bool
    floor: float
    tol: float
    N_ref: int

    def to_dict(self) -> dict:
        return {"gaps": self.gaps.tolist(), "floors": self.floors.tolist(), "rate": self.rate,
                "iterations": self.iterations, "converged": self.converged, "floor": self.floor,
                "tol": self.tol, "N_ref": self.N_ref}


def _tail_rate(gaps: np.ndarray, floor: float) -> float:
    k = np.arange(gaps.size)
    tail = k >= gaps.size // 2
    use = tail & (gaps > 2 * floor)
    if use.sum() < 2:
        use = gaps > 2 * floor
    if use.sum() < 2:
        return math.nan
    slope = np.polyfit(k[use], np.log(gaps[use]), 1)[0]
    return float(math.exp(slope))


def picard_fixed_point(spec: ModelSpec, N_ref: int = 100_000, tol: float = 1e-3, max_iter: int = 500,
                       seed: int = 0, start: Optional[InitialLawSpec] = None) -> FixedPointReport:
    """Iterate the particle approximation of the law map until it settles.

    The cloud of size ``N_ref`` is advanced with its own empirical measure.
    Alongside it two independent pilot clouds of size ``min(N_ref, 1e4)``
    follow the same recursion; their distance, rescaled by
    ``sqrt(N_pilot / N_ref)``, is the Monte Carlo floor below which gaps are
    indistinguishable from sampling noise.  Iteration stops once the gap
    between consecutive iterates is at most ``tol + floor``.
    """
    _require_th2(spec)
    if N_ref < 1000:
        raise ValueError("N_ref must be at least 1000")
    if start is not None:
        spec = spec.with_initial(start)
    n_p = min(N_ref, PILOT_MAX)
    # in d > 1 both distances use the same subsample size, so no rescaling
    scale = math.sqrt(n_p / N_ref) if spec.d == 1 else 1.0
    main = dynamics.iterate_clouds(spec, N_ref, seed, 0)
    p1 = dynamics.iterate_clouds(spec, n_p, seed, 1)
    p2 = dynamics.iterate_clouds(spec, n_p, seed, 2)
    prev = next(main)
    next(p1), next(p2)
    gaps, floors = [], []
    converged = False
    for _ in range(max_iter):
        cur = next(main)
        gaps.append(w1_clouds(prev.points, cur.points))
        floors.append(scale * w1_clouds(next(p1).points, next(p2).points))
        prev = cur
        if gaps[-1] <= tol + floors[-1]:
            converged = True
            break
    gaps_a, floors_a = np.array(gaps), np.array(floors)
    floor = float(floors_a[-1])
    if floor > tol:
        need = int(math.ceil(N_ref * (floor / tol) ** 2))
        raise ToleranceUnachievableError(
            f"Monte Carlo floor {floor:.3g} exceeds tol {tol:.3g}; use N_ref >= {need}")
    return FixedPointReport(prev, gaps_a, floors_a, _tail_rate(gaps_a, floor), len(gaps), converged,
                            floor, tol, N_ref)


# --- contraction -----------------------------------------------------------

@dataclass(frozen=True)
class ContractionReport:
    slope: float
    stderr: float
    band: tuple
    rate: float
    chi: float
    certified: bool
    degenerate: bool
    mean_gaps: np.ndarray
    slopes: np.ndarray

    def to_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "band": list(self.band), "rate": self.rate,
                "chi": self.chi, "certified": self.certified, "degenerate": self.degenerate,
                "mean_gaps": self.mean_gaps.tolist(), "slopes": self.slopes.tolist()}


def contraction_certificate(spec: ModelSpec, law_a: InitialLawSpec, law_b: InitialLawSpec,
                            n_steps: int = 30, N_ref: int = 10_000, reps: int = 20,
                            seed: int = 0) -> ContractionReport:
    """Fit the decay rate of W1 between two coupled law iterations.

    Both clouds use the same initial normals and the same noise, so their
    distance isolates the contraction of the law map.  Per replicate the
    slope of log W1 against n is fitted; the band is mean +- 2 standard
    errors across replicates.
    """
    _require_th2(spec)
    from .model import derived_constants
    chi = derived_constants(spec).chi
    sa = spec.with_initial(law_a)
    gaps = np.zeros((reps, n_steps + 1))

    def obs(n, X, Y):
        for r in range(X.shape[0]):
            gaps[r, n] = w1_clouds(X[r], Y[r])

    run_batch(sa, N_ref, n_steps, seed, reps, "coupled", initial_b=law_b, observer=obs)
    scale0 = np.max(gaps[:, 0]) if gaps.size else 0.0
    floor = 1e-12 * max(scale0, 1e-300)
    slopes = []
    n = np.arange(n_steps + 1)
    for r in range(reps):
        ok = gaps[r] > floor
        if ok.sum() >= 2:
            slopes.append(np.polyfit(n[ok], np.log(gaps[r, ok]), 1)[0])
    degenerate = len(slopes) == 0
    if degenerate:
        return ContractionReport(math.nan, math.nan, (math.nan, math.nan), math.nan, chi, False, True,
                                 gaps.mean(axis=0), np.array([]))
    s = np.array(slopes)
    m = float(s.mean())
    se = float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1 else 0.0
    band = (m - 2 * se, m + 2 * se)
    return ContractionReport(m, se, band, math.exp(m), chi, m <= math.log(chi) + 2 * se, False,
                             gaps.mean(axis=0), s)


# --- chaos -----------------------------------------------------------------

def chaos_battery(d: int) -> tuple[np.ndarray, np.ndarray]:
    """The fixed test-function battery tanh(<v, x> + b), 16 members."""
    g = np.random.default_rng([BATTERY_SEED, d])
    v = g.normal(size=(BATTERY_SIZE, d)) * (3.0 / math.sqrt(d))
    b = g.uniform(-1.0, 1.0, size=BATTERY_SIZE)
    return v, b


@dataclass(frozen=True)
class ChaosReport:
    k: int
    N: int
    statistic: float
    stderr: float
    floor: float
    per_function: np.ndarray
    correlation_12: float
    window: tuple
    battery: str = BATTERY_VERSION
    note: str = "N-monotonicity surrogate; no rate is asserted"

    def to_dict(self) -> dict:
        return {"k": self.k, "N": self.N, "statistic": self.statistic, "stderr": self.stderr,
                "floor": self.floor, "per_function": self.per_function.tolist(),
                "correlation_12": self.correlation_12, "window": list(self.window),
                "battery": self.battery, "note": self.note}


def chaos_statistic(spec: ModelSpec, N: int, k: int = 2, T: int = 4000, burn_in: Optional[int] = None,
                    seed: int = 0, replicates: int = 8) -> ChaosReport:
    """Time-averaged k-particle product-moment discrepancy.

    For each battery function phi the occupation average of the product
    over k distinct particles is compared with the k-th power of the
    occupation average of phi.  For k = 2 every ordered pair is used
    (a U-statistic); for k >= 3 disjoint consecutive blocks of k particles.
    The statistic is the battery average of |replicate mean|; the floor is
    three standard errors.
    """
    if not spec.unique_invariant:
        raise RegimeError("chaoticity check needs the model to declare a unique invariant measure")
    if k < 1 or k > N:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={N}")
    burn = T // 2 if burn_in is None else burn_in
    if T - burn < 10:
        raise ValueError(f"averaging window has {T - burn} steps; need at least 10")
    v, b = chaos_battery(spec.d)
    J = v.shape[0]
    window = (burn + 1, T)
    cnt = T - burn
    s_prod = np.zeros((replicates, J))
    s_marg = np.zeros((replicates, J))
    x12 = np.zeros((replicates, cnt, 2))

    def obs(n, X, Y):
        if n <= burn:
            return
        phi = np.tanh(np.einsum("rnd,jd->rjn", X, v) + b[None, :, None])
        s_marg[:] += phi.mean(axis=2)
        if k == 2:
            tot = phi.sum(axis=2)
            s_prod[:] += (tot * tot - (phi * phi).sum(axis=2)) / (N * (N - 1))
        elif k >= 3:
            nb = N // k
            blocks = phi[:, :, :nb * k].reshape(phi.shape[0], J, nb, k)
            s_prod[:] += blocks.prod(axis=3).mean(axis=2)
        if N >= 2:
            x12[:, n - burn - 1] = X[:, :2, 0]

    run_batch(spec, N, T, seed, replicates, observer=obs)
    if k == 1:
        per_rep = np.zeros((replicates, J))
    else:
        per_rep = s_prod / cnt - (s_marg / cnt) ** k
    mean_j = per_rep.mean(axis=0)
    se_j = per_rep.std(axis=0, ddof=1) / math.sqrt(replicates) if replicates > 1 else np.zeros(J)
    stat = float(np.mean(np.abs(mean_j)))
    se = float(np.mean(se_j))
    corr = math.nan
    if N >= 2:
        a, c = x12[..., 0].ravel(), x12[..., 1].ravel()
        if a.std() > 0 and c.std() > 0:
            corr = float(np.corrcoef(a, c)[0, 1])
    return ChaosReport(k, N, stat, se, 3 * se, mean_j, corr, window)


# --- Gronwall ----------------------------------------------------------------

def discrete_gronwall(b: Sequence[float], c: Sequence[float]) -> np.ndarray:
    """u_n = b_n + sum_{k<n} c_k b_k prod_{j=k+1}^{n-1} (1 + c_j).

    Any a with a_n <= b_n + sum_{k<n} c_k a_k satisfies a_n <= u_n.
    """
    b, c = np.asarray(b, dtype=float), np.asarray(c, dtype=float)
    if b.shape != c.shape or b.ndim != 1:
        raise ValueError("b and c must be 1-D sequences of equal length")
    if np.any(b < 0) or np.any(c < 0):
        raise ValueError("b and c must be nonnegative")
    u = np.empty_like(b)
    s = 0.0
    for n in range(b.size):
        u[n] = b[n] + s
        s = s * (1 + c[n]) + c[n] * b[n]
    return u


# --- one-step Monte Carlo error ------------------------------------------------

@dataclass(frozen=True)
class OneStepReport:
    N: int
    mean_error: float
    stderr: float
    bound: float
    slack: float
    within_bound: bool
    reps: int


def onestep_mc_error(spec: ModelSpec, cloud: ParticleCloud, f: Callable = np.tanh, f_sup: float = 1.0,
                     reps: int = 1000, seed: int = 0, inner: int = 100) -> OneStepReport:
    """Estimate E|<f, m_1 - m_0 P>| for one step from the cloud ``m_0``.

    ``<f, m_0 P>`` is estimated once from ``inner`` draws per particle on
    the auxiliary stream; its sampling error is covered by the slack
    ``3 f_sup / sqrt(inner N)``.
    """
    X = cloud.points
    N = X.shape[0]
    step = cloud.n + 1
    Xi = np.repeat(X, inner, axis=0)
    Zi = dynamics.draw_noise(spec, seed, [0], step, N * inner, stream=rng.Stream.AUXILIARY)[0]
    target = float(np.mean(f(dynamics.advance(spec, Xi, X, Zi))))
    errs = np.empty(reps)
    for r in range(reps):
        Z = dynamics.draw_noise(spec, seed, [r], step, N)[0]
        errs[r] = abs(float(np.mean(f(dynamics.advance(spec, X, X, Z)))) - target)
    bound = 2 * f_sup / math.sqrt(N)
    slack = 3 * f_sup / math.sqrt(inner * N)
    mean = float(errs.mean())
    se = float(errs.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    return OneStepReport(N, mean, se, bound, slack, mean <= bound + slack, reps)


# --- tails -----------------------------------------------------------------

@dataclass(frozen=True)
class TailCurve:
    eps: np.ndarray
    p_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n: int

    def rows(self) -> list[tuple]:
        return list(zip(self.eps.tolist(), self.p_hat.tolist(), self.lo.tolist(), self.hi.tolist()))


def tail_estimator(samples: Sequence[float], eps_grid: Sequence[float], min_samples: int = 100) -> TailCurve:
    """Empirical P(W > eps) with Wilson 95% intervals."""
    s = np.asarray(samples, dtype=float)
    eps = np.asarray(eps_grid, dtype=float)
    if eps.size == 0:
        raise ValueError("empty eps grid")
    if s.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {s.size}")
    count = (s[None, :] > eps[:, None]).sum(axis=1)
    lo, hi = proportion_confint(count, s.size, alpha=0.05, method="wilson")
    return TailCurve(eps, count / s.size, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), s.size)


# --- sweeps and limit interchange ---------------------------------------------

@dataclass(frozen=True)
class SweepSummary:
    Ns: np.ndarray
    max_mean: np.ndarray
    max_se: np.ndarray
    argmax_n: np.ndarray
    loglog_slope: float
    monotone: bool


def summarize_sweep(Ns: Sequence[int], W: np.ndarray, ns: Sequence[int]) -> SweepSummary:
    """``W`` has shape (replicates, len(Ns), len(ns)): W1 to the law at each (N, n).

    Reports max over n of the replicate mean for each N, its standard
    error, whether it decreases in N within 2 standard errors, and the
    log-log slope against N.
    """
    Ns = np.asarray(Ns, dtype=float)
    mean = W.mean(axis=0)
    se = W.std(axis=0, ddof=1) / math.sqrt(W.shape[0])
    j = np.argmax(mean, axis=1)
    mx = mean[np.arange(len(Ns)), j]
    sx = se[np.arange(len(Ns)), j]
    mono = all(mx[i + 1] < mx[i] + 2 * math.hypot(sx[i], sx[i + 1]) for i in range(len(Ns) - 1))
    slope = float(np.polyfit(np.log(Ns), np.log(mx), 1)[0]) if len(Ns) > 1 else math.nan
    return SweepSummary(Ns, mx, sx, np.asarray(ns)[j], slope, mono)


@dataclass(frozen=True)
class InterchangeReport:
    n_then_N: float
    N_then_n: float
    se_n_then_N: float
    se_N_then_n: float
    difference: float
    combined_se: float
    agree: bool


def _wls_intercept(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    X = np.stack([np.ones_like(x), x], axis=1)
    W = np.sqrt(w)[:, None]
    beta = np.linalg.lstsq(X * W, y * W[:, 0], rcond=None)[0]
    return float(beta[0])


def _interchange_point(W: np.ndarray, Ns: np.ndarray, tail: slice) -> tuple[float, float]:
    x = 1.0 / np.sqrt(Ns)
    mean = W.mean(axis=0)
    var = W.var(axis=0, ddof=1) / W.shape[0] + 1e-300
    # n first: average the tail in time at each N, then extrapolate in N
    tm = mean[:, tail].mean(axis=1)
    tv = var[:, tail].mean(axis=1)
    a = _wls_intercept(x, tm, 1.0 / tv)
    # N first: extrapolate at each n, then average the tail in time
    b = np.mean([_wls_intercept(x, mean[:, t], 1.0 / var[:, t])
                 for t in range(mean.shape[1])][tail])
    return a, float(b)


def limit_interchange(W: np.ndarray, Ns: Sequence[int], tail_from: Optional[int] = None,
                      n_boot: int = 200, seed: int = 0) -> InterchangeReport:
    """Compare the two iterated limits of E W1(mu_n^N, mu_inf).

    ``W`` has shape (replicates, len(Ns), len(ns)).  The n-limit is the
    average over the tail ``ns[tail_from:]`` (default: second half), the
    N-limit the weighted least-squares intercept against N^{-1/2}.
    Standard errors come from a bootstrap over replicates.
    """
    Ns = np.asarray(Ns, dtype=float)
    R, _, T = W.shape
    tail = slice(T // 2 if tail_from is None else tail_from, None)
    a, b = _interchange_point(W, Ns, tail)
    g = np.random.default_rng(seed)
    boots = np.array([_interchange_point(W[g.integers(0, R, size=R)], Ns, tail) for _ in range(n_boot)])
    sa, sb = boots.std(axis=0, ddof=1)
    comb = float(math.hypot(sa, sb))
    return InterchangeReport(a, b, float(sa), float(sb), abs(a - b), comb, abs(a - b) <= 3 * comb)
