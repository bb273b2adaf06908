"""Closed-form concentration bounds and the transport-inequality machinery.

Every probability bound returns a :class:`BoundResult` whose value is
clamped to [0, 1] and which records its validity gate and every constant
used.  Existential constants are parameters; defaults are either derived
from the explicit expressions available (``truncation_constants``) or 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

GOLDEN_RTOL = 1e-9


@dataclass(frozen=True)
class BoundResult:
    value: float
    valid: bool
    vacuous: bool
    constants: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _clamped(raw: float, valid: bool, **constants) -> BoundResult:
    if math.isnan(raw):
        raw = 1.0
    return BoundResult(min(max(raw, 0.0), 1.0), bool(valid), raw >= 1.0, constants)


def _log_plus(x: float) -> float:
    return max(math.log(x), 0.0) if x > 0 else 0.0


# --- polynomial bounds -----------------------------------------------------

def truncation_constants(d: int, alpha: float, kappa1: float, initial_moment: float,
                         c1_alpha: float) -> dict:
    """Constants (a1, a2, a3) of the one-step truncation bound, back-solved.

    The net-count factor is absorbed as k2 * exp(k1 (R/eps)^d) with
    k1 = log 3 (8(sqrt d + 1))^d + 1 and k2 = max(2, 16(2 sqrt d + 1)/3);
    then a1 = 3^d 576 k1, a2 = 1/576 and a3 = max(k2, 12 B) where
    B = kappa1 E|X0|^(1+alpha) + 4^alpha c1 / (1 - kappa1).
    """
    if not 0 < kappa1 < 1:
        raise ValueError(f"kappa1 = {kappa1} must lie in (0, 1) for the moment bound")
    sd = math.sqrt(d)
    k1 = math.log(3) * (8 * (sd + 1)) ** d + 1
    k2 = max(2.0, 16 * (2 * sd + 1) / 3)
    B = kappa1 * initial_moment + 4 ** alpha * c1_alpha / (1 - kappa1)
    return {"a1": 3 ** d * 576 * k1, "a2": 1 / 576, "a3": max(k2, 12 * B), "k1": k1, "k2": k2, "B": B}


def poly_step_bound(N: float, eps: float, R: float, a1: float, a2: float, a3: float, alpha: float,
                    d: int = 1) -> BoundResult:
    """a3 (exp(-a2 N eps^2 / R^2) + R^-alpha / eps), valid for N >= max(1, a1 (R/eps)^(d+2))."""
    if eps <= 0 or R <= 0:
        raise ValueError("eps and R must be positive")
    raw = a3 * (math.exp(-a2 * N * eps ** 2 / R ** 2) + R ** -alpha / eps)
    gate = max(1.0, a1 * (R / eps) ** (d + 2))
    return _clamped(raw, N >= gate, gate=gate, a1=a1, a2=a2, a3=a3, alpha=alpha, d=d)


def poly_uniform_bound(N: float, eps: float, C1: float, alpha: float, d: int, initial_term: float,
                       N0: float = 1.0) -> BoundResult:
    """initial_term + C1 eps^-(1+alpha) N^(-alpha/(d+2)), valid for N > N0 max(1, log+ eps)^((d+2)/d)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    raw = initial_term + C1 * eps ** -(1 + alpha) * N ** (-alpha / (d + 2))
    gate = N0 * max(1.0, _log_plus(eps)) ** ((d + 2) / d)
    return _clamped(raw, N > gate, gate=gate, C1=C1, N0=N0, alpha=alpha, d=d, initial_term=initial_term)


# --- exponential bounds ----------------------------------------------------

def exp_uniform_bound(N: float, eps: float, C1: float, d: int, initial_term: float,
                      N0: float = 1.0) -> BoundResult:
    """initial_term + exp(-C1 e N^(1/(d+2))) with e = eps (d > 1) or min(eps, 1) (d = 1)."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    e = min(eps, 1.0) if d == 1 else eps
    raw = initial_term + math.exp(-C1 * e * N ** (1 / (d + 2)))
    small = ((1 / eps) * _log_plus(1 / eps)) ** (d + 2)
    other = 1.0 if d == 1 else eps ** ((d + 2) / (d - 1))
    gate = N0 * max(small, other)
    return _clamped(raw, N >= gate, gate=gate, C1=C1, N0=N0, d=d, initial_term=initial_term)


def iid_exp_bound(N: float, eps: float, a1: float, a2: float, N0: float = 1.0,
                  varsigma: Optional[float] = None, gaussian_moment: bool = False) -> BoundResult:
    """a1 exp(-N a2 (eps^2 min eps)); with ``gaussian_moment`` the exponent uses eps^2.

    ``varsigma`` is the gate function evaluated at eps; without it the
    validity flag is False because the gate was not checked.
    """
    if a2 <= 0:
        raise ValueError("a2 must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    e = eps ** 2 if gaussian_moment else min(eps ** 2, eps)
    raw = a1 * math.exp(-N * a2 * e)
    if varsigma is None:
        return _clamped(raw, False, a1=a1, a2=a2, N0=N0, gate=None, note="gate not evaluated")
    gate = N0 * varsigma
    return _clamped(raw, N >= gate, a1=a1, a2=a2, N0=N0, gate=gate)


# --- transport inequality ----------------------------------------------------

def transport_alpha(t: float, C: float) -> float:
    """(sqrt(t/C + 1/4) - 1/2)^2; negative arguments give 0."""
    if C <= 0:
        raise ValueError("C must be positive")
    if t <= 0:
        return 0.0
    # rationalized form avoids cancellation for small t/C
    r = t / C
    return (r / (math.sqrt(r + 0.25) + 0.5)) ** 2


def alpha_star(s: float, C: float) -> float:
    """Convex conjugate sup_{t >= 0} (s t - alpha(t)).

    With k = s C the supremum is k^2 / (4 (1 - k)) for 0 <= k < 1, infinite
    for k >= 1, and 0 for s < 0.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if s <= 0:
        return 0.0
    k = s * C
    if k >= 1:
        return math.inf
    return k * k / (4 * (1 - k))


def ell(x: float) -> float:
    """x log x - x + 1, with ell(0) = 1."""
    if x < 0:
        raise ValueError("ell is defined for x >= 0")
    return 1.0 if x == 0 else x * math.log(x) - x + 1


def psi(x: float) -> float:
    """x log(2 ell(x)); raises when 2 ell(x) <= 1."""
    two_l = 2 * ell(x)
    if two_l <= 1:
        raise ValueError(f"psi undefined at x = {x}: 2 ell(x) = {two_l} <= 1")
    return x * math.log(two_l)


@dataclass(frozen=True)
class EntropyConstant:
    log_C: float
    domain_ok: bool
    x: float
    psi: float

    @property
    def C(self) -> float:
        if not self.domain_ok:
            return math.inf
        return math.exp(self.log_C) if self.log_C < 709 else math.inf


def entropy_constants(t: float, zeta: float, c_d: float = 1.0, d: int = 1) -> EntropyConstant:
    """log of C_t = 2 (1 + psi(x)) 2^(c_d psi(x)^d) with x = 32 / (zeta t).

    Returned on the log scale so that huge values stay finite.  Outside the
    region 2 ell(x) > 1 the domain flag is cleared and C_t counts as +inf.
    """
    if t <= 0 or zeta <= 0:
        raise ValueError("t and zeta must be positive")
    x = 32.0 / (zeta * t)
    if 2 * ell(x) <= 1:
        return EntropyConstant(math.inf, False, x, math.nan)
    p = psi(x)
    log_C = math.log(2) + math.log1p(p) + c_d * p ** d * math.log(2)
    return EntropyConstant(log_C, True, x, p)


def gamma_term(log_C_t: float, N: float, C: float) -> float:
    """inf over lambda > 0 of (1/lambda)(log C_t + N alpha*(lambda/N)).

    With k = lambda C / N the objective is C (L / (k N) + k / (4 (1 - k)))
    on k in (0, 1); it is minimized by a log-spaced scan followed by
    golden-section refinement.
    """
    if not math.isfinite(log_C_t):
        return math.inf
    L = max(log_C_t, 0.0)
    if L == 0:
        return 0.0

    def obj(u: float) -> float:
        # k = exp(u) on (0, 1); 1 - k computed without cancellation
        k = math.exp(u)
        return C * (L / (k * N) + k / (4 * -math.expm1(u)))

    us = np.linspace(-60.0, -1e-12, 2001)
    vals = [obj(u) for u in us]
    j = int(np.argmin(vals))
    if 0 < j < us.size - 1:
        res = minimize_scalar(obj, bracket=(us[j - 1], us[j], us[j + 1]), method="golden",
                              options={"xtol": GOLDEN_RTOL})
        return float(min(res.fun, vals[j]))
    return float(vals[j])


@dataclass(frozen=True)
class TransportBoundParams:
    """zeta0 bounds the exponential moment, int exp(zeta0 |x|) d mu <= 2."""

    zeta0: float
    c_d: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.zeta0 <= 0:
            raise ValueError("zeta0 must be positive")

    @property
    def C0(self) -> float:
        return 2 * math.sqrt(2) * (1.5 + math.log(2)) / self.zeta0


def boissard_tail(N: float, t: float, params: TransportBoundParams) -> BoundResult:
    """exp(-N alpha0(t/2 - Gamma0(C0_t, N))) for i.i.d. samples of a law with
    the exponential-moment constant ``params.zeta0``."""
    if t <= 0:
        raise ValueError("t must be positive")
    ent = entropy_constants(t, params.zeta0, params.c_d, params.d)
    C0 = params.C0
    if not ent.domain_ok:
        return BoundResult(1.0, True, True, {"C0": C0, "domain_ok": False})
    G = gamma_term(ent.log_C, N, C0)
    arg = t / 2 - G
    if arg <= 0:
        return BoundResult(1.0, True, True, {"C0": C0, "Gamma": G, "log_C": ent.log_C})
    raw = math.exp(-N * transport_alpha(arg, C0))
    return _clamped(raw, True, C0=C0, Gamma=G, log_C=ent.log_C)


def varsigma1(t: float, gamma: float, delta: float, M: float, params: TransportBoundParams) -> float:
    """Gate function: max{1, log C0_m / m^2, log C0_{gt} / (g t)^2, 1/t^2, 1/t} with m = g t / (delta M).

    Returns +inf when either entropy constant is outside its domain.
    """
    if min(t, gamma, delta, M) <= 0:
        raise ValueError("t, gamma, delta and M must be positive")
    m = gamma * t / (delta * M)
    e1 = entropy_constants(m, params.zeta0, params.c_d, params.d)
    e2 = entropy_constants(gamma * t, params.zeta0, params.c_d, params.d)
    if not (e1.domain_ok and e2.domain_ok):
        return math.inf
    return max(1.0, e1.log_C / m ** 2, e2.log_C / (gamma * t) ** 2, 1 / t ** 2, 1 / t)
