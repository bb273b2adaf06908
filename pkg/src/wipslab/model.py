"""Problem data, assumption checks and closed-form constants.

A model is the recursion ``X' = A X + delta * f(X, mu, z)`` with ``z`` drawn
i.i.d. from a noise law.  :class:`ModelSpec` bundles the data together with
the declared Lipschitz/moment constants that the thresholds depend on.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, ndtri

from . import rng
from .errors import (DegenerateInteractionError, InvalidSpecError, RegimeError,
                     UnsupportedOracleError)

NORM_RTOL = 1e-12
LYAPUNOV_TOL = 1e-14
LYAPUNOV_MAX_ITER = 1_000_000
BUILTINS = ("mean-field-gaussian", "mean-field-bounded", "independent-gaussian")


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InvalidSpecError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def std(self) -> float:
        """Standard deviation, one-dimensional laws only."""
        if self.d != 1:
            raise ValueError("std is defined for one-dimensional laws")
        return math.sqrt(max(float(self.cov[0, 0]), 0.0))

    def root(self) -> np.ndarray:
        # symmetric square root, tolerates singular covariances
        w, v = np.linalg.eigh(self.cov)
        return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T

    def from_normals(self, z: np.ndarray) -> np.ndarray:
        return self.mean + z @ self.root().T


# --- measure views handed to interaction functions -------------------------

class EmpiricalView:
    """Uniform-weight empirical measure over the last two axes ``(..., N, d)``."""

    def __init__(self, points: np.ndarray):
        self.points = points

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=-2, keepdims=True)

    def norm1(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=-1).mean(axis=-1)


class GaussianView:
    def __init__(self, law: GaussianLaw):
        self.law = law

    def mean(self) -> np.ndarray:
        return self.law.mean[None, :]

    def norm1(self) -> float:
        # E|X| for X ~ N(m, S), estimated once by a fixed quadrature-free rule
        if self.law.d == 1:
            m, s = float(self.law.mean[0]), self.law.std
            if s == 0:
                return abs(m)
            t = m / s
            from scipy.stats import norm
            return s * (t * (2 * norm.cdf(t) - 1) + 2 * norm.pdf(t))
        u = (np.arange(4096) + 0.5) / 4096
        z = ndtri(np.stack([np.roll(u, 97 * k) for k in range(self.law.d)], axis=1))
        return float(np.linalg.norm(self.law.from_normals(z), axis=1).mean())


def as_view(mu) -> EmpiricalView | GaussianView:
    if isinstance(mu, (EmpiricalView, GaussianView)):
        return mu
    if isinstance(mu, GaussianLaw):
        return GaussianView(mu)
    pts = getattr(mu, "points", mu)
    return EmpiricalView(np.asarray(pts, dtype=float))


@dataclass(frozen=True)
class MeanFieldInteraction:
    """f(x, mu, z) = kappa * (mean(mu) - x) + z."""

    kappa: float

    def __call__(self, x, mu, z):
        return self.kappa * (as_view(mu).mean() - x) + z

    def to_dict(self) -> dict:
        return {"kind": "mean-field", "kappa": self.kappa}


# --- noise ----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    m: int
    family: str
    scale: float = 1.0
    half_width: float = 1.0
    custom: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.family not in ("gaussian", "bounded-uniform", "custom"):
            raise InvalidSpecError(f"unknown noise family {self.family!r}")
        if self.family == "custom" and self.custom is None:
            raise InvalidSpecError("custom noise needs a transform from uniforms")

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (..., m) to draws from the noise law."""
        if self.family == "gaussian":
            return self.scale * ndtri(u)
        if self.family == "bounded-uniform":
            return self.half_width * (2.0 * u - 1.0)
        return self.custom(u)

    def sample(self, key: rng.NoiseKey) -> np.ndarray:
        return self.transform(rng.draw_uniform(key, self.m))

    def to_dict(self) -> dict:
        if self.family == "gaussian":
            return {"family": "gaussian", "m": self.m, "scale": self.scale}
        if self.family == "bounded-uniform":
            return {"family": "bounded-uniform", "m": self.m, "half_width": self.half_width}
        raise InvalidSpecError("custom noise cannot be serialized")


@dataclass(frozen=True)
class LipschitzData:
    sigma: float
    c0: float
    alpha: float
    sigma1_alpha: float
    c1_alpha: float
    M: Optional[float] = None
    exp_alpha: Optional[float] = None
    omega: Optional[float] = None

    def __post_init__(self):
        vals = [self.sigma, self.c0, self.alpha, self.sigma1_alpha, self.c1_alpha]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidSpecError("declared Lipschitz integrals must be finite")
        if self.sigma < 0 or self.c0 < 0:
            raise InvalidSpecError("sigma and c0 must be nonnegative")
        if self.alpha <= 0:
            raise InvalidSpecError("alpha must be positive")
        if self.M is not None and self.sigma > self.M * (1 + 1e-12):
            raise InvalidSpecError(f"sigma={self.sigma} exceeds the essential bound M={self.M}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("sigma", "c0", "alpha", "sigma1_alpha", "c1_alpha", "M", "exp_alpha", "omega")}


@dataclass(frozen=True)
class InitialLawSpec:
    """Law of the initial cloud.

    ``iid``: particles i.i.d. N(mean, cov).  ``exchangeable``: a shared
    random shift ``xi ~ N(0, shift_sd^2 I)`` is added to i.i.d. N(mean, cov)
    particles, so the cloud is exchangeable but not independent.
    ``custom`` maps a (N, width) uniform block to points.
    """

    kind: str
    mean: np.ndarray
    cov: np.ndarray
    shift_sd: float = 0.0
    custom: Optional[Callable[[np.ndarray], np.ndarray]] = None
    width: int = 0

    def __post_init__(self):
        if self.kind not in ("iid", "exchangeable"):
            raise InvalidSpecError(f"initial kind must be iid or exchangeable, got {self.kind!r}")
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InvalidSpecError("initial covariance does not match its mean")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidSpecError("initial law has non-finite parameters")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))
        if self.kind == "iid" and self.shift_sd:
            raise InvalidSpecError("shift_sd only applies to exchangeable initial laws")

    @property
    def d(self) -> int:
        return self.mean.size

    def gaussian_law(self) -> Optional[GaussianLaw]:
        """Marginal law of one particle, when it is Gaussian."""
        if self.custom is not None:
            return None
        return GaussianLaw(self.mean, self.cov + self.shift_sd ** 2 * np.eye(self.d))

    def sample(self, seed: int, replicate: int, n_particles: int, particles=None) -> np.ndarray:
        if self.custom is not None:
            u = rng.uniforms(seed, rng.Stream.INITIAL, replicate, 0, n_particles, self.width, particles)
            return np.asarray(self.custom(u), dtype=float).reshape(len(u), self.d)
        u = rng.uniforms(seed, rng.Stream.INITIAL, replicate, 0, n_particles, self.d, particles)
        pts = GaussianLaw(self.mean, self.cov).from_normals(ndtri(u))
        if self.kind == "exchangeable" and self.shift_sd > 0:
            # shared shift lives at step 1 of the initial stream, particle 0
            xi = self.shift_sd * ndtri(rng.uniforms(seed, rng.Stream.INITIAL, replicate, 1, 1, self.d))
            pts = pts + xi
        return pts

    def abs_moment(self, p: float) -> float:
        """E|X_0|^p, finite for every Gaussian initial law."""
        law = self.gaussian_law()
        if law is None:
            return math.inf
        u = (np.arange(20000) + 0.5) / 20000
        if self.d == 1:
            x = law.mean[0] + law.std * ndtri(u)
            return float(np.mean(np.abs(x) ** p))
        z = ndtri(np.stack([np.roll(u, 7919 * k) for k in range(self.d)], axis=1))
        return float(np.mean(np.linalg.norm(law.from_normals(z), axis=1) ** p))

    def to_dict(self) -> dict:
        if self.custom is not None:
            raise InvalidSpecError("custom initial law cannot be serialized")
        return {"kind": self.kind, "mean": self.mean.tolist(), "cov": self.cov.tolist(),
                "shift_sd": self.shift_sd}


@dataclass(frozen=True)
class ModelSpec:
    d: int
    A: np.ndarray
    delta: float
    interaction: Callable
    noise: NoiseSpec
    lip: LipschitzData
    initial: InitialLawSpec
    unique_invariant: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise InvalidSpecError(f"d must be a positive integer, got {self.d!r}")
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape != (self.d, self.d):
            raise InvalidSpecError(f"A has shape {A.shape}, expected ({self.d}, {self.d})")
        if not np.all(np.isfinite(A)):
            raise InvalidSpecError("A has non-finite entries")
        object.__setattr__(self, "A", _frozen(A))
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise InvalidSpecError(f"delta must be a finite nonnegative number, got {self.delta}")
        if self.initial.d != self.d:
            raise InvalidSpecError("initial law dimension differs from d")
        if self.lip.omega is not None:
            if self.lip.omega <= 0:
                raise InvalidSpecError("declared omega must be positive")
            if self.norm_A > math.exp(-self.lip.omega) * (1 + NORM_RTOL) + NORM_RTOL:
                raise InvalidSpecError(
                    f"||A|| = {self.norm_A!r} exceeds exp(-omega) = {math.exp(-self.lip.omega)!r}")

    @property
    def norm_A(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    @property
    def omega(self) -> float:
        """Declared omega, else the tightest admissible value -log||A||."""
        if self.lip.omega is not None:
            return self.lip.omega
        n = self.norm_A
        return math.inf if n == 0 else -math.log(n)

    @property
    def kappa(self) -> Optional[float]:
        return getattr(self.interaction, "kappa", None)

    def drift(self, x, mu, z):
        return self.interaction(x, as_view(mu), z)

    def with_delta(self, delta: float) -> "ModelSpec":
        return ModelSpec(self.d, self.A, delta, self.interaction, self.noise, self.lip,
                         self.initial, self.unique_invariant, self.name, dict(self.params, delta=delta))

    def with_initial(self, initial: InitialLawSpec) -> "ModelSpec":
        return ModelSpec(self.d, self.A, self.delta, self.interaction, self.noise, self.lip,
                         initial, self.unique_invariant, self.name, self.params)


# --- constants and validation ---------------------------------------------

@dataclass(frozen=True)
class DerivedConstants:
    omega: float
    sigma: float
    alpha: float
    a0: float
    chi: float
    a_alpha: float
    theta_rate: Optional[float]
    kappa1: float
    chi1: Optional[float]
    chi2: Optional[float]
    gamma0: Optional[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def derived_constants(spec: ModelSpec, gamma0: Optional[float] = None) -> DerivedConstants:
    lip = spec.lip
    if lip.sigma == 0:
        raise DegenerateInteractionError("sigma = 0: a0 = (1 - e^-omega) / (2 sigma) is undefined")
    w, s, dl, al = spec.omega, lip.sigma, spec.delta, lip.alpha
    ew = math.exp(-w)
    a0 = (1 - ew) / (2 * s)
    chi = ew + 2 * dl * s
    a_alpha = (4.0 ** -al - math.exp(-(1 + al) * w)) / (2 * lip.sigma1_alpha) if lip.sigma1_alpha > 0 else math.inf
    kappa1 = 4.0 ** al * (math.exp(-w * (1 + al)) + 2 * dl ** (1 + al) * lip.sigma1_alpha)
    theta = None
    if gamma0 is not None:
        if not 0 < gamma0 < a0:
            raise RegimeError(f"gamma0 = {gamma0} must lie in (0, a0) = (0, {a0})")
        theta = (1 - 2 * s * gamma0) / chi
    chi1 = chi2 = None
    if lip.M is not None:
        chi1 = ew + dl * lip.M
        chi2 = ew + 2 * dl * lip.M
    return DerivedConstants(w, s, al, a0, chi, a_alpha, theta, kappa1, chi1, chi2, gamma0)


@dataclass(frozen=True)
class ValidationReport:
    assumptions: dict
    th2_regime: bool
    th3_regime: bool
    th5_regime: bool
    th6_regime: bool
    thm6_regime: bool
    norm_A: float
    omega: float
    constants: Optional[DerivedConstants]
    diagnostics: tuple

    def flags(self) -> dict:
        return {k: getattr(self, k) for k in
                ("th2_regime", "th3_regime", "th5_regime", "th6_regime", "thm6_regime")}

    def to_dict(self) -> dict:
        return {"assumptions": self.assumptions, **self.flags(), "norm_A": self.norm_A,
                "omega": self.omega,
                "constants": None if self.constants is None else self.constants.to_dict(),
                "diagnostics": list(self.diagnostics)}


def validate_model(spec: ModelSpec, gamma0: Optional[float] = None,
                   gamma: Optional[float] = None) -> ValidationReport:
    """Check assumptions and report which step-size regimes hold.

    Assumption keys are A1..A7: finite sigma, finite c0, ||A|| < 1,
    finite (1+alpha)-moments, (no check, reported as None), unique
    invariant measure, and the exponential-moment data (M and exp_alpha).
    """
    if not np.all(np.isfinite(spec.A)):
        raise InvalidSpecError("A has non-finite entries")
    lip, diag = spec.lip, []
    w, delta = spec.omega, spec.delta
    ew = math.exp(-w)
    has_M = lip.M is not None
    initial_moment = spec.initial.abs_moment(1 + lip.alpha)
    assumptions = {
        "A1": math.isfinite(lip.sigma),
        "A2": math.isfinite(lip.c0),
        "A3": w > 0,
        "A4": math.isfinite(initial_moment) and math.isfinite(lip.sigma1_alpha) and math.isfinite(lip.c1_alpha),
        "A5": None,
        "A6": bool(spec.unique_invariant),
        "A7": has_M and lip.exp_alpha is not None,
    }
    if not assumptions["A3"]:
        diag.append("A3 fails: ||A|| >= 1, the linear part does not contract")
    if lip.sigma == 0:
        constants = None
        a0 = math.inf
        diag.append("sigma = 0: interaction is degenerate, thresholds are infinite")
    else:
        constants = derived_constants(spec, gamma0)
        a0 = constants.a0
    th2 = assumptions["A3"] and delta < a0
    th3 = th2 and assumptions["A4"]
    if gamma0 is not None and not 0 < gamma0 < a0:
        raise RegimeError(f"gamma0 = {gamma0} must lie in (0, a0) = (0, {a0})")

    th5 = False
    if gamma0 is None:
        diag.append("gamma0 not given: polynomial-concentration regime not assessed")
    elif constants is not None:
        a = constants.a_alpha
        if a <= 0:
            diag.append(f"a(alpha) = {a} <= 0: polynomial-concentration regime empty")
        else:
            th5 = assumptions["A3"] and assumptions["A4"] and delta < min(a ** (1 / (1 + lip.alpha)), a0 - gamma0)

    th6 = thm6 = False
    if not has_M:
        diag.append("A7 unavailable: no interaction bound M declared")
    elif not assumptions["A7"]:
        diag.append("A7 unavailable: no exponential-moment exponent declared")
    else:
        if lip.M <= 1:
            diag.append(f"M = {lip.M} is not in (1, inf) as the exponential results ask; thresholds evaluated anyway")
        if gamma0 is not None:
            th6 = assumptions["A3"] and delta < min(a0 - gamma0, (1 - ew) / (2 * lip.M))
        if gamma is not None:
            if not 0 < gamma < 1 - ew:
                raise RegimeError(f"gamma = {gamma} must lie in (0, 1 - e^-omega) = (0, {1 - ew})")
            if spec.initial.kind != "iid":
                diag.append("i.i.d. initial condition required for the i.i.d. exponential bound")
            else:
                thm6 = assumptions["A3"] and delta < (1 - ew - gamma) / (2 * lip.M)
        else:
            diag.append("gamma not given: i.i.d. exponential regime not assessed")
    return ValidationReport(assumptions, bool(th2), bool(th3), bool(th5), bool(th6), bool(thm6),
                            spec.norm_A, w, constants, tuple(diag))


# --- built-in models -------------------------------------------------------

def _gaussian_abs_moment(scale: float, d: int, p: float) -> float:
    # E|z|^p for z ~ N(0, scale^2 I_d): chi distribution moment
    return scale ** p * 2 ** (p / 2) * math.exp(gammaln((d + p) / 2) - gammaln(d / 2))


def _uniform_abs_moment(h: float, d: int, p: float) -> float:
    if d == 1:
        return h ** p / (p + 1)
    from scipy.stats import qmc
    pts = qmc.Sobol(d, scramble=True, seed=20240601).random_base2(16)
    return float(np.mean(np.linalg.norm(h * (2 * pts - 1), axis=1) ** p))


def _matrix_param(a, d: int) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(d)
    return arr.reshape(d, d)


def builtin_model(name: str, params: Optional[dict] = None) -> ModelSpec:
    """Built-in mean-field models with exact Lipschitz data.

    Parameters (all optional): ``kappa`` (1), ``sigma_eps`` (1, Gaussian
    noise sd), ``half_width`` (1, bounded noise), ``A`` (0.5, scalar or
    d x d), ``delta`` (0.1), ``d`` (1), ``m0`` (1), ``s0`` (1),
    ``alpha`` (0.5), ``initial_kind`` ("iid"), ``shift_sd`` (0),
    ``omega`` (None, meaning -log||A||), ``exp_alpha`` (1).

    ``independent-gaussian`` has no interaction (kappa = 0) and exists so
    that statistics under true independence can be checked.
    """
    p = dict(params or {})
    if name not in BUILTINS:
        raise InvalidSpecError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTINS)}")
    known = {"kappa", "sigma_eps", "half_width", "A", "delta", "d", "m0", "s0", "alpha",
             "initial_kind", "shift_sd", "omega", "exp_alpha"}
    extra = set(p) - known
    if extra:
        raise InvalidSpecError(f"unknown builtin parameter(s): {sorted(extra)}")
    d = int(p.get("d", 1))
    if d < 1:
        raise InvalidSpecError("d must be positive")
    kappa = float(p.get("kappa", 0.0 if name == "independent-gaussian" else 1.0))
    if name == "independent-gaussian":
        if kappa != 0:
            raise InvalidSpecError("independent-gaussian has kappa = 0")
    elif kappa <= 0:
        raise InvalidSpecError(f"kappa must be positive, got {kappa}")
    alpha = float(p.get("alpha", 0.5))
    A = _matrix_param(p.get("A", 0.5), d)
    delta = float(p.get("delta", 0.1))
    m0 = np.broadcast_to(np.asarray(p.get("m0", 1.0), dtype=float), (d,))
    s0 = float(p.get("s0", 1.0))
    kind = p.get("initial_kind", "iid")
    initial = InitialLawSpec(kind, m0, s0 ** 2 * np.eye(d), float(p.get("shift_sd", 0.0)))
    if name == "mean-field-bounded":
        h = float(p.get("half_width", 1.0))
        if h <= 0:
            raise InvalidSpecError("half_width must be positive")
        noise = NoiseSpec(d, "bounded-uniform", half_width=h)
        c0 = _uniform_abs_moment(h, d, 1.0)
        c1 = _uniform_abs_moment(h, d, 1.0 + alpha)
    else:
        se = float(p.get("sigma_eps", 1.0))
        if se < 0:
            raise InvalidSpecError("sigma_eps must be nonnegative")
        noise = NoiseSpec(d, "gaussian", scale=se)
        c0 = _gaussian_abs_moment(se, d, 1.0)
        c1 = _gaussian_abs_moment(se, d, 1.0 + alpha)
    omega = p.get("omega")
    lip = LipschitzData(sigma=kappa, c0=c0, alpha=alpha, sigma1_alpha=kappa ** (1 + alpha),
                        c1_alpha=c1, M=kappa, exp_alpha=float(p.get("exp_alpha", 1.0)),
                        omega=None if omega is None else float(omega))
    return ModelSpec(d, A, delta, MeanFieldInteraction(kappa), noise, lip, initial,
                     unique_invariant=True, name=name, params=p)


# --- exact law for the affine Gaussian model --------------------------------

def _check_affine(spec: ModelSpec) -> tuple[float, GaussianLaw]:
    if not isinstance(spec.interaction, MeanFieldInteraction) or spec.noise.family != "gaussian":
        raise UnsupportedOracleError("exact law needs the affine mean-field drift with Gaussian noise")
    law0 = spec.initial.gaussian_law()
    if law0 is None:
        raise UnsupportedOracleError("exact law needs a Gaussian initial law")
    return spec.interaction.kappa, law0


def exact_law_linear(spec: ModelSpec, n) -> GaussianLaw:
    """Law of the nonlinear chain at step ``n`` (``math.inf`` for the limit).

    The mean follows ``m' = A m`` (the drift's mean term cancels) and the
    covariance ``S' = B S B^T + delta^2 Q`` with ``B = A - delta kappa I``.
    """
    kappa, law0 = _check_affine(spec)
    d, delta = spec.d, spec.delta
    B = spec.A - delta * kappa * np.eye(d)
    Q = delta ** 2 * spec.noise.scale ** 2 * np.eye(d)
    if n == math.inf or n == "inf":
        if spec.norm_A >= 1 or np.max(np.abs(np.linalg.eigvals(B))) >= 1:
            raise UnsupportedOracleError("no stationary law: spectral radius >= 1")
        S = Q.copy()
        for _ in range(LYAPUNOV_MAX_ITER):
            nxt = B @ S @ B.T + Q
            if np.max(np.abs(nxt - S)) <= LYAPUNOV_TOL * max(1.0, np.max(np.abs(nxt))):
                S = nxt
                break
            S = nxt
        else:
            raise UnsupportedOracleError("Lyapunov iteration did not converge")
        return GaussianLaw(np.zeros(d), 0.5 * (S + S.T))
    n = int(n)
    if n < 0:
        raise ValueError("step index must be nonnegative")
    m, S = law0.mean.copy(), law0.cov.copy()
    for _ in range(n):
        m = spec.A @ m
        S = B @ S @ B.T + Q
    return GaussianLaw(m, 0.5 * (S + S.T))


def exact_laws_linear(spec: ModelSpec, T: int) -> list[GaussianLaw]:
    kappa, law0 = _check_affine(spec)
    B = spec.A - spec.delta * kappa * np.eye(spec.d)
    Q = spec.delta ** 2 * spec.noise.scale ** 2 * np.eye(spec.d)
    m, S = law0.mean.copy(), law0.cov.copy()
    out = [GaussianLaw(m, S)]
    for _ in range(T):
        m = spec.A @ m
        S = B @ S @ B.T + Q
        out.append(GaussianLaw(m, 0.5 * (S + S.T)))
    return out


# --- Lipschitz probe -------------------------------------------------------

def audit_lipschitz(spec: ModelSpec, n_probes: int = 10_000, seed: int = 0, cloud_size: int = 5) -> float:
    """Largest sampled ratio |f(x1,mu1,z) - f(x2,mu2,z)| / (|x1-x2| + W1(mu1,mu2)).

    Flags violations of the declared sigma/M data but cannot certify them.
    """
    from .transport import w1_points
    g = np.random.default_rng(seed)
    worst = 0.0
    d, m = spec.d, spec.noise.m
    for _ in range(n_probes):
        x1, x2 = g.normal(size=(1, d)) * 3, g.normal(size=(1, d)) * 3
        c1 = g.normal(size=(cloud_size, d)) * 3
        c2 = c1 + g.normal(size=(cloud_size, d))
        z = spec.noise.transform(g.uniform(size=(1, m)))
        num = np.linalg.norm(spec.drift(x1, c1, z) - spec.drift(x2, c2, z))
        den = np.linalg.norm(x1 - x2) + w1_points(c1, c2)
        if den > 0:
            worst = max(worst, float(num / den))
    return worst


# --- JSON ------------------------------------------------------------------

def spec_to_dict(spec: ModelSpec) -> dict:
    to_dict = getattr(spec.interaction, "to_dict", None)
    if to_dict is None:
        raise InvalidSpecError("custom interaction cannot be serialized")
    return {
        "name": spec.name,
        "d": spec.d,
        "A": spec.A.tolist(),
        "delta": spec.delta,
        "interaction": to_dict(),
        "noise": spec.noise.to_dict(),
        "lip": spec.lip.to_dict(),
        "initial": spec.initial.to_dict(),
        "unique_invariant": spec.unique_invariant,
    }


def spec_from_dict(doc: dict) -> ModelSpec:
    try:
        inter = doc["interaction"]
        if inter.get("kind") != "mean-field":
            raise InvalidSpecError(f"unsupported interaction kind {inter.get('kind')!r}")
        nz = doc["noise"]
        d = int(doc["d"])
        noise = NoiseSpec(int(nz.get("m", d)), nz["family"], scale=float(nz.get("scale", 1.0)),
                          half_width=float(nz.get("half_width", 1.0)))
        ini = doc["initial"]
        initial = InitialLawSpec(ini.get("kind", "iid"), ini["mean"], ini["cov"],
                                 float(ini.get("shift_sd", 0.0)))
        lip = LipschitzData(**doc["lip"])
        return ModelSpec(d, np.asarray(doc["A"], dtype=float), float(doc["delta"]),
                         MeanFieldInteraction(float(inter["kappa"])), noise, lip, initial,
                         bool(doc.get("unique_invariant", True)), doc.get("name", "custom"))
    except (KeyError, TypeError) as exc:
        raise InvalidSpecError(f"malformed model document: {exc}") from exc


def spec_hash(spec: ModelSpec) -> str:
    blob = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
