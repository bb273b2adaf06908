"""Experiment orchestration: one function per kind, a shared worker pool and
a collector that orders rows by grid coordinates."""

from __future__ import annotations

import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .. import __version__, analysis, bounds
from ..dynamics import REFERENCE_REPLICATE, propagate_reference, run_batch
from ..errors import ConfigError, RegimeError, UnsupportedOracleError
from ..model import (GaussianLaw, MeanFieldInteraction, ModelSpec, builtin_model, exact_law_linear,
                     exact_laws_linear, spec_from_dict, spec_hash, spec_to_dict, validate_model)
from ..transport import w1_to_gaussian_sorted
from .config import ExperimentConfig, config_from_dict
from .io import ResultTable, read_manifest, write_table

BLOCK_ELEMENTS = 200_000     # particles x replicates per worker task
ZETA_HORIZON = 500           # steps scanned for the sup over n of exponential moments

# which regime flag each kind asserts before running
ASSERTED_REGIME = {
    "fixed-point": "th2_regime",
    "poc-sweep": "th3_regime",
    "uniform-sweep": "th3_regime",
    "chaos": "th3_regime",
}


def resolve_model(cfg: ExperimentConfig) -> ModelSpec:
    ref = cfg.model
    if ref.inline is not None:
        return spec_from_dict(ref.inline)
    if ref.builtin is None:
        raise ConfigError("model needs either 'builtin' or 'inline'")
    return builtin_model(ref.builtin, dict(ref.params))


def _require_regime(spec: ModelSpec, flag: str, cfg: ExperimentConfig) -> None:
    rep = validate_model(spec)
    if getattr(rep, flag):
        return
    failed = [k for k, v in rep.assumptions.items() if v is False]
    why = []
    if failed:
        why.append("failed assumptions: " + ", ".join(failed))
    if rep.constants is not None and spec.delta >= rep.constants.a0:
        why.append(f"delta = {spec.delta} is not below a0 = {rep.constants.a0}")
    why.extend(rep.diagnostics)
    raise RegimeError(f"kind {cfg.kind} needs {flag}; " + "; ".join(why))


# --- worker pool -------------------------------------------------------------

def _map_sorted(fn: Callable, tasks: list, threads: int) -> list:
    """Run ``fn`` over ``tasks`` and return results in task order."""
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, t) for t in tasks]
        return [f.result() for f in futures]


def _blocks(R: int, N: int) -> list[np.ndarray]:
    size = max(1, min(R, BLOCK_ELEMENTS // max(N, 1)))
    return [np.arange(s, min(R, s + size)) for s in range(0, R, size)]


# --- reference laws ------------------------------------------------------------

def gaussian_oracle_available(spec: ModelSpec) -> bool:
    return (spec.d == 1 and isinstance(spec.interaction, MeanFieldInteraction)
            and spec.noise.family == "gaussian" and spec.initial.gaussian_law() is not None)


@dataclass
class Reference:
    """The law each cloud is compared with: exact Gaussians or a large cloud."""

    kind: str
    T: int
    laws: Optional[list] = None
    limit: Optional[GaussianLaw] = None
    cloud: Optional[list] = None
    N_ref: Optional[int] = None

    def law(self, n: int):
        return self.laws[n] if self.kind == "gaussian" else self.cloud[n]

    def distances(self, X: np.ndarray, n) -> np.ndarray:
        """W1 of each replicate cloud in ``X`` (R, N, d) to the law at step n (or "inf")."""
        if self.kind == "gaussian":
            law = self.limit if n == "inf" else self.laws[n]
            return np.maximum(w1_to_gaussian_sorted(np.sort(X[..., 0], axis=-1),
                                                    float(law.mean[0]), law.std), 0.0)
        target = self.cloud[self.T if n == "inf" else n]
        return np.array([analysis.w1_clouds(x, target) for x in X])

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian-oracle", "T": self.T}
        return {"kind": "reference-cloud", "T": self.T, "N_ref": self.N_ref,
                "replicate": REFERENCE_REPLICATE, "limit": f"reference cloud at n={self.T}"}


def build_reference(spec: ModelSpec, T: int, max_N: int, seed: int, N_ref: Optional[int] = None,
                    need_limit: bool = False) -> Reference:
    if gaussian_oracle_available(spec):
        limit = exact_law_linear(spec, math.inf) if need_limit else None
        return Reference("gaussian", T, laws=exact_laws_linear(spec, T), limit=limit)
    n_ref = max(N_ref or 0, 10 * max_N)
    traj = propagate_reference(spec, n_ref, T, seed)
    return Reference("cloud", T, cloud=[c.points for c in traj.clouds], N_ref=n_ref)


def _sweep_task(spec, seed, ns, reference, with_limit):
    want = {n: j for j, n in enumerate(ns)}

    def task(arg):
        N, reps = arg
        W = np.zeros((reps.size, len(ns)))
        Wl = np.zeros((reps.size, len(ns))) if with_limit else None

        def obs(n, X, Y):
            j = want.get(n)
            if j is not None:
                W[:, j] = reference.distances(X, n)
                if with_limit:
                    Wl[:, j] = reference.distances(X, "inf")

        run_batch(spec, N, max(ns), seed, reps, observer=obs)
        return W, Wl

    return task


def w1_sweep(spec: ModelSpec, Ns, ns, replicates: int, seed: int, reference: Reference,
             with_limit: bool = False, threads: int = 1):
    """W1 of mu_n^N to the reference at every (N, n); arrays of shape (R, len(Ns), len(ns))."""
    ns = sorted(set(int(n) for n in ns))
    tasks = [(int(N), b) for N in Ns for b in _blocks(replicates, int(N))]
    out = _map_sorted(_sweep_task(spec, seed, ns, reference, with_limit), tasks, threads)
    W = np.zeros((replicates, len(Ns), len(ns)))
    Wl = np.zeros_like(W) if with_limit else None
    for (N, reps), (w, wl) in zip(tasks, out):
        i = list(Ns).index(N)
        W[reps, i] = w
        if with_limit:
            Wl[reps, i] = wl
    return ns, W, Wl


# --- exponential-moment constant ---------------------------------------------------

def _abs_mgf_gaussian(m: float, s: float, z: float) -> float:
    """E exp(z |X|) for X ~ N(m, s^2)."""
    if s == 0:
        return math.exp(z * abs(m))
    a = 0.5 * z * z * s * s
    return math.exp(a + z * m) * ndtr(m / s + z * s) + math.exp(a - z * m) * ndtr(-m / s + z * s)


def _root_at_two(f: Callable[[float], float]) -> float:
    hi = 1.0
    while f(hi) < 2:
        hi *= 2
        if hi > 1e6:
            raise UnsupportedOracleError("exponential moment stays below 2")
    lo = 0.0
    while f(hi / 2) >= 2 and hi > 1e-12:
        hi /= 2
    root = brentq(lambda z: f(z) - 2, lo, hi, xtol=1e-14, rtol=1e-12)
    # step inside so the defining inequality holds despite rounding
    return root * (1 - 1e-9)


def exponential_moment_constant(spec: ModelSpec) -> tuple[float, str]:
    """zeta0 with sup_n int exp(zeta0 |x|) mu_n(dx) <= 2, and how it was obtained.

    Affine Gaussian models in d = 1 use the exact laws.  Bounded-noise models
    with a Gaussian initial law in d = 1 use the propagated bound
    f_n(z) <= f_0(z) exp(c2 z delta / (1 - kappa1)) with c2 the noise
    radius and kappa1 = e^-omega + 2 delta M.
    """
    if spec.d != 1:
        raise UnsupportedOracleError("exponential-moment constant is implemented for d = 1")
    law0 = spec.initial.gaussian_law()
    if law0 is None:
        raise UnsupportedOracleError("needs a Gaussian initial law")
    if gaussian_oracle_available(spec):
        laws = exact_laws_linear(spec, ZETA_HORIZON) + [exact_law_linear(spec, math.inf)]
        ms = [(float(L.mean[0]), L.std) for L in laws]
        return _root_at_two(lambda z: max(_abs_mgf_gaussian(m, s, z) for m, s in ms)), "exact-gaussian-laws"
    if spec.noise.family == "bounded-uniform" and spec.lip.M is not None:
        kappa1 = math.exp(-spec.omega) + 2 * spec.delta * spec.lip.M
        if kappa1 >= 1:
            raise UnsupportedOracleError(f"kappa1 = {kappa1} >= 1")
        c2 = spec.noise.half_width * math.sqrt(spec.noise.m)
        m0, s0 = float(law0.mean[0]), law0.std
        growth = c2 * spec.delta / (1 - kappa1)
        return (_root_at_two(lambda z: _abs_mgf_gaussian(m0, s0, z) * math.exp(growth * z)),
                "propagated-bound")
    raise UnsupportedOracleError("no exponential-moment constant for this noise family")


# --- curves shared by tails and bounds ------------------------------------------------

CURVE_COLUMNS = ("poly", "poly_valid", "exp", "exp_valid", "iid", "iid_valid",
                 "iid_gauss", "iid_gauss_valid")


class CurveSet:
    """Evaluates every theoretical tail curve with its validity flag."""

    def __init__(self, spec: ModelSpec, cfg: ExperimentConfig):
        c = cfg.constants
        self.spec, self.c = spec, c
        self.report = validate_model(spec, gamma0=c.gamma0, gamma=c.gamma if spec.lip.M is not None else None)
        self.dc = self.report.constants
        self.zeta0, self.zeta_source = c.zeta0, "config"
        if self.zeta0 is None:
            try:
                self.zeta0, self.zeta_source = exponential_moment_constant(spec)
            except UnsupportedOracleError as err:
                self.zeta_source = f"unavailable: {err}"
        self.params = None if self.zeta0 is None else bounds.TransportBoundParams(self.zeta0, c.c_d, spec.d)

    def initial_threshold(self, n: int, eps: float) -> float:
        # W1(mu_0^N, mu_0) threshold in the initial-condition term
        return 2 * self.dc.sigma * self.c.gamma0 * self.dc.theta_rate ** n * eps

    def evaluate(self, N: int, eps: float, initial_term: float) -> tuple:
        spec, c, rep = self.spec, self.c, self.report
        d = spec.d
        poly = bounds.poly_uniform_bound(N, eps, c.C1, spec.lip.alpha, d, initial_term, c.N0)
        row = [poly.value, poly.valid and rep.th5_regime]
        if spec.lip.M is not None:
            ex = bounds.exp_uniform_bound(N, eps, c.C1, d, initial_term, c.N0)
            vs = None
            if self.params is not None:
                vs = bounds.varsigma1(eps, c.gamma, spec.delta, spec.lip.M, self.params)
            iid = bounds.iid_exp_bound(N, eps, c.a1, c.a2, c.N0, varsigma=vs)
            row += [ex.value, ex.valid and rep.th6_regime, iid.value, iid.valid and rep.thm6_regime]
        else:
            row += [None, False, None, False]
        if spec.noise.family == "gaussian":
            # the strengthened variant has no explicit gate, so it is never flagged valid
            g = bounds.iid_exp_bound(N, eps, c.a1, c.a2, c.N0, gaussian_moment=True)
            row += [g.value, False]
        else:
            row += [None, False]
        return tuple(row)

    def boissard(self, N: int, eps: float) -> tuple:
        if self.params is None:
            return (None, False)
        b = bounds.boissard_tail(N, eps, self.params)
        return (b.value, b.valid)

    def to_dict(self) -> dict:
        return {"bound_constants": self.c.model_dump(mode="json"), "zeta0": self.zeta0,
                "zeta0_source": self.zeta_source,
                "C0": None if self.params is None else self.params.C0,
                "derived": None if self.dc is None else self.dc.to_dict(),
                "regimes": self.report.flags()}


# --- experiment kinds ------------------------------------------------------------------

def _run_validate(spec, cfg, threads):
    c = cfg.constants
    rep = validate_model(spec, gamma0=c.gamma0, gamma=c.gamma if spec.lip.M is not None else None)
    rows = [(k, v) for k, v in rep.assumptions.items()]
    rows += [(k, v) for k, v in rep.flags().items()]
    rows += [("norm_A", rep.norm_A), ("omega", rep.omega)]
    if rep.constants is not None:
        rows += [(k, v) for k, v in rep.constants.to_dict().items() if k != "omega"]
    rows += [("diagnostic", msg) for msg in rep.diagnostics]
    return ("key", "value"), rows, {"validation": rep.to_dict()}


def _run_simulate(spec, cfg, threads):
    T = cfg.T or (max(cfg.n) if cfg.n else 100)
    d = spec.d
    oracle = exact_laws_linear(spec, T) if gaussian_oracle_available(spec) else None

    def task(arg):
        N, reps = arg
        rows = []

        def obs(n, X, Y):
            w = None
            if oracle is not None:
                law = oracle[n]
                w = w1_to_gaussian_sorted(np.sort(X[..., 0], axis=-1), float(law.mean[0]), law.std)
            means = X.mean(axis=1)
            norm1 = np.linalg.norm(X, axis=2).mean(axis=1)
            for k, r in enumerate(reps):
                rows.append((N, int(r), n, *means[k].tolist(), float(norm1[k]),
                             None if w is None else max(float(w[k]), 0.0)))

        run_batch(spec, N, T, cfg.seed, reps, observer=obs)
        return rows

    tasks = [(N, b) for N in cfg.N for b in _blocks(cfg.replicates, N)]
    rows = [r for part in _map_sorted(task, tasks, threads) for r in part]
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    cols = ("N", "replicate", "n", *[f"mean_{j + 1}" for j in range(d)], "norm1", "w1_oracle")
    return cols, rows, {"T": T, "reference": {"kind": "gaussian-oracle" if oracle else "none"}}


def _run_fixed_point(spec, cfg, threads):
    N_ref = cfg.N_ref or 100_000
    rep = analysis.picard_fixed_point(spec, N_ref=N_ref, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
    rows = [(k + 1, float(g), float(f)) for k, (g, f) in enumerate(zip(rep.gaps, rep.floors))]
    summary = {"converged": rep.converged, "iterations": rep.iterations, "rate": rep.rate,
               "floor": rep.floor, "N_ref": N_ref, "w1_oracle": None}
    if gaussian_oracle_available(spec):
        lim = exact_law_linear(spec, math.inf)
        x = np.sort(rep.cloud.points[:, 0])
        summary["w1_oracle"] = float(w1_to_gaussian_sorted(x, float(lim.mean[0]), lim.std))
    return ("iteration", "gap", "floor"), rows, {"summary": summary}


def _sweep_common(spec, cfg, threads, with_limit):
    ns = sorted(set(cfg.n))
    ref = build_reference(spec, max(ns), max(cfg.N), cfg.seed, cfg.N_ref, need_limit=with_limit)
    ns, W, Wl = w1_sweep(spec, list(cfg.N), ns, cfg.replicates, cfg.seed, ref, with_limit, threads)
    return ns, ref, W, Wl


def _mean_se(w: np.ndarray) -> tuple[float, float]:
    se = float(w.std(ddof=1) / math.sqrt(w.size)) if w.size > 1 else math.nan
    return float(w.mean()), se


def _run_poc_sweep(spec, cfg, threads):
    ns, ref, W, _ = _sweep_common(spec, cfg, threads, False)
    rows = []
    for i, N in enumerate(cfg.N):
        for j, n in enumerate(ns):
            rows.append((N, n, *_mean_se(W[:, i, j])))
    rows.sort(key=lambda r: (r[0], r[1]))
    return ("N", "n", "mean_w1", "stderr"), rows, {"reference": ref.to_dict()}


def _run_uniform_sweep(spec, cfg, threads):
    ns, ref, W, Wl = _sweep_common(spec, cfg, threads, True)
    rows = []
    for i, N in enumerate(cfg.N):
        for j, n in enumerate(ns):
            rows.append((N, n, *_mean_se(W[:, i, j]), *_mean_se(Wl[:, i, j])))
    rows.sort(key=lambda r: (r[0], r[1]))
    order = np.argsort(cfg.N)
    Ns = np.asarray(cfg.N)[order]
    pos = [j for j, n in enumerate(ns) if n >= 1]
    summary = {}
    if len(Ns) > 1 and cfg.replicates > 1 and pos:
        s = analysis.summarize_sweep(Ns, W[:, order][:, :, pos], [ns[j] for j in pos])
        li = analysis.limit_interchange(Wl[:, order], Ns, seed=cfg.seed % 2 ** 32)
        summary = {"max_mean_w1": s.max_mean, "max_stderr": s.max_se, "argmax_n": s.argmax_n,
                   "loglog_slope": s.loglog_slope, "monotone": s.monotone,
                   "interchange": li.__dict__}
    cols = ("N", "n", "mean_w1", "stderr", "mean_w1_limit", "stderr_limit")
    return cols, rows, {"reference": ref.to_dict(), "summary": summary}


TAIL_COLUMNS = ("N", "n", "eps", "p_hat", "p_lo", "p_hi", *CURVE_COLUMNS,
                "p_hat_aux", "boissard_aux", "boissard_aux_valid")


def _run_tails(spec, cfg, threads):
    if cfg.replicates < 100:
        raise ConfigError("tails needs at least 100 replicates")
    curves = CurveSet(spec, cfg)
    ns = sorted(set(cfg.n))
    ref = build_reference(spec, max(ns), max(cfg.N), cfg.seed, cfg.N_ref)
    want = {n: j for j, n in enumerate(ns)}

    def task(arg):
        N, reps = arg
        W = np.zeros((reps.size, len(ns)))
        V = np.zeros_like(W)
        W0 = np.zeros(reps.size)

        def obs(n, X, Y):
            if n == 0:
                W0[:] = ref.distances(X, 0)
            j = want.get(n)
            if j is not None:
                W[:, j] = ref.distances(X, n)
                V[:, j] = ref.distances(Y, n)

        law = ref.laws if ref.kind == "gaussian" else ref.cloud
        run_batch(spec, N, max(ns), cfg.seed, reps, mode="auxiliary", reference=law, observer=obs)
        return W, V, W0

    tasks = [(N, b) for N in cfg.N for b in _blocks(cfg.replicates, N)]
    parts = _map_sorted(task, tasks, threads)
    rows = []
    for N in sorted(set(cfg.N)):
        got = [p for (tN, _), p in zip(tasks, parts) if tN == N]
        W = np.concatenate([g[0] for g in got])
        V = np.concatenate([g[1] for g in got])
        W0 = np.concatenate([g[2] for g in got])
        for j, n in enumerate(ns):
            tc = analysis.tail_estimator(W[:, j], cfg.eps)
            aux = analysis.tail_estimator(V[:, j], cfg.eps)
            for e, ph, lo, hi, pa in zip(cfg.eps, tc.p_hat, tc.lo, tc.hi, aux.p_hat):
                init = cfg.constants.initial_term
                if init is None:
                    init = float(np.mean(W0 > curves.initial_threshold(n, e)))
                b_val, b_ok = curves.boissard(N, e)
                rows.append((N, n, float(e), float(ph), float(lo), float(hi),
                             *curves.evaluate(N, e, init), float(pa), b_val,
                             b_ok and ref.kind == "gaussian"))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    meta = {"reference": ref.to_dict(), "constants": curves.to_dict(),
            "initial_term": "config" if cfg.constants.initial_term is not None else "empirical"}
    return TAIL_COLUMNS, rows, meta


def _run_chaos(spec, cfg, threads):
    T = cfg.T or 4000

    def task(N):
        return analysis.chaos_statistic(spec, N, cfg.k, T, cfg.burn_in, cfg.seed, cfg.replicates)

    Ns = sorted(set(cfg.N))
    reps = _map_sorted(task, Ns, threads)
    rows = [(r.N, r.k, r.statistic, r.stderr, r.floor, r.correlation_12) for r in reps]
    meta = {"T": T, "battery": analysis.BATTERY_VERSION,
            "per_function": {str(r.N): r.per_function for r in reps}}
    return ("N", "k", "statistic", "stderr", "floor", "correlation_12"), rows, meta


def _run_bounds(spec, cfg, threads):
    curves = CurveSet(spec, cfg)
    init = cfg.constants.initial_term or 0.0
    rows = []
    for N in sorted(set(cfg.N)):
        for e in sorted(set(cfg.eps)):
            rows.append((N, float(e), *curves.evaluate(N, e, init), *curves.boissard(N, e)))
    cols = ("N", "eps", *CURVE_COLUMNS, "boissard", "boissard_valid")
    return cols, rows, {"constants": curves.to_dict(), "initial_term": init}


KIND_RUNNERS = {
    "validate": _run_validate,
    "simulate": _run_simulate,
    "fixed-point": _run_fixed_point,
    "poc-sweep": _run_poc_sweep,
    "uniform-sweep": _run_uniform_sweep,
    "tails": _run_tails,
    "chaos": _run_chaos,
    "bounds": _run_bounds,
}


def output_dir(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out, f"{cfg.kind}-{cfg.config_hash()}")


def run(cfg: ExperimentConfig, threads: int = 1, persist: bool = True) -> ResultTable:
    """Run one experiment; with ``persist`` the table and manifest are written."""
    spec = resolve_model(cfg)
    flag = ASSERTED_REGIME.get(cfg.kind)
    if flag is not None:
        _require_regime(spec, flag, cfg)
    t0 = time.perf_counter()
    cols, rows, meta = KIND_RUNNERS[cfg.kind](spec, cfg, max(1, int(threads)))
    manifest = {
        "tool": "wipslab",
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "kind": cfg.kind,
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash(),
        "model_spec": spec_to_dict(spec),
        "spec_hash": spec_hash(spec),
        **meta,
        "wall_time_s": time.perf_counter() - t0,
    }
    table = ResultTable(cfg.kind, tuple(cols), rows, manifest)
    if persist:
        write_table(table, output_dir(cfg))
    return table


def rerun(manifest_path: str, out: Optional[str] = None, threads: int = 1) -> tuple[ResultTable, bool]:
    """Re-run the experiment recorded in a manifest; reports whether the table is byte-identical."""
    man = read_manifest(manifest_path)
    if "config" not in man:
        raise ConfigError(f"{manifest_path} has no recorded config")
    doc = dict(man["config"])
    if out is not None:
        doc["out"] = out
    cfg = config_from_dict(doc)
    table = run(cfg, threads=threads)
    same = table.manifest.get("results_sha256") == man.get("results_sha256")
    return table, same
