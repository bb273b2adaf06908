"""Particle recursions under the keyed-noise contract.

Four recursions share one update rule ``X' = A X + delta f(X, mu, z)``:

* interacting: ``mu`` is the cloud's own empirical measure;
* auxiliary: ``mu`` is a supplied reference law (exact or a large cloud)
  and the particles start from, and are driven by the same noise as, an
  interacting run;
* coupled: two interacting runs from different initial laws driven by the
  same noise and the same initial normals;
* reference: an interacting run at large N used as a stand-in for the law.

Noise for particle ``i`` at step ``n`` lives at key
``(seed, system, replicate, i, n)``.  Step ``n`` produces time index ``n``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import rng
from .errors import InvalidSpecError, NumericOverflowError
from .model import (GaussianLaw, InitialLawSpec, ModelSpec, MeanFieldInteraction,
                    exact_laws_linear, spec_hash)

# replicate index reserved for reference clouds so their noise never
# overlaps with the replicates of any consumer
REFERENCE_REPLICATE = (1 << 28) - 1
MODES = ("interacting", "auxiliary", "coupled")


@dataclass(frozen=True)
class ParticleCloud:
    points: np.ndarray
    n: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError(f"points must be (N, d), got shape {pts.shape}")
        pts = np.array(pts, copy=True)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def norm1(self) -> float:
        """First absolute moment of the empirical measure."""
        return float(np.linalg.norm(self.points, axis=1).mean())


@dataclass(frozen=True)
class Trajectory:
    clouds: tuple
    spec: ModelSpec
    seed: int
    mode: str = "interacting"
    replicate: int = 0
    partner: Optional[tuple] = None

    @property
    def T(self) -> int:
        return self.clouds[-1].n

    def __len__(self):
        return len(self.clouds)

    def __getitem__(self, n: int) -> ParticleCloud:
        for c in self.clouds:
            if c.n == n:
                return c
        raise KeyError(n)


# --- core array engine -----------------------------------------------------

def draw_noise(spec: ModelSpec, seed: int, replicates, step: int, n_particles: int,
               particles=None, stream: int = rng.Stream.SYSTEM) -> np.ndarray:
    u = rng.uniforms_batch(seed, stream, replicates, step, n_particles, spec.noise.m, particles)
    return spec.noise.transform(u)


def draw_initial(initial: InitialLawSpec, seed: int, replicates, n_particles: int, particles=None) -> np.ndarray:
    reps = np.atleast_1d(replicates)
    return np.stack([initial.sample(seed, int(r), n_particles, particles) for r in reps])


def _check_finite(X: np.ndarray, step: int, replicates) -> None:
    if np.all(np.isfinite(X)):
        return
    r, i = np.argwhere(~np.all(np.isfinite(X), axis=-1))[0]
    raise NumericOverflowError(
        f"non-finite coordinate for particle {i} (replicate {np.atleast_1d(replicates)[r]}) at step {step}",
        particle=int(i), step=step)


def advance(spec: ModelSpec, X: np.ndarray, mu, Z: np.ndarray) -> np.ndarray:
    """One update on an array of shape (..., N, d); ``mu`` is the measure argument."""
    # overflow is reported by _check_finite with context, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        out = X @ spec.A.T
        if spec.delta != 0:
            out = out + spec.delta * spec.drift(X, mu, Z)
    return out


# --- single-step operations on clouds -------------------------------------

def _key_parts(key: rng.NoiseKey) -> tuple[int, int]:
    return key.seed, key.replicate


def step_interacting(cloud: ParticleCloud, spec: ModelSpec, key: rng.NoiseKey,
                     particles=None) -> ParticleCloud:
    if cloud.d != spec.d:
        raise InvalidSpecError(f"cloud dimension {cloud.d} differs from model dimension {spec.d}")
    seed, rep = _key_parts(key)
    step = cloud.n + 1
    Z = draw_noise(spec, seed, [rep], step, cloud.N, particles, key.stream)[0]
    X = advance(spec, cloud.points, cloud.points, Z)
    _check_finite(X[None], step, [rep])
    return ParticleCloud(X, step)


def step_auxiliary(ycloud: ParticleCloud, ref_law, spec: ModelSpec, key: rng.NoiseKey,
                   particles=None) -> ParticleCloud:
    """Advance ``ycloud`` with the measure argument fixed to ``ref_law``."""
    ref_d = ref_law.d if isinstance(ref_law, (ParticleCloud, GaussianLaw)) else None
    if ycloud.d != spec.d or (ref_d is not None and ref_d != spec.d):
        raise InvalidSpecError("dimension mismatch between cloud, reference law and model")
    seed, rep = _key_parts(key)
    step = ycloud.n + 1
    Z = draw_noise(spec, seed, [rep], step, ycloud.N, particles, key.stream)[0]
    Y = advance(spec, ycloud.points, _measure(ref_law), Z)
    _check_finite(Y[None], step, [rep])
    return ParticleCloud(Y, step)


def step_coupled(cloud_a: ParticleCloud, cloud_b: ParticleCloud, law_a, law_b, spec: ModelSpec,
                 key: rng.NoiseKey) -> tuple[ParticleCloud, ParticleCloud]:
    """Advance two clouds with identical noise.

    ``law_a``/``law_b`` are the measure arguments; ``None`` means each
    cloud's own empirical measure.
    """
    if cloud_a.N != cloud_b.N or cloud_a.d != cloud_b.d:
        raise InvalidSpecError("coupled clouds must have equal N and d")
    seed, rep = _key_parts(key)
    step = cloud_a.n + 1
    Z = draw_noise(spec, seed, [rep], step, cloud_a.N, None, key.stream)[0]
    mu_a = cloud_a.points if law_a is None else _measure(law_a)
    mu_b = cloud_b.points if law_b is None else _measure(law_b)
    A2 = advance(spec, cloud_a.points, mu_a, Z)
    B2 = advance(spec, cloud_b.points, mu_b, Z)
    _check_finite(A2[None], step, [rep])
    _check_finite(B2[None], step, [rep])
    return ParticleCloud(A2, step), ParticleCloud(B2, step)


def _measure(law):
    if isinstance(law, ParticleCloud):
        return law.points
    return law


# --- batched simulation ----------------------------------------------------

@dataclass
class BatchState:
    """Final state of a batched run; arrays are (R, N, d)."""

    X: np.ndarray
    Y: Optional[np.ndarray]
    n: int
    replicates: np.ndarray
    history: list = field(default_factory=list)


def _reference_at(reference, n: int):
    if reference is None:
        return None
    if isinstance(reference, Trajectory):
        return reference[n].points
    if callable(reference):
        return _measure(reference(n))
    return _measure(reference[n])


def run_batch(spec: ModelSpec, N: int, T: int, seed: int, replicates: Sequence[int] | int = 1,
              mode: str = "interacting", reference=None, initial_b: Optional[InitialLawSpec] = None,
              particles=None, observer: Optional[Callable] = None, keep: str = "last") -> BatchState:
    """Simulate several replicates at once.

    ``replicates`` is a count or an explicit list of replicate indices.
    ``observer(n, X, Y)`` is called for n = 0..T with the current arrays
    (``Y`` is the auxiliary or coupled partner, else None).
    ``keep="all"`` stores (X, Y) copies for every n in ``history``.
    """
    if N < 1 or T < 0:
        raise ValueError("need N >= 1 and T >= 0")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    reps = np.arange(replicates) if np.isscalar(replicates) else np.asarray(replicates, dtype=np.int64)
    if particles is not None:
        particles = np.asarray(particles, dtype=np.int64)
        if particles.shape != (N,):
            raise ValueError("particles must list one noise index per particle")
    if mode == "auxiliary" and reference is None:
        if not isinstance(spec.interaction, MeanFieldInteraction) or spec.noise.family != "gaussian":
            raise InvalidSpecError("auxiliary mode needs a reference law for non-affine models")
        reference = exact_laws_linear(spec, T)
    if mode == "coupled" and initial_b is None:
        raise InvalidSpecError("coupled mode needs a second initial law")

    X = draw_initial(spec.initial, seed, reps, N, particles)
    Y = None
    if mode == "auxiliary":
        Y = X.copy()
    elif mode == "coupled":
        Y = draw_initial(initial_b, seed, reps, N, particles)
    state = BatchState(X, Y, 0, reps)
    _observe(state, observer, keep)
    for step in range(1, T + 1):
        Z = draw_noise(spec, seed, reps, step, N, particles)
        Xn = advance(spec, X, X, Z)
        _check_finite(Xn, step, reps)
        if mode == "auxiliary":
            Y = advance(spec, Y, _reference_at(reference, step - 1), Z)
            _check_finite(Y, step, reps)
        elif mode == "coupled":
            Y = advance(spec, Y, Y, Z)
            _check_finite(Y, step, reps)
        X = Xn
        state.X, state.Y, state.n = X, Y, step
        _observe(state, observer, keep)
    return state


def _observe(state: BatchState, observer, keep: str) -> None:
    if observer is not None:
        observer(state.n, state.X, state.Y)
    if keep == "all":
        state.history.append((state.X.copy(), None if state.Y is None else state.Y.copy()))


def iterate_clouds(spec: ModelSpec, N: int, seed: int, replicate: int = 0,
                   particles=None) -> Iterator[ParticleCloud]:
    """Endless interacting trajectory, one cloud at a time."""
    X = spec.initial.sample(seed, replicate, N, particles)
    n = 0
    while True:
        yield ParticleCloud(X, n)
        n += 1
        Z = draw_noise(spec, seed, [replicate], n, N, particles)[0]
        X = advance(spec, X, X, Z)
        _check_finite(X[None], n, [replicate])


def simulate(spec: ModelSpec, N: int, T: int, seed: int, mode: str = "interacting",
             reference=None, replicate: int = 0, initial_b: Optional[InitialLawSpec] = None,
             particles=None, keep: str = "all") -> Trajectory:
    """Single-replicate trajectory with clouds for n = 0..T (or only T with keep="last")."""
    state = run_batch(spec, N, T, seed, [replicate], mode, reference, initial_b, particles,
                      keep="all" if keep == "all" else "last")
    if keep == "all":
        clouds = tuple(ParticleCloud(x[0], n) for n, (x, _) in enumerate(state.history))
        partner = None
        if mode != "interacting":
            partner = tuple(ParticleCloud(y[0], n) for n, (_, y) in enumerate(state.history))
    else:
        clouds = (ParticleCloud(state.X[0], T),)
        partner = None if state.Y is None else (ParticleCloud(state.Y[0], T),)
    return Trajectory(clouds, spec, seed, mode, replicate, partner)


def propagate_reference(spec: ModelSpec, N_ref: int, T: int, seed: int, keep: str = "all") -> Trajectory:
    """Large interacting cloud standing in for the law of the nonlinear chain."""
    return simulate(spec, N_ref, T, seed, "interacting", replicate=REFERENCE_REPLICATE, keep=keep)


# --- persistence -----------------------------------------------------------

def save_trajectories(trajs: Sequence[Trajectory], directory: str) -> tuple[str, str]:
    """Write ``trajectory.csv`` (replicate, n, i, x_1..x_d) and ``manifest.json``."""
    if not trajs:
        raise ValueError("nothing to save")
    os.makedirs(directory, exist_ok=True)
    spec = trajs[0].spec
    csv_path = os.path.join(directory, "trajectory.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "n", "i"] + [f"x_{k + 1}" for k in range(spec.d)])
        for tr in trajs:
            for c in tr.clouds:
                for i, row in enumerate(c.points):
                    w.writerow([tr.replicate, c.n, i] + [repr(float(v)) for v in row])
    man_path = os.path.join(directory, "manifest.json")
    manifest = {"spec_hash": spec_hash(spec), "seed": trajs[0].seed, "mode": trajs[0].mode,
                "replicates": [t.replicate for t in trajs], "N": trajs[0].clouds[0].N,
                "T": trajs[0].T}
    with open(man_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, man_path


def load_trajectories(csv_path: str) -> dict:
    """Read a trajectory CSV back into {replicate: {n: (N, d) array}}."""
    rows: dict = {}
    with open(csv_path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for rec in r:
            rep, n = int(rec[0]), int(rec[1])
            rows.setdefault(rep, {}).setdefault(n, []).append([float(v) for v in rec[3:]])
    return {rep: {n: np.array(v) for n, v in by_n.items()} for rep, by_n in rows.items()}
