"""Euler-Maruyama time stepping, Picard reference flow, synchronous coupling.

All randomness flows through a NoiseGrid, so a run is a pure function of
(model, config, seed) and the particle system and its coupled nonlinear
processes literally read the same Brownian increments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergenceError, ValidationError
from .measures import EmpiricalMeasure
from .models import DiffusionSpec, ModelSpec, mean_field_batch
from .rng import INIT_STEP, NoiseGrid

__all__ = [
    "SimConfig",
    "TrajectoryEnsemble",
    "ReferenceFlow",
    "CoupledEnsemble",
    "euler_step",
    "simulate_particle_system",
    "build_reference_flow",
    "simulate_coupled",
]


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_final: float
    n_particles: int
    seed: int
    replica_id: int = 0
    taming: bool = False
    snapshot_stride: int = 1
    allow_large_dt: bool = False

    def __post_init__(self):
        if self.dt <= 0 or self.t_final <= 0:
            raise ValidationError("dt and t_final must be positive")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValidationError(
                f"t_final={self.t_final} is not an integer multiple of dt={self.dt}"
            )
        if self.dt > 0.1 and not self.allow_large_dt:
            raise ValidationError("dt > 0.1 rejected; set allow_large_dt to override")
        if self.n_particles < 1:
            raise ValidationError("n_particles must be >= 1")
        if self.snapshot_stride < 1:
            raise ValidationError("snapshot_stride must be >= 1")
        if round(steps) >= INIT_STEP:
            raise ValidationError("step count collides with the reserved init-step key")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def noise(self) -> NoiseGrid:
        return NoiseGrid(self.seed, self.replica_id, self.dt)


@dataclass
class TrajectoryEnsemble:
    """Recorded states of one particle-system run."""

    times: np.ndarray           # (n_rec,)
    states: np.ndarray          # (n_rec, N, d)
    model: ModelSpec
    config: SimConfig

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def measure_at(self, rec_index: int) -> EmpiricalMeasure:
        return EmpiricalMeasure.uniform(self.states[rec_index])

    def to_csv(self) -> str:
        """One row per recorded step: t, then particle coordinates flattened."""
        n_rec, n, d = self.states.shape
        header = "t," + ",".join(f"p{i}_x{c}" for i in range(n) for c in range(d))
        lines = [header]
        flat = self.states.reshape(n_rec, n * d)
        for t, row in zip(self.times, flat):
            lines.append(format(t, ".17g") + "," + ",".join(format(v, ".17g") for v in row))
        return "\n".join(lines) + "\n"


@dataclass
class ReferenceFlow:
    """Approximation of the nonlinear flow f_t by M-point snapshots at every step."""

    times: np.ndarray           # (n_steps + 1,)
    snapshots: np.ndarray       # (n_steps + 1, M, d)
    picard_iterations: int
    dt: float
    iterate_gaps: list = field(default_factory=list)  # terminal W2 between successive iterates

    @property
    def m_reference(self) -> int:
        return self.snapshots.shape[1]

    def measure_at(self, step: int) -> EmpiricalMeasure:
        return EmpiricalMeasure.uniform(self.snapshots[step])

    def step_of(self, t: float) -> int:
        """Piecewise-constant lookup: latest snapshot index with time <= t."""
        k = int(np.floor(t / self.dt + 1e-9))
        return min(max(k, 0), len(self.times) - 1)


@dataclass
class CoupledEnsemble:
    """Synchronously coupled particle system and nonlinear processes."""

    times: np.ndarray               # (n_steps + 1,)
    mean_square_gap: np.ndarray     # (n_steps + 1,), (1/N) sum_i |X_i - Xbar_i|^2
    terminal_particles: np.ndarray  # (N, d)
    terminal_nonlinear: np.ndarray  # (N, d)
    particle_states: Optional[np.ndarray] = None   # strided, (n_rec, N, d)
    nonlinear_states: Optional[np.ndarray] = None
    record_times: Optional[np.ndarray] = None

    def gap_to_csv(self) -> str:
        """One row per step: t, mean-square coupling gap."""
        lines = ["t,mean_sq_gap"]
        for t, g in zip(self.times, self.mean_square_gap):
            lines.append(f"{format(t, '.17g')},{format(g, '.17g')}")
        return "\n".join(lines) + "\n"


def _tame(drift: np.ndarray, dt: float, exponent: float) -> np.ndarray:
    """Tamed drift b / (1 + dt^q |b|), applied rowwise."""
    with np.errstate(over="ignore", invalid="ignore"):
        norm = np.linalg.norm(drift, axis=-1, keepdims=True)
        return drift / (1.0 + dt ** exponent * norm)


def euler_step(X, drift, diffusion: DiffusionSpec, dW, dt: float,
               taming: bool = False, taming_exponent: float = 1.0) -> np.ndarray:
    """One explicit step: X + sigma dW - b dt (with b tamed when requested)."""
    X = np.asarray(X, dtype=np.float64)
    drift = np.asarray(drift, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    if taming:
        drift = _tame(drift, dt, taming_exponent)
    out = X + diffusion.apply(dW) - drift * dt
    if not np.all(np.isfinite(out)):
        raise DivergenceError(step=-1, detail="euler_step produced a non-finite state")
    return out


def _advance(X, drift, model: ModelSpec, dW, dt, taming: bool, step: int) -> np.ndarray:
    if taming and model.drift.taming_exponent > 0:
        drift = _tame(drift, dt, model.drift.taming_exponent)
    out = X + model.diffusion.apply(dW) - drift * dt
    bad = ~np.all(np.isfinite(out), axis=-1)
    if np.any(bad):
        raise DivergenceError(step=step, particle=int(np.argmax(bad)))
    return out


def _record_steps(n_steps: int, stride: int) -> np.ndarray:
    ks = np.arange(0, n_steps + 1, stride)
    if ks[-1] != n_steps:
        ks = np.append(ks, n_steps)
    return ks


def simulate_particle_system(model: ModelSpec, config: SimConfig,
                             noise: Optional[NoiseGrid] = None,
                             particle_indices=None) -> TrajectoryEnsemble:
    """Run the N-particle system with the exact empirical mean-field drift.

    Every step is a Jacobi update: all drifts are evaluated against the
    frozen step-start ensemble (self-interaction j=i included), then all
    particles advance simultaneously.  The ensemble is processed in
    key-sorted order internally so that relabeling particle indices permutes
    the output bit-exactly.
    """
    noise = noise or config.noise()
    N, d = config.n_particles, model.dim
    if particle_indices is None:
        indices = np.arange(N)
        unsort = slice(None)
    else:
        particle_indices = np.asarray(particle_indices)
        if len(particle_indices) != N:
            raise ValidationError("particle_indices length must equal n_particles")
        order = np.argsort(particle_indices, kind="stable")
        indices = particle_indices[order]
        unsort = np.argsort(order, kind="stable")

    weights = np.full(N, 1.0 / N)
    X = model.initial_law.sample(noise, indices)
    n_steps = config.n_steps
    recs = _record_steps(n_steps, config.snapshot_stride)
    states = np.empty((len(recs), N, d))
    rec_pos = {int(k): r for r, k in enumerate(recs)}
    states[0] = X[unsort]

    for k in range(n_steps):
        drift = mean_field_batch(model.drift, X, X, weights)
        dW = noise.increments(indices, k, d)
        X = _advance(X, drift, model, dW, config.dt, config.taming, step=k)
        r = rec_pos.get(k + 1)
        if r is not None:
            states[r] = X[unsort]

    return TrajectoryEnsemble(times=recs * config.dt, states=states, model=model, config=config)


def build_reference_flow(model: ModelSpec, M: int, config: SimConfig,
                         picard_iters: int = 2,
                         noise: Optional[NoiseGrid] = None) -> ReferenceFlow:
    """Fixed-point construction of the nonlinear flow.

    Pass 0 simulates an M-particle system self-consistently; each later pass
    re-simulates the same noise keys against the previous pass's frozen
    snapshot flow.  Snapshots are stored at every step so coupled runs can do
    piecewise-constant lookups.
    """
    if M < 1 or picard_iters < 1:
        raise ValidationError("M and picard_iters must be >= 1")
    from .wasserstein import sample_w2  # local import: metrics layer sits above models

    noise = noise or config.noise()
    d = model.dim
    n_steps = config.n_steps
    weights = np.full(M, 1.0 / M)
    indices = np.arange(M)
    X0 = model.initial_law.sample(noise, indices)
    dWs_key = noise  # same keys reused across passes by construction

    prev = None
    iterate_gaps = []
    for it in range(picard_iters):
        X = X0.copy()
        snaps = np.empty((n_steps + 1, M, d))
        snaps[0] = X
        for k in range(n_steps):
            if prev is None:
                drift = mean_field_batch(model.drift, X, X, weights)
            else:
                drift = mean_field_batch(model.drift, X, prev[k], weights)
            dW = dWs_key.increments(indices, k, d)
            X = _advance(X, drift, model, dW, config.dt, config.taming, step=k)
            snaps[k + 1] = X
        if prev is not None:
            iterate_gaps.append(sample_w2(prev[-1], snaps[-1]))
            if len(iterate_gaps) >= 2 and iterate_gaps[-1] > iterate_gaps[-2] + 1e-12:
                warnings.warn(
                    "Picard iterates stopped contracting "
                    f"(terminal W2 {iterate_gaps[-2]:.3e} -> {iterate_gaps[-1]:.3e})",
                    RuntimeWarning,
                )
        prev = snaps

    return ReferenceFlow(times=np.arange(n_steps + 1) * config.dt, snapshots=prev,
                         picard_iterations=picard_iters, dt=config.dt,
                         iterate_gaps=iterate_gaps)


def simulate_coupled(model: ModelSpec, config: SimConfig, flow: ReferenceFlow,
                     noise: Optional[NoiseGrid] = None,
                     store_trajectories: bool = False) -> CoupledEnsemble:
    """Advance X^{i,N} and the nonlinear Xbar^i on identical noise increments.

    The particle system sees its own empirical measure; the nonlinear
    processes see the frozen reference flow.  Both start from the same
    initial samples, so the per-time mean-square gap is the Theorem's
    left-hand side.
    """
    if flow.dt != config.dt:
        raise ValidationError(f"flow dt {flow.dt} does not match run dt {config.dt}")
    n_steps = config.n_steps
    if n_steps + 1 > flow.snapshots.shape[0]:
        raise ValidationError("reference flow does not cover [0, t_final] at this dt")

    noise = noise or config.noise()
    N, d = config.n_particles, model.dim
    weights = np.full(N, 1.0 / N)
    flow_weights = np.full(flow.m_reference, 1.0 / flow.m_reference)
    indices = np.arange(N)

    X = model.initial_law.sample(noise, indices)
    Xbar = X.copy()
    gap = np.empty(n_steps + 1)
    gap[0] = 0.0

    recs = _record_steps(n_steps, config.snapshot_stride) if store_trajectories else None
    if store_trajectories:
        traj_p = np.empty((len(recs), N, d))
        traj_b = np.empty((len(recs), N, d))
        traj_p[0], traj_b[0] = X, Xbar
        rec_pos = {int(k): r for r, k in enumerate(recs)}

    for k in range(n_steps):
        drift_p = mean_field_batch(model.drift, X, X, weights)
        drift_b = mean_field_batch(model.drift, Xbar, flow.snapshots[k], flow_weights)
        dW = noise.increments(indices, k, d)
        X = _advance(X, drift_p, model, dW, config.dt, config.taming, step=k)
        Xbar = _advance(Xbar, drift_b, model, dW, config.dt, config.taming, step=k)
        gap[k + 1] = float(np.mean(np.einsum("id,id->i", X - Xbar, X - Xbar)))
        if store_trajectories:
            r = rec_pos.get(k + 1)
            if r is not None:
                traj_p[r], traj_b[r] = X, Xbar

    return CoupledEnsemble(
        times=np.arange(n_steps + 1) * config.dt,
        mean_square_gap=gap,
        terminal_particles=X,
        terminal_nonlinear=Xbar,
        particle_states=traj_p if store_trajectories else None,
        nonlinear_states=traj_b if store_trajectories else None,
        record_times=recs * config.dt if store_trajectories else None,
    )
