"""Euler-Maruyama integration of the interacting Wright-Fisher system and
of its variant conditioned on eventual fixation (coth drift), including
entrance-law approximation from near-zero starts.

Trajectories are clamped into [0,1]^d after every step. A colony is
pinned to an exact boundary value when it lies within boundary_tol of the
boundary and the drift points into it; at exact boundaries drift and
noise vanish, so pinned unconditioned trajectories stay put. Conditioned
trajectories that numerically reach the all-zero state (impossible in the
continuum) are flagged degenerate, discarded by the samplers, and
counted in the returned diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MigrationStructure, RngStream, SweepParams
from .errors import DomainError, StepSizeTooLarge

__all__ = [
    "DiffusionState",
    "IntegratorConfig",
    "IntegrationResult",
    "coth_stable",
    "drift_unconditioned",
    "drift_conditioned",
    "diffusion_coefficient",
    "integrate",
    "entrance_law_sample",
    "endpoint_samples",
    "entrance_endpoint_samples",
    "fixation_times",
    "default_dt",
    "default_entrance_eps",
]

COTH_SERIES_CUTOFF = 1e-4
COTH_ONE_CUTOFF = 20.0
RUNNING, FIXED, LOST, DEGENERATE = 0, 1, 2, 3
_OUTCOME_LABELS = {RUNNING: "running", FIXED: "fixed", LOST: "lost", DEGENERATE: "degenerate"}


def default_dt(alpha: float) -> float:
    """Explicit-Euler-stable default step: the drift stiffness grows with
    alpha."""
    if alpha <= 0.0:
        return 1e-3
    return min(1e-3, 0.1 / alpha)


def default_entrance_eps(alpha: float) -> float:
    """One founder-scale frequency unit."""
    return 1.0 / (2.0 * alpha)


@dataclass
class DiffusionState:
    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if np.any(self.x < 0.0) or np.any(self.x > 1.0):
            raise DomainError("frequencies must lie in [0,1]")


@dataclass
class IntegratorConfig:
    dt: float | None = None
    boundary_tol: float = 1e-6
    fixation_tol: float = 1e-3
    conditioned: bool = False
    max_big_steps: int = 10  # diagnostic threshold for |step| > 0.5

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0.0:
            raise DomainError("dt must be positive")
        if not 0.0 < self.boundary_tol < self.fixation_tol < 1.0:
            raise DomainError("need 0 < boundary_tol < fixation_tol < 1")

    def step(self, sp: SweepParams) -> float:
        return self.dt if self.dt is not None else default_dt(sp.alpha)


def coth_stable(z):
    """coth with a series branch below 1e-4 (1/z + z/3) and the constant
    branch 1 above 20."""
    z = np.asarray(z, dtype=float)
    small = z < COTH_SERIES_CUTOFF
    large = z > COTH_ONE_CUTOFF
    mid = ~(small | large)
    out = np.ones_like(z)
    zs = np.where(small, z, 1.0)  # placeholder avoids 0-division warnings
    out = np.where(small, 1.0 / zs + zs / 3.0, out)
    zm = np.where(mid, z, 1.0)
    out = np.where(mid, 1.0 / np.tanh(zm), out)
    return out if out.ndim else float(out)


def _migration_drift(x: np.ndarray, ms: MigrationStructure, mu: float) -> np.ndarray:
    bsum = ms.b.sum(axis=1)
    return mu * (x @ ms.b.T - x * bsum)


def drift_unconditioned(x, ms: MigrationStructure, sp: SweepParams) -> np.ndarray:
    """alpha*x(1-x) + mu*sum_j b(i,j)(x_j - x_i), rowwise for 2-d input."""
    x = np.asarray(x, dtype=float)
    return sp.alpha * x * (1.0 - x) + _migration_drift(x, ms, sp.mu)


def drift_conditioned(x, ms: MigrationStructure, sp: SweepParams) -> np.ndarray:
    """Drift of the fixation-conditioned system: the selection term picks
    up the factor coth(alpha * sum_j rho_j x_j). Undefined at x = 0."""
    x = np.asarray(x, dtype=float)
    z = sp.alpha * (x @ ms.rho)
    if np.any(z == 0.0):
        raise DomainError("conditioned drift is undefined at the all-zero state")
    factor = coth_stable(z)
    if x.ndim == 2:
        factor = np.asarray(factor)[:, None]
    return sp.alpha * x * (1.0 - x) * factor + _migration_drift(x, ms, sp.mu)


def diffusion_coefficient(x, ms: MigrationStructure) -> np.ndarray:
    """sqrt(x_i(1-x_i)/rho_i), clamped under the square root."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.clip(x * (1.0 - x), 0.0, None) / ms.rho)


@dataclass
class IntegrationResult:
    outcome: int           # RUNNING / FIXED / LOST / DEGENERATE
    t_end: float
    t_fix: float | None
    times: np.ndarray | None = None
    path: np.ndarray | None = None
    eps: float | None = None
    dt: float = 0.0
    n_big_steps: int = 0

    @property
    def outcome_label(self) -> str:
        return _OUTCOME_LABELS[self.outcome]


class _BatchEngine:
    """Shared Euler-Maruyama stepping over a replicate batch.

    With settle=True rows stop at FIXED/LOST; with settle=False only
    degenerate rows are taken out and absorbed rows keep integrating (the
    vanishing coefficients freeze them at exact boundaries by themselves),
    which is what endpoint sampling wants.
    """

    def __init__(self, x0: np.ndarray, ms, sp, cfg: IntegratorConfig, rng: RngStream,
                 settle: bool = True):
        self.x = np.array(x0, dtype=float)
        self.ms, self.sp, self.cfg = ms, sp, cfg
        self.settle = settle
        self.dt = cfg.step(sp)
        self.sqdt = math.sqrt(self.dt)
        self.gen = rng.generator
        self.t = 0.0
        n = self.x.shape[0]
        self.status = np.full(n, RUNNING, dtype=np.int64)
        self.t_abs = np.full(n, np.nan)
        self.n_big_steps = 0
        self._classify()

    def _classify(self):
        """Pin boundary colonies and settle outcomes for active rows."""
        cfg = self.cfg
        act = self.status == RUNNING
        if not act.any():
            return
        x = self.x[act]
        if cfg.conditioned:
            deg = ~x.any(axis=1)
            if deg.any():
                idx = np.nonzero(act)[0][deg]
                self.status[idx] = DEGENERATE
                self.t_abs[idx] = self.t
                act = self.status == RUNNING
                if not act.any():
                    return
                x = self.x[act]
        dr = self._drift_safe(x)
        x = np.where((x < cfg.boundary_tol) & (dr <= 0.0), 0.0, x)
        x = np.where((x > 1.0 - cfg.boundary_tol) & (dr >= 0.0), 1.0, x)
        self.x[act] = x
        if not self.settle:
            return
        fixed = np.all(x > 1.0 - cfg.fixation_tol, axis=1)
        idx = np.nonzero(act)[0]
        if fixed.any():
            self.status[idx[fixed]] = FIXED
            self.t_abs[idx[fixed]] = self.t
        if not cfg.conditioned:
            lost = np.all(x < cfg.boundary_tol, axis=1) & ~fixed
            if lost.any():
                self.status[idx[lost]] = LOST
                self.t_abs[idx[lost]] = self.t

    def step(self):
        """One Euler-Maruyama step for all still-running rows."""
        act = self.status == RUNNING
        x = self.x[act]
        if x.size:
            dr = self._drift_safe(x)
            noise = self.gen.standard_normal(x.shape)
            inc = dr * self.dt + diffusion_coefficient(x, self.ms) * self.sqdt * noise
            self.n_big_steps += int((np.abs(inc) > 0.5).sum())
            if self.n_big_steps > self.cfg.max_big_steps:
                raise StepSizeTooLarge(
                    f"{self.n_big_steps} single-step increments exceeded 0.5; shrink dt"
                )
            self.x[act] = np.clip(x + inc, 0.0, 1.0)
        self.t += self.dt
        self._classify()

    def _drift_safe(self, x):
        """Drift that tolerates all-zero rows (conditioned mode) by
        assigning them zero drift; such rows become DEGENERATE in the next
        classification pass."""
        if not self.cfg.conditioned:
            return drift_unconditioned(x, self.ms, self.sp)
        alive = x.any(axis=1)
        if alive.all():
            return drift_conditioned(x, self.ms, self.sp)
        out = np.zeros_like(x)
        if alive.any():
            out[alive] = drift_conditioned(x[alive], self.ms, self.sp)
        return out


def integrate(
    init: DiffusionState,
    ms: MigrationStructure,
    sp: SweepParams,
    cfg: IntegratorConfig,
    horizon: float,
    rng: RngStream,
    record: bool = True,
) -> IntegrationResult:
    """Single trajectory over [0, horizon]; stops early at fixation, loss
    (unconditioned) or a degenerate all-zero touch (conditioned)."""
    if cfg.conditioned and not init.x.any():
        raise DomainError("conditioned integration cannot start at the all-zero state")
    eng = _BatchEngine(init.x[None, :], ms, sp, cfg, rng)
    times = [0.0]
    path = [eng.x[0].copy()]
    n_steps = int(round(horizon / eng.dt))
    for _ in range(n_steps):
        if eng.status[0] != RUNNING:
            break
        eng.step()
        if record:
            times.append(eng.t)
            path.append(eng.x[0].copy())
    outcome = int(eng.status[0])
    t_abs = float(eng.t_abs[0]) if outcome != RUNNING else None
    return IntegrationResult(
        outcome=outcome,
        t_end=eng.t,
        t_fix=t_abs if outcome == FIXED else None,
        times=np.asarray(times) if record else None,
        path=np.asarray(path) if record else None,
        dt=eng.dt,
        n_big_steps=eng.n_big_steps,
    )


def entrance_law_sample(
    founder: int,
    ms: MigrationStructure,
    sp: SweepParams,
    cfg: IntegratorConfig,
    horizon: float,
    rng: RngStream,
    eps: float | None = None,
    record: bool = True,
) -> IntegrationResult:
    """Conditioned trajectory from eps * e_founder (entrance-law
    approximation); eps is recorded in the result metadata."""
    if not cfg.conditioned:
        raise DomainError("entrance-law sampling requires conditioned mode")
    eps = default_entrance_eps(sp.alpha) if eps is None else eps
    x0 = np.zeros(ms.d)
    x0[founder] = eps
    res = integrate(DiffusionState(x=x0), ms, sp, cfg, horizon, rng, record=record)
    res.eps = eps
    return res


def endpoint_samples(
    x0,
    ms: MigrationStructure,
    sp: SweepParams,
    cfg: IntegratorConfig,
    tau: float,
    replicates: int,
    rng: RngStream,
):
    """X(tau) over a replicate batch started from x0.

    Returns (samples, n_degenerate): degenerate conditioned rows are
    dropped from the samples and counted.
    """
    x0 = np.asarray(x0, dtype=float)
    eng = _BatchEngine(np.tile(x0, (replicates, 1)), ms, sp, cfg, rng, settle=False)
    n_steps = int(round(tau / eng.dt))
    for _ in range(n_steps):
        if not (eng.status == RUNNING).any():
            break
        eng.step()
    keep = eng.status != DEGENERATE
    return eng.x[keep], int((~keep).sum())


def entrance_endpoint_samples(
    founder: int,
    ms: MigrationStructure,
    sp: SweepParams,
    cfg: IntegratorConfig,
    tau: float,
    replicates: int,
    rng: RngStream,
    eps: float | None = None,
):
    eps = default_entrance_eps(sp.alpha) if eps is None else eps
    x0 = np.zeros(ms.d)
    x0[founder] = eps
    samples, n_deg = endpoint_samples(x0, ms, sp, cfg, tau, replicates, rng)
    return samples, n_deg, eps


def fixation_times(
    x0,
    ms: MigrationStructure,
    sp: SweepParams,
    cfg: IntegratorConfig,
    max_horizon: float,
    replicates: int,
    rng: RngStream,
):
    """Per-replicate (outcome, absorption time) over a batch.

    Outcomes are FIXED / LOST / DEGENERATE / RUNNING (still running at
    max_horizon); times are nan for RUNNING rows.
    """
    x0 = np.asarray(x0, dtype=float)
    eng = _BatchEngine(np.tile(x0, (replicates, 1)), ms, sp, cfg, rng)
    n_steps = int(round(max_horizon / eng.dt))
    for _ in range(n_steps):
        if not (eng.status == RUNNING).any():
            break
        eng.step()
    return eng.status.copy(), eng.t_abs.copy()
