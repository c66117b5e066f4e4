"""The bivariate (all, marked) particle-count chain whose hitting time
{marked == all} approximates the fixation time of a strong sweep.

The chain starts from L_0 = Pi + e_founder, M_0 = e_founder with Pi a
vector of independent Poisson(2*alpha*rho_i) counts, and jumps with the
six per-colony event categories implemented below. The scaled statistic
alpha*T/log(alpha) is the quantity with a finite limit law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import MigrationStructure, RngStream, SweepParams
from .errors import AbsorbedState, BudgetExceeded, DomainError

__all__ = [
    "LMState",
    "LMBatchResult",
    "lm_init",
    "lm_rate_table",
    "lm_step",
    "lm_hitting_time",
    "lm_hitting_times",
    "first_successful_migrant_time",
    "first_successful_migrant_times",
    "birth_death_extinction_times",
]

DEFAULT_EVENT_CAP = 10 ** 8

# per-colony category order (fixed, also the kernel's walk order):
# 0: (+e_i, +e_i)            rate alpha*m_i
# 1: (+e_i, .)               rate alpha*(l_i - m_i)
# 2: (-e_i, -e_i)            rate C(m_i,2)/rho_i
# 3: (-e_i, .)               rate ((l_i-m_i)*m_i + C(l_i-m_i,2))/rho_i
# 4: (-e_i+e_j, -e_i+e_j)    rate mu*a(i,j)*m_i          (j ascending)
# 5: (-e_i+e_j, .)           rate mu*a(i,j)*(l_i - m_i)  (j ascending)
N_CATEGORIES = 6


@dataclass
class LMState:
    ell: np.ndarray  # all particles per colony
    m: np.ndarray    # marked particles per colony
    t: float = 0.0

    def __post_init__(self):
        self.ell = np.asarray(self.ell, dtype=np.int64)
        self.m = np.asarray(self.m, dtype=np.int64)
        if np.any(self.m > self.ell) or np.any(self.m < 0):
            raise DomainError("need 0 <= m <= ell componentwise")

    @property
    def absorbed(self) -> bool:
        return bool(np.array_equal(self.ell, self.m))


def lm_init(ms: MigrationStructure, sp: SweepParams, rng: RngStream) -> LMState:
    """Initial state Pi + e_founder with the founder particle marked."""
    pi = rng.generator.poisson(2.0 * sp.alpha * ms.rho)
    ell = pi.astype(np.int64)
    ell[sp.founder] += 1
    m = np.zeros(ms.d, dtype=np.int64)
    m[sp.founder] = 1
    return LMState(ell=ell, m=m, t=0.0)


def lm_rate_table(state: LMState, ms: MigrationStructure, sp: SweepParams) -> np.ndarray:
    """(d, 6) array of per-colony category rates in the fixed order above
    (migration categories summed over destinations)."""
    ell = state.ell.astype(float)
    m = state.m.astype(float)
    w = ell - m
    arow = ms.a.sum(axis=1)
    rates = np.zeros((ms.d, N_CATEGORIES))
    rates[:, 0] = sp.alpha * m
    rates[:, 1] = sp.alpha * w
    rates[:, 2] = 0.5 * m * (m - 1.0) / ms.rho
    rates[:, 3] = (w * m + 0.5 * w * (w - 1.0)) / ms.rho
    rates[:, 4] = sp.mu * arow * m
    rates[:, 5] = sp.mu * arow * w
    return rates


def lm_step(state: LMState, ms: MigrationStructure, sp: SweepParams, rng: RngStream) -> LMState:
    """Apply one Gillespie event and advance time by the exponential
    holding time. Raises AbsorbedState when m == ell."""
    if state.absorbed:
        raise AbsorbedState("m == ell is absorbing")
    rates = lm_rate_table(state, ms, sp)
    total = rates.sum()
    gen = rng.generator
    holding = gen.exponential(1.0 / total)
    target = gen.uniform(0.0, total)

    ell = state.ell.copy()
    m = state.m.copy()
    csum = 0.0
    choice = None
    for i in range(ms.d):
        for cat in range(N_CATEGORIES):
            csum += rates[i, cat]
            if target < csum:
                choice = (i, cat)
                break
        if choice:
            break
    if choice is None:
        choice = (ms.d - 1, N_CATEGORIES - 1)
    i, cat = choice
    if cat == 0:
        ell[i] += 1
        m[i] += 1
    elif cat == 1:
        ell[i] += 1
    elif cat == 2:
        ell[i] -= 1
        m[i] -= 1
    elif cat == 3:
        ell[i] -= 1
    else:
        weights = ms.a[i].copy()
        j = int(gen.choice(ms.d, p=weights / weights.sum()))
        ell[i] -= 1
        ell[j] += 1
        if cat == 4:
            m[i] -= 1
            m[j] += 1
    assert np.all(m <= ell) and np.all(m >= 0)
    return LMState(ell=ell, m=m, t=state.t + holding)


@dataclass
class LMHit:
    T: float
    scaled: float
    events: int
    first_migrant_time: float  # inf if the marked set never left the founder


@dataclass
class LMBatchResult:
    T: np.ndarray
    scaled: np.ndarray
    first_migrant: np.ndarray  # inf where never
    events: np.ndarray
    max_window_dev: np.ndarray | None
    seeds: np.ndarray | None = None


def _scaled(T: np.ndarray, alpha: float) -> np.ndarray:
    return T * alpha / math.log(alpha)


def lm_hitting_time(
    ms: MigrationStructure,
    sp: SweepParams,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> LMHit:
    """One replicate run to absorption; T in model time plus the scaled
    statistic alpha*T/log(alpha)."""
    if sp.alpha <= 1.0:
        raise DomainError("the scaled statistic needs alpha > 1")
    res = lm_hitting_times(ms, sp, 1, rng, cap=cap)
    return LMHit(
        T=float(res.T[0]),
        scaled=float(res.scaled[0]),
        events=int(res.events[0]),
        first_migrant_time=float(res.first_migrant[0]),
    )


def lm_hitting_times(
    ms: MigrationStructure,
    sp: SweepParams,
    replicates: int,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
    window: float = -1.0,
) -> LMBatchResult:
    """Replicate batch of hitting times via the jitted kernel.

    window >= 0 additionally tracks sup_{t<=window} max_i
    |ell_i(t)/alpha - 2 rho_i| per replicate.
    """
    if sp.alpha <= 1.0:
        raise DomainError("the scaled statistic needs alpha > 1")
    seeds = rng.kernel_seeds(replicates)
    status, T, first_mig, max_dev, events = _kernels.lm_batch(
        sp.alpha, sp.mu, ms.a, ms.rho, sp.founder, seeds, window, False, cap
    )
    if np.any(status == _kernels.BUDGET):
        n_bad = int((status == _kernels.BUDGET).sum())
        raise BudgetExceeded(
            f"{n_bad}/{replicates} replicates exceeded the event budget {cap}; raise cap"
        )
    first_mig = np.where(first_mig < 0.0, np.inf, first_mig)
    return LMBatchResult(
        T=T,
        scaled=_scaled(T, sp.alpha),
        first_migrant=first_mig,
        events=events,
        max_window_dev=max_dev if window >= 0.0 else None,
        seeds=seeds,
    )


def first_successful_migrant_time(
    ms: MigrationStructure,
    sp: SweepParams,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> float:
    """First time the marked set reaches a colony other than the founder
    (inf if absorption happens first)."""
    return float(first_successful_migrant_times(ms, sp, 1, rng, cap=cap)[0])


def first_successful_migrant_times(
    ms: MigrationStructure,
    sp: SweepParams,
    replicates: int,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> np.ndarray:
    """Batch version; runs stop at the first successful migrant."""
    if ms.d < 2:
        raise DomainError("needs at least two colonies")
    if sp.mu == 0.0:
        # no migration: the marked set never leaves the founder colony, and
        # whole-system absorption is not guaranteed either
        return np.full(replicates, np.inf)
    seeds = rng.kernel_seeds(replicates)
    status, T, first_mig, _, _ = _kernels.lm_batch(
        sp.alpha, sp.mu, ms.a, ms.rho, sp.founder, seeds, -1.0, True, cap
    )
    if np.any(status == _kernels.BUDGET):
        raise BudgetExceeded(f"event budget {cap} exceeded; raise cap")
    return np.where(first_mig < 0.0, np.inf, first_mig)


def birth_death_extinction_times(
    birth: float,
    death: float,
    n0: int,
    replicates: int,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> np.ndarray:
    """Extinction times of the linear chain (birth*k up, death*k down)."""
    if death <= birth:
        raise DomainError("need death > birth for a.s. extinction")
    seeds = rng.kernel_seeds(replicates)
    status, T = _kernels.bd_extinction_batch(birth, death, n0, cap, seeds)
    if np.any(status == _kernels.BUDGET):
        raise BudgetExceeded(f"event budget {cap} exceeded; raise cap")
    return T
