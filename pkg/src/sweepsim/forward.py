"""Individual-based forward models: the structured Moran chain (diffusion
time scale) and a discrete-generation Wright-Fisher model.

Moran dynamics per colony i of capacity N_i = rho_i*N: every unordered
pair resamples at rate 1/rho_i (a uniform member copies its type onto the
other), every beneficial line places an offspring on a uniform line of
its own colony at rate alpha, and every line copies itself onto a uniform
line of colony j at rate mu*a(i,j). Same-type replacements do not change
the state, so the event loop aggregates per-colony counts and simulates
type-changing events only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import MigrationStructure, RngStream, SweepParams
from .errors import AbsorbedState, BudgetExceeded, DomainError

__all__ = [
    "MoranState",
    "WrightFisherState",
    "Outcome",
    "FixationEstimate",
    "colony_capacities",
    "moran_state_from_frequencies",
    "moran_step",
    "moran_fixation_run",
    "moran_fixation_runs",
    "moran_states_at",
    "estimate_fixation_probability",
    "wf_generation",
    "wf_sweep_durations",
    "wf_conditioned_trajectory",
]

DEFAULT_EVENT_CAP = 10 ** 10


def colony_capacities(rho: np.ndarray, n_total: int) -> np.ndarray:
    """Integer capacities ~ rho_i * N summing exactly to N (floor plus
    largest remainders)."""
    raw = np.asarray(rho, dtype=float) * n_total
    base = np.floor(raw).astype(np.int64)
    short = n_total - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    if base.min() < 1:
        raise DomainError(f"capacity rounding produced an empty colony: {base}")
    return base


@dataclass
class MoranState:
    caps: np.ndarray    # per-colony capacity
    counts: np.ndarray  # per-colony beneficial counts
    time: float = 0.0

    def __post_init__(self):
        self.caps = np.asarray(self.caps, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0) or np.any(self.counts > self.caps):
            raise DomainError("need 0 <= counts <= capacities")

    @property
    def n_total(self) -> int:
        return int(self.caps.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.caps

    @property
    def absorbed(self) -> bool:
        tot = int(self.counts.sum())
        return tot == 0 or tot == self.n_total


def moran_state_from_frequencies(
    ms: MigrationStructure, n_total: int, freqs
) -> MoranState:
    caps = colony_capacities(ms.rho, n_total)
    counts = np.rint(np.asarray(freqs, dtype=float) * caps).astype(np.int64)
    return MoranState(caps=caps, counts=counts)


def _moran_rate_blocks(state: MoranState, ms: MigrationStructure, sp: SweepParams):
    """Aggregated type-changing rates.

    Returns (res, sel, mig_up, mig_dn): res[i] mixed-pair resampling (then
    +-1 with probability 1/2 each), sel[i] beneficial offspring onto a
    wildtype, mig_up[i,j]/mig_dn[i,j] a beneficial/wildtype line of i
    replacing an opposite-type line of j.
    """
    k = state.counts.astype(float)
    n = state.caps.astype(float)
    mixed = k * (n - k)
    res = mixed / ms.rho
    sel = sp.alpha * mixed / n
    mig_up = sp.mu * ms.a * k[:, None] * ((n - k) / n)[None, :]
    mig_dn = sp.mu * ms.a * (n - k)[:, None] * (k / n)[None, :]
    np.fill_diagonal(mig_up, 0.0)
    np.fill_diagonal(mig_dn, 0.0)
    return res, sel, mig_up, mig_dn


def moran_step(
    state: MoranState, ms: MigrationStructure, sp: SweepParams, rng: RngStream
) -> MoranState:
    """Apply one type-changing Gillespie event; time advances by the
    exponential holding time of the aggregated rate.

    Raises AbsorbedState on an absorbed configuration. In a decoupled
    frozen state (possible only at mu=0) the state is returned unchanged.
    """
    if state.absorbed:
        raise AbsorbedState("all-zero / all-full configurations are absorbing")
    res, sel, up, dn = _moran_rate_blocks(state, ms, sp)
    total = res.sum() + sel.sum() + up.sum() + dn.sum()
    if total <= 0.0:
        return state
    gen = rng.generator
    holding = gen.exponential(1.0 / total)
    target = gen.uniform(0.0, total)

    counts = state.counts.copy()
    csum = 0.0
    done = False
    for i in range(ms.d):
        if target < csum + res[i]:
            counts[i] += 1 if (target - csum) < 0.5 * res[i] else -1
            done = True
            break
        csum += res[i]
        if target < csum + sel[i]:
            counts[i] += 1
            done = True
            break
        csum += sel[i]
    if not done:
        for i in range(ms.d):
            if done:
                break
            for j in range(ms.d):
                if j == i:
                    continue
                if target < csum + up[i, j]:
                    counts[j] += 1
                    done = True
                    break
                csum += up[i, j]
                if target < csum + dn[i, j]:
                    counts[j] -= 1
                    done = True
                    break
                csum += dn[i, j]
    if not done:  # 1-ulp fall-through
        return moran_step(state, ms, sp, rng)
    return MoranState(caps=state.caps, counts=counts, time=state.time + holding)


@dataclass
class Outcome:
    fixed: bool
    time: float

    @property
    def label(self) -> str:
        return "fixed" if self.fixed else "lost"


def moran_fixation_run(
    init: MoranState,
    ms: MigrationStructure,
    sp: SweepParams,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> Outcome:
    """Run one replicate to absorption (all-zero or all-full)."""
    if init.absorbed:
        return Outcome(fixed=int(init.counts.sum()) == init.n_total, time=0.0)
    status, T, _, counts, _ = _run_batch(init, ms, sp, 1, rng, np.inf, cap)
    if status[0] == _kernels.FROZEN:
        raise BudgetExceeded(
            "run froze in a decoupled state (mu=0 with mixed colonies); "
            "whole-system absorption is unreachable"
        )
    return Outcome(fixed=bool(status[0] == 1), time=float(T[0]))


def _run_batch(init, ms, sp, replicates, rng, horizon, cap):
    seeds = rng.kernel_seeds(replicates)
    status, T, events, counts = _kernels.moran_batch(
        init.caps, init.counts, sp.alpha, sp.mu, ms.a, ms.rho, horizon, cap, seeds
    )
    if np.any(status == _kernels.BUDGET):
        raise BudgetExceeded(f"event budget {cap} exceeded; raise cap")
    return status, T, events, counts, seeds


def moran_fixation_runs(
    init: MoranState,
    ms: MigrationStructure,
    sp: SweepParams,
    replicates: int,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
):
    """Batch of absorption runs; returns (status, times, final counts,
    per-replicate kernel seeds) with status 0=lost, 1=fixed, 5=frozen
    (mu=0 decoupled trap)."""
    status, T, _, counts, seeds = _run_batch(init, ms, sp, replicates, rng, np.inf, cap)
    return status, T, counts, seeds


def moran_states_at(
    init: MoranState,
    ms: MigrationStructure,
    sp: SweepParams,
    tau: float,
    replicates: int,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> np.ndarray:
    """Counts at time tau for a replicate batch (absorbed runs stay put)."""
    _, _, _, counts, _ = _run_batch(init, ms, sp, replicates, rng, tau, cap)
    return counts


@dataclass
class FixationEstimate:
    p_hat: float
    std_err: float
    n_fixed: int
    replicates: int

    def z_against(self, target: float) -> float:
        se = max(self.std_err, 1e-12)
        return (self.p_hat - target) / se


def estimate_fixation_probability(
    init: MoranState,
    ms: MigrationStructure,
    sp: SweepParams,
    replicates: int,
    rng: RngStream,
    cap: int = DEFAULT_EVENT_CAP,
) -> FixationEstimate:
    """Fraction of replicates absorbed at all-full, with binomial SE."""
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    tot = int(init.counts.sum())
    if tot == init.n_total:
        return FixationEstimate(1.0, 0.0, replicates, replicates)
    if tot == 0:
        return FixationEstimate(0.0, 0.0, 0, replicates)
    status, _, _, _ = moran_fixation_runs(init, ms, sp, replicates, rng, cap)
    n_fixed = int((status == 1).sum())
    p = n_fixed / replicates
    se = float(np.sqrt(p * (1.0 - p) / replicates))
    return FixationEstimate(p_hat=p, std_err=se, n_fixed=n_fixed, replicates=replicates)


# ---------------------------------------------------------------------------
# Wright-Fisher
# ---------------------------------------------------------------------------

@dataclass
class WrightFisherState:
    n: int             # individuals per colony
    s: float           # per-generation selective advantage
    m: float           # per-generation migration probability
    freq: np.ndarray   # beneficial frequency per colony
    generation: int = 0

    def __post_init__(self):
        self.freq = np.asarray(self.freq, dtype=float)
        if np.any(self.freq < 0.0) or np.any(self.freq > 1.0):
            raise DomainError("frequencies must lie in [0,1]")


def _wf_expected(freq: np.ndarray, ms: MigrationStructure, s: float, m: float) -> np.ndarray:
    """Post-selection, post-migration expected frequencies.

    Selection weighting w(x) = x(1+s)/(1+sx); migration mixes in the
    forward kernel a(i,j) row-normalized, with total immigrant share m.
    """
    w = freq * (1.0 + s) / (1.0 + s * freq)
    arow = ms.a.sum(axis=1)
    kernel = ms.a / arow[:, None]
    return (1.0 - m) * w + m * (kernel @ w)


def wf_generation(
    state: WrightFisherState, ms: MigrationStructure, rng: RngStream
) -> WrightFisherState:
    """One binomial reproduction step for every colony."""
    p = _wf_expected(state.freq, ms, state.s, state.m)
    draws = rng.generator.binomial(state.n, p)
    return WrightFisherState(
        n=state.n,
        s=state.s,
        m=state.m,
        freq=draws / state.n,
        generation=state.generation + 1,
    )


def _wf_run_batch(ms, n, s, m, freq0, replicates, rng, max_generations):
    """Vectorized batch run to absorption. Returns (fixed mask, durations,
    trajectory of replicate 0 while it is alive)."""
    gen = rng.generator
    freq = np.tile(np.asarray(freq0, dtype=float), (replicates, 1))
    active = np.ones(replicates, dtype=bool)
    duration = np.zeros(replicates, dtype=np.int64)
    fixed = np.zeros(replicates, dtype=bool)
    arow = ms.a.sum(axis=1)
    kernel = ms.a / arow[:, None]
    for g in range(1, max_generations + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        x = freq[idx]
        w = x * (1.0 + s) / (1.0 + s * x)
        p = (1.0 - m) * w + m * (w @ kernel.T)
        x = gen.binomial(n, p) / n
        freq[idx] = x
        lost = np.all(x <= 0.0, axis=1)
        fix = np.all(x >= 1.0, axis=1)
        ended = lost | fix
        duration[idx[ended]] = g
        fixed[idx[fix]] = True
        active[idx[ended]] = False
    return fixed, duration, freq


def wf_sweep_durations(
    ms: MigrationStructure,
    n: int,
    s: float,
    m: float,
    freq0,
    target_fixed: int,
    rng: RngStream,
    max_generations: int = 10 ** 6,
    batch: int = 512,
) -> np.ndarray:
    """Generations-to-fixation for runs conditioned on fixation
    (rejection sampling: lost runs are discarded)."""
    out = []
    while len(out) < target_fixed:
        fixed, duration, _ = _wf_run_batch(ms, n, s, m, freq0, batch, rng, max_generations)
        out.extend(duration[fixed].tolist())
    return np.asarray(out[:target_fixed], dtype=float)


def wf_conditioned_trajectory(
    ms: MigrationStructure,
    n: int,
    s: float,
    m: float,
    freq0,
    rng: RngStream,
    max_generations: int = 10 ** 6,
    max_tries: int = 10 ** 5,
) -> np.ndarray:
    """Full frequency path of the first replicate that fixes.

    Returns an array of shape (generations+1, d) including the initial
    state; used for figure-style trajectory output.
    """
    freq0 = np.asarray(freq0, dtype=float)
    for _ in range(max_tries):
        state = WrightFisherState(n=n, s=s, m=m, freq=freq0.copy())
        path = [state.freq.copy()]
        for _ in range(max_generations):
            state = wf_generation(state, ms, rng)
            path.append(state.freq.copy())
            if np.all(state.freq >= 1.0):
                return np.asarray(path)
            if np.all(state.freq <= 0.0):
                break
    raise BudgetExceeded(f"no fixing run within {max_tries} tries")
