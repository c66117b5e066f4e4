"""Labeled branching-coalescing-migrating particle system (the ancestral
selection graph of the structured sweep model), its Poisson equilibrium
and time reversal, marking/percolation, moment-duality estimators with a
truncated-generator oracle, and the coupled two-group construction behind
the duality conditioned on fixation.

Dynamics, per colony i: every unordered pair of particles coalesces at
rate 1/rho_i into one fresh particle, every particle branches at rate
alpha into two fresh particles, and every particle is replaced at rate
mu*kern(i,j) by a fresh particle in colony j, where kern is the backward
kernel b or, for the equilibrium time reversal, the forward kernel a.
Every event assigns fresh labels; the append-only event log supports
percolation of markings backward in time with a single reverse sweep.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp_sparse
from scipy.sparse.linalg import expm_multiply

from . import _kernels
from . import sde
from .core import MigrationStructure, RngStream, SweepParams
from .errors import DomainError, EmptyConfiguration, TruncationError

__all__ = [
    "AsgEvent",
    "ParticleSystemState",
    "MarkingResult",
    "EquilibriumSample",
    "YZOutcome",
    "DualityEstimate",
    "DualOracleResult",
    "BACKWARD_B",
    "REVERSED_A",
    "asg_step",
    "run_asg",
    "asg_rate_table",
    "sample_equilibrium",
    "equilibrium_counts",
    "detailed_balance_check",
    "mark_and_percolate",
    "duality_lhs_vs_rhs",
    "truncated_dual_moment",
    "fixation_probability_closed_form",
    "fixation_probability_series",
    "coupled_yz_run",
    "conditioned_moment_yz",
    "reversed_marked_run",
    "kcounts_at",
]

BACKWARD_B = "backward_b"
REVERSED_A = "reversed_a"

COALESCENCE = "coalescence"
BRANCHING = "branching"
MIGRATION = "migration"


@dataclass
class AsgEvent:
    kind: str
    time: float
    colony: int
    dest: int | None
    replaced: tuple[int, ...]
    replacing: tuple[int, ...]


class ParticleSystemState:
    """Mutable labeled particle configuration with an event log.

    Single-owner: one replicate per instance. Labels are consecutive
    64-bit counters (the uniform labels of the construction only ensure
    distinctness, which counters give deterministically).
    """

    def __init__(self, d: int, time: float = 0.0):
        self.d = d
        self.time = time
        self.by_colony: list[list[int]] = [[] for _ in range(d)]
        self.events: list[AsgEvent] = []
        self.initial: dict[int, int] = {}
        self._next = 0

    @classmethod
    def from_counts(cls, counts, time: float = 0.0) -> "ParticleSystemState":
        counts = np.asarray(counts, dtype=np.int64)
        state = cls(d=len(counts), time=time)
        state.add_initial(counts)
        return state

    def add_initial(self, counts) -> list[int]:
        """Add time-0 particles (allowed before any event); returns labels."""
        if self.events:
            raise DomainError("initial particles must be added before events")
        new = []
        for i, c in enumerate(np.asarray(counts, dtype=np.int64)):
            for _ in range(int(c)):
                lbl = self._next
                self._next += 1
                self.by_colony[i].append(lbl)
                self.initial[lbl] = i
                new.append(lbl)
        return new

    def fresh_label(self) -> int:
        lbl = self._next
        self._next += 1
        return lbl

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(g) for g in self.by_colony], dtype=np.int64)

    @property
    def n_particles(self) -> int:
        return sum(len(g) for g in self.by_colony)

    def particles(self):
        """(colony, label) pairs in deterministic order."""
        for i, group in enumerate(self.by_colony):
            for lbl in group:
                yield i, lbl


def _direction_kernel(ms: MigrationStructure, direction: str) -> np.ndarray:
    if direction == BACKWARD_B:
        return ms.b
    if direction == REVERSED_A:
        return ms.a
    raise DomainError(f"unknown direction {direction!r}")


def asg_rate_table(state: ParticleSystemState, ms: MigrationStructure,
                   sp: SweepParams, direction: str = BACKWARD_B):
    """(coalescence[d], branching[d], migration[d,d]) rate arrays."""
    kern = _direction_kernel(ms, direction)
    n = state.counts.astype(float)
    coal = 0.5 * n * (n - 1.0) / ms.rho
    branch = sp.alpha * n
    mig = sp.mu * kern * n[:, None]
    return coal, branch, mig


def _pop_random(group: list[int], gen: np.random.Generator) -> int:
    idx = int(gen.integers(len(group)))
    group[idx], group[-1] = group[-1], group[idx]
    return group.pop()


def _apply_event(state, ms, sp, kern, gen) -> AsgEvent | None:
    """Pick and apply one event (rates must be recomputed by the caller
    beforehand to decide whether any event is possible)."""
    n = state.counts.astype(float)
    coal = 0.5 * n * (n - 1.0) / ms.rho
    branch = sp.alpha * n
    total = float(coal.sum() + branch.sum())
    mig_rows = sp.mu * kern * n[:, None]
    total += float(mig_rows.sum())
    if total <= 0.0:
        return None

    target = gen.uniform(0.0, total)
    csum = 0.0
    for i in range(state.d):
        if target < csum + coal[i]:
            group = state.by_colony[i]
            l1 = _pop_random(group, gen)
            l2 = _pop_random(group, gen)
            lbl = state.fresh_label()
            group.append(lbl)
            ev = AsgEvent(COALESCENCE, state.time, i, None, (l1, l2), (lbl,))
            state.events.append(ev)
            return ev
        csum += coal[i]
        if target < csum + branch[i]:
            group = state.by_colony[i]
            old = _pop_random(group, gen)
            la, lb = state.fresh_label(), state.fresh_label()
            group.extend((la, lb))
            ev = AsgEvent(BRANCHING, state.time, i, None, (old,), (la, lb))
            state.events.append(ev)
            return ev
        csum += branch[i]
    last = None
    for i in range(state.d):
        for j in range(state.d):
            if j == i:
                continue
            rate = mig_rows[i, j]
            if rate > 0.0:
                last = (i, j)
            if target < csum + rate:
                return _apply_migration(state, i, j, gen)
            csum += rate
    if last is not None:  # 1-ulp fall-through of the cumulative walk
        return _apply_migration(state, last[0], last[1], gen)
    return None


def _apply_migration(state, i, j, gen) -> AsgEvent:
    old = _pop_random(state.by_colony[i], gen)
    lbl = state.fresh_label()
    state.by_colony[j].append(lbl)
    ev = AsgEvent(MIGRATION, state.time, i, j, (old,), (lbl,))
    state.events.append(ev)
    return ev


def _total_rate(state, ms, sp, kern) -> float:
    n = state.counts.astype(float)
    total = float((0.5 * n * (n - 1.0) / ms.rho).sum() + sp.alpha * n.sum())
    total += float((sp.mu * kern * n[:, None]).sum())
    return total


def asg_step(state: ParticleSystemState, ms: MigrationStructure, sp: SweepParams,
             direction: str, rng: RngStream) -> AsgEvent | None:
    """One Gillespie event; advances time by the exponential holding time.

    Returns None (no event, time unchanged) when the total rate is zero,
    i.e. an infinite holding time. Raises EmptyConfiguration on an empty
    state.
    """
    if state.n_particles == 0:
        raise EmptyConfiguration("no particles")
    kern = _direction_kernel(ms, direction)
    gen = rng.generator
    total = _total_rate(state, ms, sp, kern)
    if total <= 0.0:
        return None
    state.time += gen.exponential(1.0 / total)
    return _apply_event(state, ms, sp, kern, gen)


def run_asg(state: ParticleSystemState, ms: MigrationStructure, sp: SweepParams,
            direction: str, tau: float, rng: RngStream) -> ParticleSystemState:
    """Evolve the configuration over [state.time, tau]."""
    if state.n_particles == 0:
        raise EmptyConfiguration("no particles")
    kern = _direction_kernel(ms, direction)
    gen = rng.generator
    while state.time < tau:
        total = _total_rate(state, ms, sp, kern)
        if total <= 0.0:
            break
        holding = gen.exponential(1.0 / total)
        if state.time + holding > tau:
            break
        state.time += holding
        _apply_event(state, ms, sp, kern, gen)
    state.time = tau
    return state


# ---------------------------------------------------------------------------
# Equilibrium
# ---------------------------------------------------------------------------

@dataclass
class EquilibriumSample:
    counts: np.ndarray
    conditioned: bool


def equilibrium_counts(ms: MigrationStructure, sp: SweepParams, n: int,
                       rng: RngStream, conditioned: bool = True) -> np.ndarray:
    """(n, d) per-colony counts: independent Poisson(2*alpha*rho_i),
    optionally rejection-conditioned on not being all-zero."""
    gen = rng.generator
    lam = 2.0 * sp.alpha * ms.rho
    draws = gen.poisson(lam, size=(n, ms.d)).astype(np.int64)
    if conditioned:
        bad = ~draws.any(axis=1)
        while bad.any():
            draws[bad] = gen.poisson(lam, size=(int(bad.sum()), ms.d))
            bad = ~draws.any(axis=1)
    return draws


def sample_equilibrium(ms: MigrationStructure, sp: SweepParams,
                       conditioned_nonzero: bool, rng: RngStream) -> EquilibriumSample:
    counts = equilibrium_counts(ms, sp, 1, rng, conditioned=conditioned_nonzero)[0]
    return EquilibriumSample(counts=counts, conditioned=conditioned_nonzero)


def _compositions(d: int, k_max: int):
    """All count vectors with 1 <= total <= k_max, in lexicographic order."""
    for total in range(1, k_max + 1):
        for cuts in itertools.combinations(range(total + d - 1), d - 1):
            parts = []
            prev = -1
            for c in cuts:
                parts.append(c - prev - 1)
                prev = c
            parts.append(total + d - 2 - prev)
            yield tuple(parts)


def detailed_balance_check(ms: MigrationStructure, sp: SweepParams, k_max: int) -> float:
    """Max relative residual of pi_k q^b(k,l) = pi_l q^a(l,k) over all
    transitions between enumerated states (total <= k_max).

    Uses unnormalized Poisson weights (detailed balance is insensitive to
    the normalization); the residual is measured relative to the largest
    flux encountered.
    """
    if k_max < 2:
        raise DomainError("k_max must be >= 2")
    d = ms.d
    lam = 2.0 * sp.alpha * ms.rho

    def weight(k):
        w = 1.0
        for i in range(d):
            w *= lam[i] ** k[i] / math.factorial(k[i])
        return w

    worst = 0.0
    scale = 0.0
    for k in _compositions(d, k_max):
        wk = weight(k)
        total = sum(k)
        for i in range(d):
            # coalescence k -> k - e_i vs branching back
            if k[i] >= 2:
                ell = list(k)
                ell[i] -= 1
                flux = wk * 0.5 * k[i] * (k[i] - 1) / ms.rho[i]
                back = weight(tuple(ell)) * sp.alpha * ell[i]
                worst = max(worst, abs(flux - back))
                scale = max(scale, flux, back)
            # branching k -> k + e_i vs coalescence back (stay in range)
            if total + 1 <= k_max:
                ell = list(k)
                ell[i] += 1
                flux = wk * sp.alpha * k[i]
                back = weight(tuple(ell)) * 0.5 * ell[i] * (ell[i] - 1) / ms.rho[i]
                worst = max(worst, abs(flux - back))
                scale = max(scale, flux, back)
            # migration k -> k - e_i + e_j vs reversed migration back
            if k[i] >= 1:
                for j in range(d):
                    if j == i:
                        continue
                    ell = list(k)
                    ell[i] -= 1
                    ell[j] += 1
                    flux = wk * sp.mu * ms.b[i, j] * k[i]
                    back = weight(tuple(ell)) * sp.mu * ms.a[j, i] * ell[j]
                    worst = max(worst, abs(flux - back))
                    scale = max(scale, flux, back)
    return worst / scale if scale > 0.0 else 0.0


# ---------------------------------------------------------------------------
# Marking and percolation
# ---------------------------------------------------------------------------

@dataclass
class MarkingResult:
    marked_at_tau: frozenset[int]
    connected_at_0: frozenset[int]
    frequencies: np.ndarray


def percolate_to_start(state: ParticleSystemState, marked: set[int]) -> set[int]:
    """Particles connected (through replacement chains) with the marked
    set, swept backward through the event log; intermediate labels are
    included, the time-0 subset is reached & initial."""
    reached = set(marked)
    for ev in reversed(state.events):
        for lbl in ev.replacing:
            if lbl in reached:
                reached.update(ev.replaced)
                break
    return reached


def mark_and_percolate(state: ParticleSystemState, x, rng: RngStream,
                       uniforms: dict[int, float] | None = None) -> MarkingResult:
    """Mark each particle of colony i with probability x_i and percolate
    the marking backward to time 0.

    `uniforms` (label -> u in [0,1]) enables mark coupling across nested
    marking vectors: a particle is marked iff u < x_colony.
    """
    x = np.asarray(x, dtype=float)
    gen = rng.generator
    marked = set()
    for colony, lbl in state.particles():
        u = uniforms[lbl] if uniforms is not None else float(gen.uniform())
        if u < x[colony]:
            marked.add(lbl)
    reached = percolate_to_start(state, marked)
    connected0 = frozenset(lbl for lbl in reached if lbl in state.initial)
    per_colony = np.zeros(state.d, dtype=np.int64)
    totals = np.zeros(state.d, dtype=np.int64)
    for lbl, colony in state.initial.items():
        totals[colony] += 1
        if lbl in connected0:
            per_colony[colony] += 1
    freqs = np.where(totals > 0, per_colony / np.maximum(totals, 1), 0.0)
    return MarkingResult(
        marked_at_tau=frozenset(marked),
        connected_at_0=connected0,
        frequencies=freqs,
    )


# ---------------------------------------------------------------------------
# Moment duality
# ---------------------------------------------------------------------------

def kcounts_at(k, tau: float, ms: MigrationStructure, sp: SweepParams,
               replicates: int, rng: RngStream, direction: str = BACKWARD_B,
               cap: int = 10 ** 9) -> np.ndarray:
    """Particle-number vectors K_tau of the count chain started from k
    (jitted kernel; labels are irrelevant for counts)."""
    kern = _direction_kernel(ms, direction)
    k = np.asarray(k, dtype=np.int64)
    seeds = rng.kernel_seeds(replicates)
    _, counts = _kernels.kcount_batch(sp.alpha, sp.mu, kern, ms.rho, k, tau, cap, seeds)
    return counts


@dataclass
class DualityEstimate:
    lhs_hat: float
    lhs_se: float
    rhs_hat: float
    rhs_se: float
    replicates: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def gap(self) -> float:
        return abs(self.lhs_hat - self.rhs_hat)


def _payoff(values: np.ndarray, powers: np.ndarray) -> np.ndarray:
    return np.prod((1.0 - values) ** powers, axis=1)


def duality_lhs_vs_rhs(k, x, tau: float, ms: MigrationStructure, sp: SweepParams,
                       replicates: int, rng: RngStream,
                       cfg: sde.IntegratorConfig | None = None) -> DualityEstimate:
    """Monte Carlo check of E_x[(1-X(tau))^k] (diffusion side) against
    E[(1-x)^{K_tau}] (particle side), each with its standard error."""
    k = np.asarray(k, dtype=np.int64)
    x = np.asarray(x, dtype=float)
    if not k.any():
        raise DomainError("k must be nonzero")
    cfg = cfg or sde.IntegratorConfig(conditioned=False)
    samples, _ = sde.endpoint_samples(x, ms, sp, cfg, tau, replicates, rng)
    lhs = _payoff(samples, k.astype(float))
    counts = kcounts_at(k, tau, ms, sp, replicates, rng)
    rhs = _payoff(np.tile(x, (replicates, 1)), counts.astype(float))
    return DualityEstimate(
        lhs_hat=float(lhs.mean()),
        lhs_se=float(lhs.std(ddof=1) / math.sqrt(len(lhs))),
        rhs_hat=float(rhs.mean()),
        rhs_se=float(rhs.std(ddof=1) / math.sqrt(len(rhs))),
        replicates=replicates,
    )


@dataclass
class DualOracleResult:
    value: float
    overflow_mass: float
    k_max: int
    n_states: int


def truncated_dual_moment(k, x, tau: float, ms: MigrationStructure, sp: SweepParams,
                          k_max: int, overflow_tol: float = 1e-6) -> DualOracleResult:
    """E[(1-x)^{K_tau}] by the explicit truncated generator of the count
    chain: states with total <= k_max plus one absorbing overflow state;
    the payoff is propagated with a sparse matrix exponential and the
    overflow mass bounds the truncation error a posteriori."""
    k = tuple(int(v) for v in np.asarray(k).ravel())
    x = np.asarray(x, dtype=float)
    if sum(k) < 1:
        raise DomainError("k must be nonzero")
    if sum(k) > k_max:
        raise DomainError(f"total(k)={sum(k)} exceeds k_max={k_max}")
    states = list(_compositions(ms.d, k_max))
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    ovf = n

    rows, cols, vals = [], [], []

    def add(si, sj, rate):
        if rate > 0.0:
            rows.append(si)
            cols.append(sj)
            vals.append(rate)

    for s, si in index.items():
        total = sum(s)
        out = 0.0
        for i in range(ms.d):
            if s[i] >= 2:
                rate = 0.5 * s[i] * (s[i] - 1) / ms.rho[i]
                t = list(s)
                t[i] -= 1
                add(si, index[tuple(t)], rate)
                out += rate
            if s[i] >= 1:
                rate = sp.alpha * s[i]
                if total + 1 <= k_max:
                    t = list(s)
                    t[i] += 1
                    add(si, index[tuple(t)], rate)
                else:
                    add(si, ovf, rate)
                out += rate
                for j in range(ms.d):
                    if j == i:
                        continue
                    rate = sp.mu * ms.b[i, j] * s[i]
                    if rate > 0.0:
                        t = list(s)
                        t[i] -= 1
                        t[j] += 1
                        add(si, index[tuple(t)], rate)
                        out += rate
        if out > 0.0:
            rows.append(si)
            cols.append(si)
            vals.append(-out)

    gen = sp_sparse.csr_matrix(
        (vals, (rows, cols)), shape=(n + 1, n + 1)
    )
    payoff = np.zeros((n + 1, 2))
    for s, si in index.items():
        payoff[si, 0] = np.prod((1.0 - x) ** np.asarray(s))
    payoff[ovf, 1] = 1.0

    if tau > 0.0:
        result = expm_multiply(gen * tau, payoff)
    else:
        result = payoff
    value = float(result[index[k], 0])
    overflow = float(result[index[k], 1])
    if overflow >= overflow_tol:
        raise TruncationError(
            f"overflow mass {overflow:.3e} >= {overflow_tol:.1e}; raise k_max"
        )
    return DualOracleResult(value=value, overflow_mass=overflow, k_max=k_max, n_states=n + 1)


# ---------------------------------------------------------------------------
# Fixation probability
# ---------------------------------------------------------------------------

def fixation_probability_closed_form(x, ms: MigrationStructure, sp: SweepParams) -> float:
    """h(x) = (1 - exp(-2 alpha sum_i rho_i x_i)) / (1 - exp(-2 alpha));
    the alpha -> 0 limit is the neutral value sum_i rho_i x_i."""
    x = np.asarray(x, dtype=float)
    if sp.alpha == 0.0:
        return float(x @ ms.rho)
    z = 2.0 * sp.alpha * float(x @ ms.rho)
    return float(-np.expm1(-z) / -np.expm1(-2.0 * sp.alpha))


def fixation_probability_series(x, ms: MigrationStructure, sp: SweepParams,
                                tol: float = 1e-14) -> float:
    """The equivalent form 1 - E[(1-x)^Psi], with Psi the nonzero-
    conditioned Poisson(2 alpha rho) configuration, evaluated by direct
    truncated series summation (an independent numerical route)."""
    x = np.asarray(x, dtype=float)
    lam = 2.0 * sp.alpha * ms.rho
    prod = 1.0
    for lam_i, x_i in zip(lam, x):
        term = math.exp(-lam_i)
        acc = term
        k = 0
        while term > tol * max(acc, 1.0) or k < 5:
            k += 1
            term *= lam_i * (1.0 - x_i) / k
            acc += term
            if k > 10 ** 7:
                break
        prod *= acc
    p0 = math.exp(-float(lam.sum()))
    mean_conditioned = (prod - p0) / (1.0 - p0)
    return 1.0 - mean_conditioned


# ---------------------------------------------------------------------------
# Coupled Y/Z system and conditioned duality
# ---------------------------------------------------------------------------

@dataclass
class YZOutcome:
    y_hit: bool    # Y_tau intersects the marked set
    z_empty: bool  # Z_tau avoids the marked set
    y_counts0: np.ndarray
    z_counts0: np.ndarray


def coupled_yz_run(k, x, tau: float, ms: MigrationStructure, sp: SweepParams,
                   rng: RngStream) -> YZOutcome:
    """One replicate of the coupled construction: the union of an
    equilibrium group Y_0 and a k-group Z_0 evolves jointly to tau, the
    terminal particles are marked with probabilities x, and the marking is
    percolated back to time 0. A terminal particle may be connected to
    both groups after cross-group coalescence."""
    k = np.asarray(k, dtype=np.int64)
    x = np.asarray(x, dtype=float)
    if not k.any():
        raise DomainError("k must be nonzero")
    y_counts = equilibrium_counts(ms, sp, 1, rng, conditioned=True)[0]
    state = ParticleSystemState(d=ms.d)
    y_labels = set(state.add_initial(y_counts))
    z_labels = set(state.add_initial(k))
    run_asg(state, ms, sp, BACKWARD_B, tau, rng)
    res = mark_and_percolate(state, x, rng)
    return YZOutcome(
        y_hit=not res.connected_at_0.isdisjoint(y_labels),
        z_empty=res.connected_at_0.isdisjoint(z_labels),
        y_counts0=y_counts,
        z_counts0=k.copy(),
    )


def conditioned_moment_yz(k, x, tau: float, ms: MigrationStructure, sp: SweepParams,
                          accepted_target: int, rng: RngStream,
                          max_attempts: int | None = None):
    """Estimate P(Z_tau avoids the marking | Y_tau hits the marking),
    which equals the fixation-conditioned moment E_x[(1-X*(tau))^k].

    Returns (p_hat, se, n_accepted, n_attempted); replicates whose Y-group
    misses the marking are rejected (zero accepted replicates is reported
    as (nan, nan, 0, n))."""
    if max_attempts is None:
        max_attempts = accepted_target * 50 if accepted_target else 10 ** 4
    accepted = 0
    hits = 0
    attempts = 0
    while accepted < accepted_target and attempts < max_attempts:
        out = coupled_yz_run(k, x, tau, ms, sp, rng)
        attempts += 1
        if out.y_hit:
            accepted += 1
            if out.z_empty:
                hits += 1
    if accepted == 0:
        return math.nan, math.nan, 0, attempts
    p = hits / accepted
    se = math.sqrt(p * (1.0 - p) / accepted)
    return p, se, accepted, attempts


@dataclass
class ReversedRunRecord:
    times: np.ndarray       # event times (starting at 0.0)
    ell: np.ndarray         # (n_times, d) all particles
    m: np.ndarray           # (n_times, d) particles connected to the mark
    T: float                # first time m == ell (inf if horizon reached)


def reversed_marked_run(ms: MigrationStructure, sp: SweepParams, horizon: float,
                        rng: RngStream) -> ReversedRunRecord:
    """The exact small-marking-limit construction on the time reversal:
    start from Poisson(2 alpha rho) plus one extra marked particle in the
    founder colony, evolve with the reversed (forward-kernel) dynamics,
    and track which particles are connected to the mark.

    The per-colony (all, marked) counts of this labeled run follow
    exactly the (L, M) chain; used to cross-validate it.
    """
    pi = rng.generator.poisson(2.0 * sp.alpha * ms.rho).astype(np.int64)
    state = ParticleSystemState(d=ms.d)
    state.add_initial(pi)
    extra = np.zeros(ms.d, dtype=np.int64)
    extra[sp.founder] = 1
    marked = set(state.add_initial(extra))

    gen = rng.generator
    times = [0.0]
    ells = [state.counts]
    ms_counts = [extra.copy()]
    if int(pi.sum()) == 0:  # the single marked founder already covers everything
        return ReversedRunRecord(
            times=np.asarray(times), ell=np.asarray(ells), m=np.asarray(ms_counts), T=0.0
        )
    T = math.inf

    def marked_counts():
        out = np.zeros(ms.d, dtype=np.int64)
        for i, group in enumerate(state.by_colony):
            out[i] = sum(1 for lbl in group if lbl in marked)
        return out

    while state.time < horizon:
        total = _total_rate(state, ms, sp, ms.a)
        if total <= 0.0:
            break
        holding = gen.exponential(1.0 / total)
        if state.time + holding > horizon:
            break
        state.time += holding
        ev = _apply_event(state, ms, sp, ms.a, gen)
        if ev is None:
            continue
        if any(lbl in marked for lbl in ev.replaced):
            marked.update(ev.replacing)
        times.append(state.time)
        ells.append(state.counts)
        mc = marked_counts()
        ms_counts.append(mc)
        if int(mc.sum()) == state.n_particles:
            T = state.time
            break
    return ReversedRunRecord(
        times=np.asarray(times),
        ell=np.asarray(ells),
        m=np.asarray(ms_counts),
        T=T,
    )
