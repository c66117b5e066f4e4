"""The two limit epidemic models that govern the slow-migration fixation
asymptotics: a deterministic spread with fixed per-edge delays (scalar
delay 1-gamma or heterogeneous delays 1-gamma_ij) and a stochastic
three-state spread whose 0->1 clocks run at rate
2 * sum_k rho_k a(k,j) over infectious colonies k, with a deterministic
unit delay from infected (1) to infectious (2).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import MigrationStructure, RegimeSpec, RngStream
from .errors import DomainError, Unreachable

__all__ = [
    "EpidemicI",
    "Theorem2Limit",
    "epidemic_I_fixation",
    "epidemic_I_simulate",
    "epidemic_J_sample",
    "epidemic_J_samples",
    "theorem2_limit",
]


def _adjacency(graph) -> np.ndarray:
    if isinstance(graph, MigrationStructure):
        return graph.adjacency
    adj = np.asarray(graph)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DomainError(f"adjacency must be square, got shape {adj.shape}")
    adj = adj.astype(bool) if adj.dtype != bool else adj.copy()
    np.fill_diagonal(adj, False)
    return adj


def _delay_matrix(adj: np.ndarray, gamma) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 0:
        gamma = np.full(adj.shape, float(gamma))
    if gamma.shape != adj.shape:
        raise DomainError(f"gamma matrix must match adjacency shape {adj.shape}")
    if np.any(gamma[adj] < 0.0) or np.any(gamma[adj] > 1.0):
        raise DomainError("gamma entries must lie in [0,1]")
    return 1.0 - gamma


@dataclass
class EpidemicI:
    infection_times: np.ndarray
    s_fix: float  # time until every colony is infected


def epidemic_I_fixation(graph, gamma, founder: int) -> EpidemicI:
    """Deterministic epidemic: a colony infected at time t infects every
    out-neighbour j after the fixed delay 1-gamma (resp. 1-gamma_ij).

    Scalar gamma: the fixation time is (1-gamma) times the founder's
    directed eccentricity (breadth-first layers). Matrix gamma: shortest
    paths with edge weights 1-gamma_ij (label-setting / Dijkstra), the
    fixation time being the largest distance.
    """
    adj = _adjacency(graph)
    d = adj.shape[0]
    if not 0 <= founder < d:
        raise DomainError(f"founder {founder} out of range for {d} colonies")
    scalar = np.asarray(gamma).ndim == 0
    if scalar:
        if not 0.0 <= float(gamma) <= 1.0:
            raise DomainError(f"gamma must lie in [0,1], got {gamma}")
        layer = np.full(d, -1, dtype=np.int64)
        layer[founder] = 0
        frontier = [founder]
        depth = 0
        while frontier:
            depth += 1
            nxt = []
            for i in frontier:
                for j in np.nonzero(adj[i])[0]:
                    if layer[j] < 0:
                        layer[j] = depth
                        nxt.append(int(j))
            frontier = nxt
        if np.any(layer < 0):
            missing = np.nonzero(layer < 0)[0].tolist()
            raise Unreachable(f"colonies {missing} unreachable from founder {founder}")
        times = (1.0 - float(gamma)) * layer
        return EpidemicI(infection_times=times, s_fix=float(times.max()))

    weights = _delay_matrix(adj, gamma)
    dist = np.full(d, math.inf)
    dist[founder] = 0.0
    heap = [(0.0, founder)]
    while heap:
        t, i = heapq.heappop(heap)
        if t > dist[i]:
            continue
        for j in np.nonzero(adj[i])[0]:
            cand = t + weights[i, j]
            if cand < dist[j]:
                dist[j] = cand
                heapq.heappush(heap, (cand, int(j)))
    if np.any(np.isinf(dist)):
        missing = np.nonzero(np.isinf(dist))[0].tolist()
        raise Unreachable(f"colonies {missing} unreachable from founder {founder}")
    return EpidemicI(infection_times=dist, s_fix=float(dist.max()))


def epidemic_I_simulate(graph, gamma, founder: int) -> EpidemicI:
    """Discrete-event simulation of the deterministic epidemic: every
    infection schedules delayed infections of all out-neighbours; a
    colony's infection time is the earliest event that reaches it.

    Same arithmetic as the closed form, so results agree exactly."""
    adj = _adjacency(graph)
    d = adj.shape[0]
    if not 0 <= founder < d:
        raise DomainError(f"founder {founder} out of range for {d} colonies")
    weights = _delay_matrix(adj, gamma)
    times = np.full(d, math.inf)
    times[founder] = 0.0
    heap = [(0.0, founder)]
    infected = np.zeros(d, dtype=bool)
    while heap:
        t, i = heapq.heappop(heap)
        if infected[i]:
            continue
        infected[i] = True
        times[i] = t
        for j in np.nonzero(adj[i])[0]:
            if not infected[j]:
                heapq.heappush(heap, (t + weights[i, j], int(j)))
    if not infected.all():
        missing = np.nonzero(~infected)[0].tolist()
        raise Unreachable(f"colonies {missing} unreachable from founder {founder}")
    return EpidemicI(infection_times=times, s_fix=float(times.max()))


def epidemic_J_sample(ms: MigrationStructure, founder: int, rng: RngStream) -> float:
    """One sample of the three-state epidemic fixation time.

    States: 0 susceptible, 1 infected, 2 infectious. The founder starts
    infected; 1->2 happens exactly one time unit after entering 1; 0->1 of
    colony j runs at rate 2 sum_k rho_k a(k,j) over infectious k.
    Exponential clocks are redrawn whenever the infectious set changes
    (exact by memorylessness). Returns the first time all are infectious.
    """
    d = ms.d
    if not 0 <= founder < d:
        raise DomainError(f"founder {founder} out of range for {d} colonies")
    gen = rng.generator
    state = np.zeros(d, dtype=np.int64)
    state[founder] = 1
    become_infectious = np.full(d, math.inf)
    become_infectious[founder] = 1.0
    t = 0.0
    while True:
        if np.all(state == 2):
            return t
        # earliest deterministic 1->2 transition
        pending = np.where(state == 1, become_infectious, math.inf)
        t_det = float(pending.min())
        # exponential 0->1 candidates under the current infectious set
        infectious = state == 2
        t_exp = math.inf
        target = -1
        if infectious.any():
            rates = 2.0 * ((ms.rho * infectious) @ ms.a)
            for j in np.nonzero(state == 0)[0]:
                if rates[j] > 0.0:
                    cand = t + gen.exponential(1.0 / rates[j])
                    if cand < t_exp:
                        t_exp = cand
                        target = int(j)
        if t_det <= t_exp:
            i = int(pending.argmin())
            t = t_det
            state[i] = 2
        else:
            t = t_exp
            state[target] = 1
            become_infectious[target] = t + 1.0


def epidemic_J_samples(ms: MigrationStructure, founder: int, n: int,
                       rng: RngStream) -> np.ndarray:
    return np.asarray([epidemic_J_sample(ms, founder, rng) for _ in range(n)])


@dataclass
class Theorem2Limit:
    """Limit of the scaled fixation time alpha*T/log(alpha).

    kind "constant": the limit is the deterministic `value`.
    kind "distribution": the limit is the law of 1 + S_J; draw via
    sample(n, rng).
    """

    kind: str
    value: float | None
    regime: RegimeSpec
    ms: MigrationStructure
    founder: int

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, self.value)
        return 1.0 + epidemic_J_samples(self.ms, self.founder, n, rng)


def theorem2_limit(ms: MigrationStructure, regime: RegimeSpec, founder: int) -> Theorem2Limit:
    """Limiting scaled fixation time per migration regime: 2 for
    mu ~ alpha, 2 + (1-gamma)*Delta_founder for mu ~ alpha^gamma, and the
    law of 1 + S_J for mu = 1/log(alpha)."""
    if regime.kind == "linear":
        return Theorem2Limit("constant", 2.0, regime, ms, founder)
    if regime.kind == "power":
        s_fix = epidemic_I_fixation(ms, regime.gamma, founder).s_fix
        return Theorem2Limit("constant", 2.0 + s_fix, regime, ms, founder)
    return Theorem2Limit("distribution", None, regime, ms, founder)
