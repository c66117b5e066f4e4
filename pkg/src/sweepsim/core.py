"""Shared model primitives: migration structures, sweep parameters,
migration/selection scaling regimes and reproducible RNG streams.

Colonies are indexed 0..d-1 throughout the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadDimension, DomainError, NotIrreducible

__all__ = [
    "MigrationStructure",
    "SweepParams",
    "RegimeSpec",
    "RngStream",
    "build_migration",
    "single_colony",
    "migration_from_json",
    "resolve_regime",
    "stationarity_residual",
]


def _strongly_connected(adj: np.ndarray) -> bool:
    """Check strong connectivity of a boolean adjacency matrix by
    forward and backward reachability from node 0."""
    d = adj.shape[0]

    def reach(mat):
        seen = np.zeros(d, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.nonzero(mat[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return seen

    return bool(reach(adj).all() and reach(adj.T).all())


def stationarity_residual(rates: np.ndarray, rho: np.ndarray) -> float:
    """Max-norm residual of the stationarity equations of `rho` under the
    off-diagonal rate matrix `rates`: for each j,
    sum_i rho_i * rates(i,j) = rho_j * sum_i rates(j,i)."""
    inflow = rho @ rates
    outflow = rho * rates.sum(axis=1)
    return float(np.abs(inflow - outflow).max())


@dataclass(frozen=True)
class MigrationStructure:
    """A d-colony migration geometry.

    b(i,j) are the backward (lineage) migration rates, rho the relative
    colony sizes (the unique stationary weights of b), and a(i,j) the
    forward (gene-flow) rates derived from the flux identity
    rho_i * a(i,j) = rho_j * b(j,i).
    """

    d: int
    b: np.ndarray
    a: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        self.b.setflags(write=False)
        self.a.setflags(write=False)
        self.rho.setflags(write=False)

    @property
    def adjacency(self) -> np.ndarray:
        """Boolean adjacency of the forward-migration graph (a(i,j) > 0)."""
        return self.a > 0.0

    def to_json(self) -> str:
        return json.dumps({"d": self.d, "b": self.b.tolist()})


def build_migration(d: int, b) -> MigrationStructure:
    """Validate backward rates and solve for the stationary weights.

    The diagonal of `b` is ignored. rho is the solution of the
    (d+1)-equation system {stationarity, sum = 1}; a is derived from
    the flux identity.
    """
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise BadDimension(f"colony count must be an integer >= 2, got {d!r}")
    b = np.asarray(b, dtype=float)
    if b.shape != (d, d):
        raise BadDimension(f"b must be {d}x{d}, got shape {b.shape}")
    b = b.copy()
    np.fill_diagonal(b, 0.0)
    bad = [(int(i), int(j)) for i, j in zip(*np.nonzero(b < 0.0))]
    if bad:
        i, j = bad[0]
        raise DomainError(f"negative migration rate b({i},{j}) = {b[i, j]}")
    if not _strongly_connected(b > 0.0):
        raise NotIrreducible(
            "the directed graph {(i,j): b(i,j) > 0} is not strongly connected"
        )

    # stationarity: rho Q = 0 with Q = b - diag(rowsum), plus sum(rho) = 1
    q = b.copy()
    np.fill_diagonal(q, -b.sum(axis=1))
    system = np.vstack([q.T, np.ones(d)])
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    rho, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if rho.min() <= 0.0:
        raise NotIrreducible("stationary weights are not strictly positive")
    rho = rho / rho.sum()

    a = (b.T * rho[None, :]) / rho[:, None]  # a(i,j) = rho_j/rho_i * b(j,i)
    np.fill_diagonal(a, 0.0)
    return MigrationStructure(d=d, b=b, a=a, rho=rho)


def single_colony() -> MigrationStructure:
    """The panmictic special case: one colony, no migration.

    build_migration requires d >= 2 (irreducibility is meaningless for a
    single colony); this constructor covers the classical one-colony
    comparisons.
    """
    z = np.zeros((1, 1))
    return MigrationStructure(d=1, b=z, a=z.copy(), rho=np.ones(1))


def migration_from_json(source) -> MigrationStructure:
    """Load a migration structure from a JSON document {"d": int, "b": [[..]]}.

    `source` may be a path, a JSON string, or an already-parsed dict.
    Validation errors carry row/column indices.
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if Path(str(source)).is_file() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BadDimension(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or set(doc) != {"d", "b"}:
        raise BadDimension('document must have exactly the keys {"d", "b"}')
    d = doc["d"]
    rows = doc["b"]
    if not isinstance(d, int):
        raise BadDimension(f'"d" must be an integer, got {d!r}')
    if not isinstance(rows, list) or len(rows) != d:
        raise BadDimension(f'"b" must have {d} rows, got {len(rows) if isinstance(rows, list) else type(rows).__name__}')
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != d:
            raise BadDimension(f"row {i} of b must have {d} entries")
        for j, v in enumerate(row):
            if not isinstance(v, (int, float)):
                raise BadDimension(f"b[{i}][{j}] is not a number: {v!r}")
            if i != j and v < 0:
                raise DomainError(f"negative migration rate b({i},{j}) = {v}")
    return build_migration(d, rows)


@dataclass(frozen=True)
class SweepParams:
    """Selection strength, migration strength and founder colony.

    alpha = 0 is admitted for the neutral-case diagnostics (martingale
    checks); the sweep theory itself assumes alpha > 0.
    """

    alpha: float
    mu: float = 0.0
    founder: int = 0

    def __post_init__(self):
        if self.alpha < 0.0:
            raise DomainError(f"alpha must be nonnegative, got {self.alpha}")
        if self.mu < 0.0:
            raise DomainError(f"mu must be nonnegative, got {self.mu}")
        if self.founder < 0:
            raise DomainError(f"founder must be a colony index >= 0, got {self.founder}")

    def with_mu(self, mu: float) -> "SweepParams":
        return SweepParams(alpha=self.alpha, mu=mu, founder=self.founder)


@dataclass(frozen=True)
class RegimeSpec:
    """Mapping alpha -> mu(alpha) selecting one of the scaling regimes.

    kinds: "linear" (mu = c*alpha), "power" (mu = c*alpha**gamma with
    gamma in [0,1]) and "inverse_log" (mu = 1/log(alpha)).
    """

    kind: str
    c: float = 1.0
    gamma: float | None = None

    _KINDS = ("linear", "power", "inverse_log")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise DomainError(f"unknown regime kind {self.kind!r}, expected one of {self._KINDS}")
        if self.c <= 0.0:
            raise DomainError(f"c must be positive, got {self.c}")
        if self.kind == "power":
            if self.gamma is None or not 0.0 <= self.gamma <= 1.0:
                raise DomainError(f"power regime needs gamma in [0,1], got {self.gamma}")
        elif self.gamma is not None:
            raise DomainError(f"gamma is only meaningful for the power regime")

    @classmethod
    def linear(cls, c: float = 1.0) -> "RegimeSpec":
        return cls(kind="linear", c=c)

    @classmethod
    def power(cls, gamma: float, c: float = 1.0) -> "RegimeSpec":
        return cls(kind="power", c=c, gamma=gamma)

    @classmethod
    def inverse_log(cls) -> "RegimeSpec":
        return cls(kind="inverse_log")

    @property
    def label(self) -> str:
        if self.kind == "power":
            return f"power(gamma={self.gamma})"
        return self.kind


def resolve_regime(spec: RegimeSpec, alpha: float) -> float:
    """Evaluate mu(alpha) for a regime. Deterministic."""
    if alpha <= 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if spec.kind == "linear":
        return spec.c * alpha
    if spec.kind == "power":
        return spec.c * alpha ** spec.gamma
    # inverse_log
    if alpha <= 1.0:
        raise DomainError(f"inverse_log regime needs alpha > 1, got {alpha}")
    return 1.0 / np.log(alpha)


@dataclass
class RngStream:
    """A reproducible, spawnable random stream.

    Identical (seed, stream_id) reproduce identical draw sequences
    bit-exactly; distinct stream_ids under one seed are statistically
    independent (Philox keyed off a SeedSequence spawn tree). A stream is
    single-owner: never share one instance between concurrent tasks.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)
    _spawned: int = field(init=False, default=0, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def spawn(self, n: int) -> list["RngStream"]:
        """Child streams with fresh stream ids, deterministic in call order."""
        base = self._spawned
        self._spawned += n
        return [
            RngStream(seed=self.seed, stream_id=(self.stream_id + 1) * 1_000_003 + base + k)
            for k in range(n)
        ]

    def kernel_seeds(self, n: int) -> np.ndarray:
        """n uint64 seeds for jitted replicate kernels.

        Derived from a SeedSequence child keyed on an internal counter, so
        successive calls yield fresh, reproducible batches.
        """
        counter = self._spawned
        self._spawned += 1
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, counter)
        )
        return ss.generate_state(n, dtype=np.uint64)
