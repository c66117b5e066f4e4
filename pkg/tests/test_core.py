import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepsim.core import (
    RegimeSpec,
    RngStream,
    build_migration,
    migration_from_json,
    resolve_regime,
    single_colony,
    stationarity_residual,
)
from sweepsim.errors import BadDimension, DomainError, NotIrreducible


def test_symmetric_two_colony(sym2):
    np.testing.assert_allclose(sym2.rho, [0.5, 0.5], atol=1e-14)
    np.testing.assert_allclose(sym2.a, [[0, 1], [1, 0]], atol=1e-14)


def test_asymmetric_two_colony_by_hand(asym2):
    # stationarity of b=[[.,2],[1,.]]: 2 rho_0 = rho_1
    np.testing.assert_allclose(asym2.rho, [1 / 3, 2 / 3], atol=1e-14)
    assert asym2.a[0, 1] == pytest.approx(2.0, abs=1e-14)  # (rho_1/rho_0) b(1,0)
    assert asym2.a[1, 0] == pytest.approx(1.0, abs=1e-14)  # (rho_0/rho_1) b(0,1)


def test_directed_cycle_uniform(cycle3):
    np.testing.assert_allclose(cycle3.rho, np.full(3, 1 / 3), atol=1e-14)


def _check_invariants(ms):
    assert stationarity_residual(ms.b, ms.rho) < 1e-12
    assert stationarity_residual(ms.a, ms.rho) < 1e-12
    # flux identity rho_i a(i,j) = rho_j b(j,i)
    lhs = ms.rho[:, None] * ms.a
    rhs = (ms.rho[:, None] * ms.b).T
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    assert ms.rho.min() > 0
    assert abs(ms.rho.sum() - 1.0) < 1e-12


def test_invariants_fixed_structures(sym2, asym2, cycle3, asym3):
    for ms in (sym2, asym2, cycle3, asym3):
        _check_invariants(ms)


@settings(max_examples=40, deadline=None)
@given(
    d=st.integers(min_value=2, max_value=6),
    data=st.data(),
)
def test_invariants_random_structures(d, data):
    rates = data.draw(
        st.lists(
            st.floats(min_value=0.0, max_value=5.0, allow_nan=False),
            min_size=d * d,
            max_size=d * d,
        )
    )
    b = np.array(rates).reshape(d, d)
    np.fill_diagonal(b, 0.0)
    for i in range(d):  # force a cycle so the graph is strongly connected
        b[i, (i + 1) % d] += 0.5
    ms = build_migration(d, b)
    _check_invariants(ms)


def test_not_irreducible():
    with pytest.raises(NotIrreducible):
        build_migration(2, [[0, 1], [0, 0]])
    with pytest.raises(NotIrreducible):
        build_migration(3, [[0, 1, 0], [1, 0, 0], [0, 0, 0]])


def test_bad_dimension():
    with pytest.raises(BadDimension):
        build_migration(2, [[0, 1, 0], [1, 0, 0], [0, 1, 0]])
    with pytest.raises(BadDimension):
        build_migration(1, [[0.0]])


def test_single_colony():
    ms = single_colony()
    assert ms.d == 1
    np.testing.assert_allclose(ms.rho, [1.0])


def test_json_ingestion_roundtrip(asym2):
    ms = migration_from_json(asym2.to_json())
    np.testing.assert_allclose(ms.rho, asym2.rho)


def test_json_ingestion_errors():
    with pytest.raises(BadDimension, match="row 1"):
        migration_from_json({"d": 2, "b": [[0, 1], [1]]})
    with pytest.raises(DomainError, match=r"b\(0,1\)"):
        migration_from_json({"d": 2, "b": [[0, -1], [1, 0]]})
    with pytest.raises(BadDimension, match=r"b\[0\]\[1\]"):
        migration_from_json({"d": 2, "b": [[0, "x"], [1, 0]]})
    with pytest.raises(BadDimension):
        migration_from_json(json.dumps({"d": 2, "b": [[0, 1], [1, 0]], "extra": 1}))


def test_resolve_regime_examples():
    assert resolve_regime(RegimeSpec.power(gamma=0.5), 10 ** 4) == pytest.approx(100.0)
    assert resolve_regime(RegimeSpec.inverse_log(), np.e) == pytest.approx(1.0)
    assert resolve_regime(RegimeSpec.linear(), 500.0) == pytest.approx(500.0)
    assert resolve_regime(RegimeSpec.linear(c=2.0), 10.0) == pytest.approx(20.0)


def test_resolve_regime_domain_error():
    with pytest.raises(DomainError):
        resolve_regime(RegimeSpec.inverse_log(), 1.0)
    with pytest.raises(DomainError):
        RegimeSpec.power(gamma=1.5)


def test_rng_stream_reproducibility():
    a = RngStream(seed=7, stream_id=3).generator.standard_normal(16)
    b = RngStream(seed=7, stream_id=3).generator.standard_normal(16)
    np.testing.assert_array_equal(a, b)
    c = RngStream(seed=7, stream_id=4).generator.standard_normal(16)
    assert not np.array_equal(a, c)


def test_rng_kernel_seeds_deterministic():
    s1 = RngStream(seed=11).kernel_seeds(8)
    s2 = RngStream(seed=11).kernel_seeds(8)
    np.testing.assert_array_equal(s1, s2)
    # successive batches from one stream differ
    r = RngStream(seed=11)
    b1, b2 = r.kernel_seeds(8), r.kernel_seeds(8)
    assert not np.array_equal(b1, b2)


def test_rng_spawn_unique_ids():
    r = RngStream(seed=5)
    kids = r.spawn(4)
    ids = {(k.seed, k.stream_id) for k in kids}
    assert len(ids) == 4
