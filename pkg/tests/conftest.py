import pytest

from sweepsim.core import RngStream, build_migration, single_colony


@pytest.fixture
def sym2():
    return build_migration(2, [[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def asym2():
    # rho = (1/3, 2/3), a(0,1)=2, a(1,0)=1
    return build_migration(2, [[0.0, 2.0], [1.0, 0.0]])


@pytest.fixture
def cycle3():
    return build_migration(3, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])


@pytest.fixture
def asym3():
    return build_migration(3, [[0.0, 2.0, 0.5], [1.0, 0.0, 1.5], [0.25, 3.0, 0.0]])


@pytest.fixture
def one_colony():
    return single_colony()


@pytest.fixture
def rng():
    return RngStream(seed=321)


def make_rng(seed=321, stream_id=0):
    return RngStream(seed=seed, stream_id=stream_id)
