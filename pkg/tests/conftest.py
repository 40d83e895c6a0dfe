import pytest

from mdrq import DataKind, GeneratorSpec, generate, pair_queries


@pytest.fixture(scope="session")
def uniform():
    return generate(GeneratorSpec(n=10_000, m=5, seed=1))


@pytest.fixture(scope="session")
def wide():
    return generate(GeneratorSpec(n=2_000, m=20, seed=2))


@pytest.fixture(scope="session")
def clustered():
    return generate(GeneratorSpec(DataKind.CLUSTERED, n=10_000, m=5, cluster_count=5, seed=3))


@pytest.fixture(scope="session")
def small():
    return generate(GeneratorSpec(n=500, m=3, seed=4))


@pytest.fixture(scope="session")
def queries(uniform):
    return pair_queries(uniform, 100, seed=5)
