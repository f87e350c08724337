import pytest

from starphase import (
    SourceModel,
    StarlightModel,
    build_single_source_table,
    default_m_max,
    optimize_mu,
)

EPSILON = 0.02
ETA = 0.1


@pytest.fixture(scope="session")
def star():
    return StarlightModel(epsilon=EPSILON)


@pytest.fixture(scope="session")
def heralded_opt():
    return optimize_mu("heralded", ETA, "max-p1")


@pytest.fixture(scope="session")
def heralded_table(star, heralded_opt):
    """Heralded source at eta = 0.1 with max-P1 intensity, full depth."""
    source = SourceModel("heralded", mu=heralded_opt.mu)
    return build_single_source_table(
        source, ETA, star, default_m_max(source, ETA)
    )
