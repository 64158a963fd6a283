import pytest

from intent_bench.dataset import synth_cohort


@pytest.fixture(scope="session")
def cohort16():
    """The default 16-participant cohort used by the end-to-end gates."""
    return synth_cohort(42, participants=16)


@pytest.fixture(scope="session")
def cohort8():
    return synth_cohort(11, participants=8)


@pytest.fixture(scope="session")
def cohort4():
    return synth_cohort(5, participants=4)
