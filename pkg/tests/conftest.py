import numpy as np
import pytest

from algebroid_lab.modelfile import bundled_names, load_bundled

CORPUS = ["flat_tm1", "flat_tm2", "sphere_chart", "so3_killing", "linebundle_X", "foliation_product"]


@pytest.fixture(scope="session")
def corpus():
    return {name: load_bundled(name) for name in CORPUS}


@pytest.fixture(scope="session")
def sphere():
    return load_bundled("sphere_chart")


@pytest.fixture(scope="session")
def so3():
    return load_bundled("so3_killing")


@pytest.fixture(scope="session")
def flat2():
    return load_bundled("flat_tm2")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def test_corpus_is_bundled():
    assert set(CORPUS) <= set(bundled_names())


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
