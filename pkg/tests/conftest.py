import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flexverif.casestudy import HomecareParams, default_study, generate_model  # noqa: E402
from flexverif.lang import load_model  # noqa: E402


@pytest.fixture(scope="session")
def homecare_text():
    return generate_model(HomecareParams())


@pytest.fixture(scope="session")
def homecare(homecare_text):
    return load_model(homecare_text)


@pytest.fixture(scope="session")
def homecare_study():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return default_study()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
