from pathlib import Path

import pytest

from biasaudit.config import data_path
from biasaudit.extract import load_composites
from biasaudit.lexicon import compile_matcher, load_dictionary

DATA = Path(__file__).parent / "data"

_acceptance: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id, title): exit criterion from the acceptance list")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when not in ("setup", "call"):
        return
    cid, title = marker.args
    prev = _acceptance.get(cid, ("PASS", title))[0]
    if rep.failed or (rep.when == "call" and prev == "FAIL"):
        _acceptance[cid] = ("FAIL", title)
    elif rep.when == "call":
        _acceptance[cid] = (prev, title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_acceptance, key=lambda c: int(c.lstrip("AC"))):
        status, title = _acceptance[cid]
        terminalreporter.write_line(f"{cid:<5} {status}  {title}")


@pytest.fixture(scope="session")
def bundled_lexicon():
    return load_dictionary(data_path("open_dictionary.dic"))


@pytest.fixture(scope="session")
def bundled_matcher(bundled_lexicon):
    return compile_matcher(bundled_lexicon)


@pytest.fixture(scope="session")
def bundled_composites():
    return load_composites(data_path("composites.yaml"))
