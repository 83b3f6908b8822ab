import functools
import pathlib

import pytest

from lindtree.lindstedt import solve_up_to
from lindtree.model import load_model

ROOT = pathlib.Path(__file__).resolve().parent.parent
MODELS = ROOT / "models"
FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"
CORPUS = ("sysA", "g2", "ham1", "ham2")


@functools.lru_cache(maxsize=None)
def model(name):
    return load_model(MODELS / f"{name}.json")


@functools.lru_cache(maxsize=None)
def table(name, K, variant=None):
    return solve_up_to(model(name), K, variant=variant)


@pytest.fixture(scope="session")
def models():
    return {n: model(n) for n in CORPUS}


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
