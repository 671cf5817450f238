import sys

import pytest

from relsynth import load_corpus
from relsynth.parser import parse_formula


@pytest.fixture(scope="session")
def spec():
    return load_corpus()


@pytest.fixture(scope="session")
def schema(spec):
    return spec.schema


@pytest.fixture(scope="session")
def formula(schema):
    def parse(text):
        return parse_formula(text, schema)
    return parse


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
