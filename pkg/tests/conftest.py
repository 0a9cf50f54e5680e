import json
import logging
import os
import sys

import pytest

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
FIXTURES = os.path.join(ROOT, "fixtures")
sys.path.insert(0, HERE)

logging.getLogger("relqa").setLevel(logging.ERROR)


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def wiki_text() -> str:
    with open(fixture_path("mini_wiki.txt"), encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def triplet_text() -> str:
    with open(fixture_path("mini_triplets.tsv"), encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture(scope="session")
def expected() -> dict:
    with open(fixture_path("mini_expected.json"), encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def built():
    """(corpus, graph) for the committed fixture."""
    from relqa.pipeline import build_graph
    return build_graph(fixture_path("mini_wiki.txt"), fixture_path("mini_triplets.tsv"))


@pytest.fixture(scope="session")
def corpus(built):
    return built[0]


@pytest.fixture(scope="session")
def graph(built):
    return built[1]


@pytest.fixture(scope="session")
def dataset(graph):
    from relqa.qagen import generate_dataset
    return generate_dataset(graph)


@pytest.fixture(scope="session")
def small_synthetic():
    """A 60-entity synthetic graph with its dataset, for sampling and training tests."""
    from relqa.pipeline import build_from_text
    from relqa.synth import generate_synthetic
    syn = generate_synthetic(60, 6, seed=3)
    graph, data, _ = build_from_text(syn.text, syn.triplets)
    return graph, data


# ---------------------------------------------------------------------------
# one pass/fail line per acceptance criterion in the terminal summary

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    name = report.nodeid.split("::", 1)[1]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _acceptance[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_acceptance.items(), key=lambda kv: int(kv[0].split("_")[2])):
        terminalreporter.write_line(f"{outcome}  {name}")
