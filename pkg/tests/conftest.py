from importlib import resources

import pytest

from pcfg_bound import binarize, parse_grammar

G1_TEXT = """start: S
S -> A B 1.0
A -> 'a' 0.7
A -> 'b' 0.3
B -> 'a' 0.4
B -> 'b' 0.6
"""

G2_TEXT = """start: S
S -> 'a' S 0.5
S -> 'a' 0.5
"""

GL_TEXT = """start: S
S -> S A 0.4
S -> A 0.6
A -> 'a' 1.0
"""

SINGLE_TEXT = "start: S\nS -> 'a' 1.0\n"


def toy_text() -> str:
    return resources.files("pcfg_bound.data").joinpath("toy_english.pcfg").read_text("utf-8")


@pytest.fixture(scope="session")
def g1():
    return parse_grammar(G1_TEXT)


@pytest.fixture(scope="session")
def g2():
    """Geometric grammar; binarized (the terminal is lifted to a preterminal)."""
    return binarize(parse_grammar(G2_TEXT))


@pytest.fixture(scope="session")
def g2_raw():
    return parse_grammar(G2_TEXT)


@pytest.fixture(scope="session")
def gl():
    return parse_grammar(GL_TEXT)


@pytest.fixture(scope="session")
def single():
    return parse_grammar(SINGLE_TEXT)


@pytest.fixture(scope="session")
def toy_raw():
    return parse_grammar(toy_text())


@pytest.fixture(scope="session")
def toy(toy_raw):
    return binarize(toy_raw)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
