import pytest

from seqnpa.game import builtin_game
from seqnpa.hierarchy import assemble
from seqnpa.sdp import solve

CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def chsh():
    return builtin_game("chsh-prob")


@pytest.fixture(scope="session")
def chsh_corr():
    return builtin_game("chsh-corr")


@pytest.fixture(scope="session")
def mermin():
    return builtin_game("mermin3-corr")


class Instance:
    """Assembled problem plus its solution, computed once per session."""

    def __init__(self, game, level):
        self.game = game
        self.problem, self.index, self.system = assemble(game, level)
        self._solution = None

    @property
    def solution(self):
        if self._solution is None:
            self._solution = solve(self.problem)
        return self._solution


@pytest.fixture(scope="session")
def chsh1(chsh):
    return Instance(chsh, 1)


@pytest.fixture(scope="session")
def chsh2(chsh):
    return Instance(chsh, 2)


@pytest.fixture(scope="session")
def mermin1(mermin):
    return Instance(mermin, 1)


@pytest.fixture(scope="session")
def chsh_repair_ctx(chsh):
    from seqnpa.repair import RepairContext

    return RepairContext.build(chsh, 1)
