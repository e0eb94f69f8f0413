import random

import pytest

from fuzzy_potts.tree import RootedTree, regular_tree

_ACCEPTANCE_LINES = []


def random_tree(n, seed):
    rng = random.Random(seed)
    return RootedTree(tuple([None] + [rng.randrange(x) for x in range(1, n)]))


def fixture_trees():
    """Small trees (<= 10 nodes) used for exact enumeration checks."""
    return {
        "single-edge": RootedTree((None, 0)),
        "path-5": RootedTree((None, 0, 1, 2, 3)),
        "path-10": RootedTree((None,) + tuple(range(9))),
        "star-10": RootedTree((None,) + (0,) * 9),
        "binary-depth-2": regular_tree(2, 2),
        "ternary-depth-2-root-4": RootedTree((None, 0, 0, 0, 0, 1, 1, 1, 2, 2)),
        "random-8": random_tree(8, 1),
        "random-9": random_tree(9, 2),
        "random-10a": random_tree(10, 3),
        "random-10b": random_tree(10, 4),
    }


@pytest.fixture(scope="session")
def trees():
    return fixture_trees()


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
