import os

import pytest

from ghnplan import search
from ghnplan.generators import load_domain
from ghnplan.pddl import ConcreteState, load_problem, parse_problem, validate_plan

DATA = os.path.join(os.path.dirname(__file__), "data")

_checked = {"solved": 0, "invalid": []}
_acceptance_lines = []


def _soundness_hook(problem, result):
    if result.solved:
        _checked["solved"] += 1
        if not validate_plan(problem, result.plan):
            _checked["invalid"].append(problem.name)
            raise AssertionError(f"invalid plan returned for {problem.name}")


@pytest.fixture(autouse=True, scope="session")
def global_soundness():
    """Every solved search in the whole session must return a valid plan."""
    search.result_hooks.append(_soundness_hook)
    yield _checked
    search.result_hooks.remove(_soundness_hook)


@pytest.fixture(scope="session")
def soundness_counter():
    return _checked


@pytest.fixture(scope="session")
def acceptance_report():
    def record(number: int, title: str, passed: bool, detail: str = ""):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
        if detail:
            line += f" ({detail})"
        _acceptance_lines.append((number, line))
        print(line)

    return record


def pytest_collection_modifyitems(items):
    # acceptance runs last so the soundness criterion sees every earlier search
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"soundness hook: {_checked['solved']} solved searches validated, {len(_checked['invalid'])} invalid"
    )


@pytest.fixture(scope="session")
def gripper_domain():
    return load_domain("gripper")


@pytest.fixture(scope="session")
def two_ball(gripper_domain):
    with open(os.path.join(DATA, "two_ball.pddl"), encoding="utf-8") as fh:
        return parse_problem(fh.read(), gripper_domain)


@pytest.fixture(scope="session")
def s0(two_ball):
    return two_ball.initial_state


@pytest.fixture(scope="session")
def unsolvable_problem():
    return load_problem(os.path.join(DATA, "gripper_domain.pddl"), os.path.join(DATA, "unsolvable.pddl"))


def state_of(*atoms) -> ConcreteState:
    return ConcreteState(frozenset(tuple(a) for a in atoms))
