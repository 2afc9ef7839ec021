import numpy as np
import pytest

from estimand_lab import parse_model
from estimand_lab.builtins import PAPER

MINIMAL = """\
Z ~ Bernoulli(0.5)
X = Z
Y = X
@instrument Z
@exposure X
@outcome Y
"""


def model_text(x_eq: str, y_eq: str, extra: str = "", z: str = "Bernoulli(0.3)") -> str:
    return (
        f"Z ~ {z}\n"
        "U ~ Bernoulli(0.5)\n"
        "eX ~ Normal(0, 1)\n"
        "eY ~ Normal(0, 1)\n"
        f"{extra}"
        f"X = {x_eq}\n"
        f"Y = {y_eq}\n"
        "@instrument Z\n@exposure X\n@outcome Y\n"
    )


def make_model(x_eq: str, y_eq: str, **kw):
    return parse_model(model_text(x_eq, y_eq, **kw))


@pytest.fixture(scope="session")
def paper():
    return parse_model(PAPER)


@pytest.fixture(scope="session")
def paper_report(paper):
    from estimand_lab import diagnostics

    return diagnostics(paper, 1_000_000, 1)


def brute_force_paper_family(a: float, b: float, n: int, seed: int) -> dict:
    """Direct numpy simulation of Y = a X^2 + b X + U + eY, X = 2Z + U + eX.

    Independent of the package: its own generator and hand-written
    potential outcomes.
    """
    rng = np.random.default_rng(seed)
    z = rng.random(n) < 0.3
    u = (rng.random(n) < 0.5).astype(float)
    ex = rng.standard_normal(n)
    ey = rng.standard_normal(n)
    x = 2 * z + u + ex
    x1, x0 = 2 + u + ex, u + ex
    y1 = a * x1**2 + b * x1 + u + ey
    y0 = a * x0**2 + b * x0 + u + ey
    return {
        "ade": np.mean(2 * a * x + b),
        "wald": np.mean(y1 - y0) / np.mean(x1 - x0),
    }


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
