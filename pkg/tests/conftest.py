import numpy as np
import pytest

from macsim import synthgen
from macsim.blocking import BlockingSpec, build_agreement, partition


@pytest.fixture(scope="session")
def small_population():
    """4,000 Y records in SA1 groups of 40; X holds 500 perturbed copies."""
    y, x = synthgen.generate_population(4000, 0.1, seed=7)
    spec = synthgen.ErrorSpec(seed=8, sa1_range=(10001, 10100))
    x2, truth = synthgen.inject_errors(x, spec)
    return y, x, x2, truth


@pytest.fixture(scope="session")
def small_block(small_population):
    y, _, x2, truth = small_population
    blocks = partition(x2, y, BlockingSpec(("sa1",)), truth)
    key = blocks.keys()[0]
    xi, yi = blocks[key]
    return build_agreement(x2.iloc[xi], y.iloc[yi], BlockingSpec(("sa1",)).linking_fields, key)


def random_block(rng, nx, ny, nl, p_missing=0.1, p_agree=0.3):
    cells = rng.choice(np.array([1, -1, 0], dtype=np.int8), size=(nx, ny, nl),
                       p=[p_agree, 1 - p_agree - p_missing, p_missing])
    truth = rng.permutation(ny)[:nx]
    return cells, truth


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
