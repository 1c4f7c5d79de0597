import numpy as np
import pytest
from hypothesis import strategies as st

from gspbench.auction import AuctionInstance


def random_game(rng: np.random.Generator, n: int, gammas: bool = False) -> AuctionInstance:
    alphas = np.sort(rng.uniform(0.0, 1.0, n))[::-1]
    vals = rng.uniform(0.0, 1.0, n)
    g = np.exp(rng.uniform(np.log(0.5), np.log(2.0), n)) if gammas else None
    return AuctionInstance(alphas, vals, g)


def random_profile(rng: np.random.Generator, instance: AuctionInstance) -> tuple[float, ...]:
    v = np.asarray(instance.valuations)
    b = rng.uniform(0.0, 1.0, instance.n) * v
    # occasional exact ties and zero bids exercise the tie-break
    if instance.n > 1 and rng.random() < 0.2:
        i, j = rng.choice(instance.n, 2, replace=False)
        b[i] = min(b[j], v[i])
    b[rng.random(instance.n) < 0.1] = 0.0
    return tuple(float(x) for x in b)


@st.composite
def instances(draw, min_n=1, max_n=6, gammas=True):
    n = draw(st.integers(min_n, max_n))
    unit = st.floats(0.0, 1.0, allow_nan=False)
    alphas = sorted(draw(st.lists(unit, min_size=n, max_size=n)), reverse=True)
    vals = draw(st.lists(unit, min_size=n, max_size=n))
    g = draw(st.lists(st.floats(0.5, 2.0), min_size=n, max_size=n)) if gammas else None
    return AuctionInstance(alphas, vals, g)


@st.composite
def games_with_bids(draw, min_n=1, max_n=6, gammas=True):
    inst = draw(instances(min_n, max_n, gammas))
    fracs = draw(st.lists(st.sampled_from([0.0, 0.25, 0.5, 1.0]) | st.floats(0.0, 1.0), min_size=inst.n, max_size=inst.n))
    return inst, tuple(f * v for f, v in zip(fracs, inst.valuations))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting ---------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Store one pass/fail line per acceptance criterion and print it immediately."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
