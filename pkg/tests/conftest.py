import numpy as np
import pytest

from brainnetgen import AUTISM, CONTROL
from brainnetgen.graphs import LabeledGraph
from brainnetgen.rng import SeededRng


def er_graph(n: int, p: float, rng: np.random.Generator, label: str = "unlabeled") -> LabeledGraph:
    upper = np.triu(rng.random((n, n)) < p, k=1).astype(np.uint8)
    return LabeledGraph.from_adjacency(upper, label)


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cohort():
    from brainnetgen.cohort import SbmSpec, make_two_population_cohort

    a = SbmSpec.equal_blocks(8, 2, 0.8, 0.1, AUTISM)
    b = SbmSpec.equal_blocks(8, 2, 0.5, 0.4, CONTROL)
    return make_two_population_cohort(a, b, 20, SeededRng(3))


def composite_gradcheck(config, graphs, seed: int, coords: int = 100) -> float:
    """Largest relative finite-difference error of the generator loss at a random point."""
    from brainnetgen.graphrnn import GraphRnnParams, _reversed_slots, batch_loss, encode_batch, loss_and_grads
    from brainnetgen.kernels import finite_diff_check, flatten, unflatten_into

    rng = SeededRng(seed)
    params = GraphRnnParams.init(config, rng.child("init"))
    arrays = params.arrays()
    # perturb every entry so ReLU units sit away from their kink at zero
    for a in arrays.values():
        a += rng.normal(a.shape, 0.3)
    batch = encode_batch([_reversed_slots(g.adjacency(), config.slots) for g in graphs], config)
    _, grads = loss_and_grads(params, batch)
    point = flatten(arrays)
    analytic = flatten(grads.arrays())

    def f(flat):
        unflatten_into(arrays, flat)
        return batch_loss(params, batch)

    picks = rng.child("coords").permutation(point.size)[:coords]
    err = finite_diff_check(f, point, analytic, coords=[int(i) for i in picks])
    unflatten_into(arrays, point)
    return err


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
N_CRITERIA = 12


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    assert passed, f"criterion {number}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        passed, detail = ACCEPTANCE.get(k, (False, "not run or errored before a verdict"))
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {k:2d}: {detail}")
