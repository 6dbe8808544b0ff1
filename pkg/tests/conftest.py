import time

import numpy as np
import pytest

from entangle_lab.pauli import enumerate_k_local, expectations
from entangle_lab.states import DatasetSpec, NoiseRanges, default_class_mix, density_stack, make_dataset
from entangle_lab.svm import TrainConfig, eliminate_features

# (criterion, passed, detail) tuples filled in by test_acceptance
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="full-scale run; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0].split()[1].rstrip(":"))):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def build_features(n, k, per_class, seed, ranges=NoiseRanges()):
    obs = enumerate_k_local(n, k)
    records = make_dataset(DatasetSpec(n, default_class_mix(n, per_class), ranges, seed))
    x = expectations(density_stack(records), obs)
    y = np.array([r.label for r in records])
    return x, y, obs, records


@pytest.fixture(scope="session")
def desk_run():
    """Desk-scale 4-qubit training: 2000 states per class, 80/20 split, floor 0.99, M = 4."""
    start = time.perf_counter()
    x, y, obs, _ = build_features(4, 2, 2000, seed=11)
    order = np.random.default_rng(0).permutation(len(y))
    n_test = int(round(0.2 * len(y)))
    test, tr = order[:n_test], order[n_test:]
    cfg = TrainConfig(accuracy_floor=0.99, min_features=4, seed=0)
    result = eliminate_features(x[tr], y[tr], obs, cfg)
    cols = [obs.index(p) for p in result.selected]
    return {
        "result": result,
        "obs": obs,
        "x_test": x[test][:, cols],
        "y_test": y[test],
        "seconds": time.perf_counter() - start,
    }


@pytest.fixture(scope="session")
def desk_model(desk_run):
    return desk_run["result"].model

