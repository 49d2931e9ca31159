from pathlib import Path
import logging

import numpy as np
import pandas as pd
import pytest

# The multi-seed experiments take minutes; select them with -m slow.

SCHEMA_DIR = Path(__file__).parent.parent.joinpath("schemas")


@pytest.fixture(scope="session")
def logger():
    return logging.getLogger("tests")


@pytest.fixture
def toy_X() -> np.ndarray:
    return np.array([[1, 2, 3, 2, 0], [2, 6, 1, 1, 1], [0, 6, 0, 1, 2]], dtype=np.float64)


@pytest.fixture(scope="session")
def costs_2_1():
    from kpclr.pipeline.schemas import CostPair
    return CostPair(cost_fp=2, cost_fn=1)


@pytest.fixture(scope="session")
def binary_data():
    from kpclr.pipeline.data import generate_synthetic
    return generate_synthetic('nonlinear_binary', 450, seed=1)


@pytest.fixture(scope="session")
def binary_split(binary_data):
    from kpclr.pipeline.data import split_three_way
    return split_three_way(binary_data, seed=1)


@pytest.fixture(scope="session")
def binary_splits(binary_data, binary_split):
    """Standardized (train, validation, test, params)"""
    from kpclr.pipeline.data import standardized_splits
    return standardized_splits(binary_data, binary_split)


@pytest.fixture(scope="session")
def small_grid(costs_2_1):
    from kpclr.pipeline.schemas import KernelSpec, SearchGrid
    return SearchGrid(
        kernels=[KernelSpec(family='anova', gamma=0.1, degree=2), KernelSpec(family='anova', gamma=3, degree=2)],
        rhos=[0.5, 0.7, 0.9], costs=costs_2_1, seed=1)


@pytest.fixture(scope="session")
def grid_results(binary_splits, small_grid):
    from kpclr.pipeline.selection import run_grid
    train, validation, _, params = binary_splits
    return run_grid(train, validation, small_grid, params)


@pytest.fixture(scope="session")
def fitted_forecaster(binary_splits, costs_2_1):
    from kpclr.pipeline.schemas import KernelSpec
    from kpclr.pipeline.selection import fit_forecaster
    train, _, _, params = binary_splits
    return fit_forecaster(train, KernelSpec(family='anova', gamma=3, degree=2), 0.9, costs_2_1, params)


@pytest.fixture(scope="session")
def regression_splits():
    from kpclr.pipeline.data import generate_synthetic, split_three_way, standardized_splits
    ds = generate_synthetic('regression1d', 240, seed=2)
    return standardized_splits(ds, split_three_way(ds, seed=2))


@pytest.fixture
def mixed_csv(tmp_path) -> Path:
    frame = pd.DataFrame(dict(
        age=[31, 45, 22, 60, 38, 51, 27, None],
        color=['red', 'blue', 'green', 'red', 'blue', 'green', 'red', 'blue'],
        outcome=['no', 'yes', 'no', 'yes', 'no', 'yes', 'no', 'no']))
    path = tmp_path / "mixed.csv"
    frame.to_csv(path, index=False)
    return path


@pytest.fixture
def grid_file() -> Path:
    return SCHEMA_DIR / "grid.yaml"


@pytest.fixture
def schema_file() -> Path:
    return SCHEMA_DIR / "schema.yaml"
