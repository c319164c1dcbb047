import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from desia import AttributeSchema, Dataset, dataset_from_records


@pytest.fixture
def tiny_schema() -> AttributeSchema:
    """Two binary attributes, the second sensitive."""
    return AttributeSchema(names=("a1", "a2"), sizes=(2, 2))


@pytest.fixture
def tiny_dataset(tiny_schema) -> Dataset:
    """The bundled solvable fixture: records (0,1) and (1,0)."""
    return dataset_from_records(tiny_schema, [(0, 1), (1, 0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
