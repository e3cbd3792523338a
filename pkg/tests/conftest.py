import numpy as np
import pytest

from wvcal.grammar import parse_model
from wvcal.simulate import SimSpec, simulate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def sim(text: str, T: int, seed: int, freq: float = 1.0) -> np.ndarray:
    return simulate(SimSpec(parse_model(text, freq), T, seed))
