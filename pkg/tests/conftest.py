import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subdiff.subordinators import SeededRng


@pytest.fixture
def rng():
    return SeededRng(20240817)


@pytest.fixture
def rng2():
    return SeededRng(98127431)
