import sys, os
sys.path.insert(0, os.path.dirname(__file__))
import math
from pathlib import Path

import numpy as np
import pytest

from dnlab.models import coupled_system
from dnlab.symbols import Sector

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "dnlab" / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"


def fixture_path(n, strength):
    return FIXTURES / f"coupled_n{n}_{strength}.json"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sector():
    return Sector.from_epsilon(math.pi / 6)


@pytest.fixture(params=[1, 2])
def strong_system(request):
    return coupled_system(request.param, 1.0, "strong")
