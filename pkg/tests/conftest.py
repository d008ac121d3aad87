import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("bamsr", deadline=None, max_examples=40)
settings.load_profile("bamsr")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def texture_dir(tmp_path_factory):
    from bamsr.synthetic import write_texture_set

    d = tmp_path_factory.mktemp("textures")
    write_texture_set(d, 6, size=48, seed=3)
    return d
