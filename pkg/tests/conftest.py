import json

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ishap", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("ishap")


@pytest.fixture
def normal_background():
    rng = np.random.default_rng(1234)
    from ishap.model import Dataset

    return Dataset.from_array(rng.normal(size=(4000, 3)))


@pytest.fixture
def write_json(tmp_path):
    def write(name, doc):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write
