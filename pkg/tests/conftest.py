import numpy as np
import pytest

from app.config import RunConfig
from app.curve_tiles import CurveParams, build_frequency_tiles


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiles_n4():
    return build_frequency_tiles(CurveParams(3, 4))


@pytest.fixture
def small_config(tmp_path):
    return RunConfig(
        d=3,
        n_values=(1, 2, 4),
        p=8,
        seeds=(0, 1),
        families=("single", "ones", "random"),
        mc_samples=1 << 14,
        out_dir=str(tmp_path / "out"),
    )
