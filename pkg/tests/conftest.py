from __future__ import annotations

import bootstrap

bootstrap.add_src_to_path()

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from mpmab.strategy.schedule import ScheduleConstants  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def desk_consts() -> ScheduleConstants:
    return ScheduleConstants(c_eps=3.0, c_t0=20.0)
