from __future__ import annotations

import numpy as np
import pytest

from app import build_service
from models import ConstraintSet, CounterexampleConfig, Optimum
from services.counterexample_service import counterexample_setup
from services.problem_service import AbsoluteLoss, ProblemInstance


@pytest.fixture
def out_dir(tmp_path):
    target = tmp_path / "results"
    target.mkdir()
    return target


@pytest.fixture
def service(out_dir):
    experiment_service, connection = build_service(out_dir, charts=False)
    yield experiment_service
    connection.close()


@pytest.fixture
def gn4_config():
    return CounterexampleConfig.simulation(n=4, eps=0.25, T=2_000)


@pytest.fixture
def gn4_setup(gn4_config):
    return counterexample_setup(gn4_config)


@pytest.fixture
def abs_problem():
    """|x| on [-5, 5] as a single-agent problem."""
    return ProblemInstance(
        locals=(AbsoluteLoss.scalar(1.0, 0.0),),
        constraint=ConstraintSet.symmetric_box(5.0, 1),
        dimension=1,
        known_optimum=Optimum(x_star=np.zeros(1), f_star=0.0),
        name="abs",
    )
