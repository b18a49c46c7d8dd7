from __future__ import annotations

import pytest

from lca.graph.experiments import TrainingSession, run_curriculum_experiment
from lca.graph.trainer import RunConfig
from lca.llm.decomposer import decompose
from lca.world.types import ObjectId, PairStack


@pytest.fixture(scope="session")
def trained_pair() -> TrainingSession:
    """Red-on-blue learned with subgoals by the full collect-and-infer loop at default settings."""
    task = PairStack(ObjectId.RED, ObjectId.BLUE)
    config = RunConfig()
    session = TrainingSession(task, config, curriculum=decompose(task))
    run_curriculum_experiment(task, config, session=session)
    return session
