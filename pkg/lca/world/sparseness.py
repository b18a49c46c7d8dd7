from __future__ import annotations

import logging
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from lca.world.env import reset, step, task_success
from lca.world.types import DEFAULT_WORLD, Action, Task, WorldConfig, WorldState


logger = logging.getLogger(__name__)

SuccessProbe = Callable[[WorldState, np.random.Generator], bool]

_CHUNK = 1024


class SparsenessEstimate(BaseModel):
    task: str
    mean: float = Field(..., description="Mean steps to first reward over uncensored trials")
    restricted_mean: float = Field(
        ..., description="Mean over all trials with censored ones counted at max_steps; a lower bound on sparseness"
    )
    censored_fraction: float
    trials: int
    uncensored: int
    max_steps: int

    @property
    def lower_bound(self) -> bool:
        """True when censoring makes ``mean`` an underestimate."""
        return self.censored_fraction > 0.0

    @property
    def all_censored(self) -> bool:
        return self.uncensored == 0


def _steps_to_success(
    task: Task,
    max_steps: int,
    rng: np.random.Generator,
    probe_rng: np.random.Generator,
    probe: SuccessProbe,
    config: WorldConfig,
) -> Optional[int]:
    state = reset(int(rng.integers(2**62)), config)
    taken = 0
    while taken < max_steps:
        chunk = min(_CHUNK, max_steps - taken)
        targets = rng.random((chunk, 2)) * config.workspace
        for x, y in targets.tolist():
            state = step(state, Action(target=(x, y)), config)
            taken += 1
            if probe(state, probe_rng):
                return taken
    return None


def estimate_sparseness(
    task: Task,
    max_steps: int,
    trials: int,
    seed: int,
    *,
    success_probe: Optional[SuccessProbe] = None,
    config: WorldConfig = DEFAULT_WORLD,
) -> SparsenessEstimate:
    """Average uniform-random steps until ``task`` first succeeds.

    Each trial is a continuing rollout from a fresh reset with its own generator
    stream. Trials that reach ``max_steps`` are censored and excluded from the mean.
    """
    if max_steps < 1 or trials < 1:
        raise ValueError(f"max_steps and trials must be >= 1, got {max_steps} and {trials}")
    probe = success_probe or (lambda state, _rng: task_success(state, task))

    hits: List[int] = []
    capped: List[int] = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        probe_rng = np.random.default_rng([seed, trial, 1])
        taken = _steps_to_success(task, max_steps, rng, probe_rng, probe, config)
        if taken is not None:
            hits.append(taken)
        capped.append(max_steps if taken is None else taken)
        logger.debug("sparseness %s trial %d: %s", task.text, trial, taken if taken is not None else "censored")

    censored = trials - len(hits)
    if hits:
        mean = float(np.mean(hits))
    else:
        mean = float(max_steps)
        logger.warning(
            "all %d trials of %r censored at %d steps; sparseness is at least %d",
            trials, task.text, max_steps, max_steps,
        )
    estimate = SparsenessEstimate(
        task=task.text,
        mean=mean,
        restricted_mean=float(np.mean(capped)),
        censored_fraction=censored / trials,
        trials=trials,
        uncensored=len(hits),
        max_steps=max_steps,
    )
    logger.info(
        "sparseness %r: mean=%.1f restricted=%.1f censored=%.2f (%d trials)",
        task.text, estimate.mean, estimate.restricted_mean, estimate.censored_fraction, trials,
    )
    return estimate
