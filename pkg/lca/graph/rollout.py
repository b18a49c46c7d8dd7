"""Single-episode collection and evaluation."""
from __future__ import annotations

import logging
from typing import Callable, Literal, Optional, Tuple

import numpy as np

from lca.buffers.records import EpisodeRecord, TimestepRecord
from lca.llm.schemas import Curriculum
from lca.policy.network import Mode, PolicyParams, action_cell, act, features, random_cell_action
from lca.semantics.captions import Caption
from lca.semantics.oracle import DEFAULT_ORACLE, OracleConfig, embed_label, verdict
from lca.world.env import random_action, reset, snapshot, step, task_success
from lca.world.types import DEFAULT_WORLD, Action, SceneSnapshot, Task, WorldConfig, WorldState


logger = logging.getLogger(__name__)

# (state, active subgoal, generator) -> action; replaces the policy when given
Controller = Callable[[WorldState, Caption, np.random.Generator], Action]
Explore = Literal["grid", "uniform"]

COLLECT_STREAM = 0
TRAIN_STREAM = 1
EVAL_STREAM = 2


def episode_streams(
    master_seed: int, stage: int, stream: int, round_index: int, index: int
) -> Tuple[int, np.random.Generator]:
    """Reset seed and private generator for one episode."""
    seq = np.random.SeedSequence([master_seed, stage, stream, round_index, index])
    reset_seed = int(seq.generate_state(1, dtype=np.uint64)[0])
    return reset_seed, np.random.default_rng(seq)


def advance_subgoal(
    curriculum: Curriculum,
    index: int,
    snap: SceneSnapshot,
    config: OracleConfig,
) -> int:
    """Move past every leading subgoal the oracle already confirms; the final one is never passed."""
    last = len(curriculum) - 1
    while index < last and verdict(curriculum.captions[index], snap, config):
        index += 1
    return index


def run_episode(
    params: Optional[PolicyParams],
    task: Task,
    curriculum: Curriculum,
    *,
    reset_seed: int,
    rng: np.random.Generator,
    cap: int,
    epsilon: float = 0.0,
    explore: Explore = "grid",
    mode: Mode = "greedy",
    oracle: OracleConfig = DEFAULT_ORACLE,
    world: WorldConfig = DEFAULT_WORLD,
    controller: Optional[Controller] = None,
) -> EpisodeRecord:
    """Roll out until task success or ``cap`` actions.

    The actor conditions on the active curriculum subgoal and moves to the next
    one once the oracle confirms it. With probability ``epsilon`` the action is
    random instead: a grid cell centre (``explore="grid"``) or a uniform point.
    """
    if params is None and controller is None:
        raise ValueError("run_episode needs policy params or a controller")
    state = reset(reset_seed, world)
    records = []
    targets = []
    goal_index = 0
    reward = 0
    for _ in range(cap):
        snap = snapshot(state)
        goal_index = advance_subgoal(curriculum, goal_index, snap, oracle)
        goal = curriculum.captions[goal_index]
        if controller is not None:
            action = controller(state, goal, rng)
        elif epsilon > 0.0 and rng.random() < epsilon:
            action = random_cell_action(rng, world) if explore == "grid" else random_action(rng, world)
        else:
            action = act(params, features(state, world), embed_label(goal.text, oracle), mode, rng, world)
        nxt = step(state, action, world)
        records.append(TimestepRecord(features(state, world), snap, action_cell(state, action, nxt, world), goal.text))
        targets.append((float(action.target[0]), float(action.target[1])))
        state = nxt
        if task_success(state, task):
            reward = 1
            break
    return EpisodeRecord(
        records=tuple(records),
        final_snapshot=snapshot(state),
        task=task,
        external_reward=reward,
        episode_seed=reset_seed,
        targets=tuple(targets),
    )
