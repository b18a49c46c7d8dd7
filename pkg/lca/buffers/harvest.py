"""Turning collected episodes into goal-labeled training data.

Two arms feed the task buffer: the reward arm keeps a successful episode under
the task label and the final subgoal caption, and the detection arm keeps the
prefix up to each frame where the oracle confirms a curriculum subgoal.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Set, Tuple

import numpy as np

from lca.buffers.records import EmptyBufferError, EpisodeRecord, LifelongBuffer, TaskBuffer, Trajectory
from lca.llm.schemas import Curriculum
from lca.policy.network import FEATURE_DIM, Batch
from lca.semantics.oracle import DEFAULT_ORACLE, OracleConfig, detect_achieved, embed_label


logger = logging.getLogger(__name__)


def _prefix(ep: EpisodeRecord, frame: int, label: str) -> Trajectory:
    frames = ep.frames()
    return Trajectory(records=ep.records[:frame], label=label, final_snapshot=frames[frame])


def _detected(ep: EpisodeRecord, curriculum: Curriculum, config: OracleConfig) -> List[Trajectory]:
    out = []
    for frame, caption in detect_achieved(ep.frames(), curriculum, config):
        if frame == 0:
            continue  # held before any action was taken
        out.append(_prefix(ep, frame, caption.text))
    return out


def harvest_episode(
    ep: EpisodeRecord,
    curriculum: Curriculum,
    config: OracleConfig = DEFAULT_ORACLE,
    detect_subgoals: bool = True,
) -> List[Trajectory]:
    found: List[Trajectory] = []
    if ep.external_reward:
        end = len(ep.records)
        found.append(_prefix(ep, end, ep.task.text))
        found.append(_prefix(ep, end, curriculum.final.text))
    if detect_subgoals:
        found.extend(_detected(ep, curriculum, config))

    seen: Set[Tuple[str, int]] = set()
    unique = []
    for traj in found:
        key = (traj.label, len(traj))
        if key not in seen:
            seen.add(key)
            unique.append(traj)
    unique.sort(key=lambda t: len(t))
    logger.debug("episode seed=%d: %d trajectories %s", ep.episode_seed, len(unique), [t.label for t in unique])
    return unique


def relabel_offline(
    lifelong: LifelongBuffer,
    curriculum: Curriculum,
    config: OracleConfig = DEFAULT_ORACLE,
) -> TaskBuffer:
    """Seed a fresh task buffer with every stored prefix that reaches a subgoal of ``curriculum``."""
    buffer = TaskBuffer()
    for ep in lifelong:
        buffer.add(_detected(ep, curriculum, config))
    logger.info(
        "relabeled %d stored episodes: %d trajectories, %d timesteps",
        len(lifelong), len(buffer), buffer.timestep_count,
    )
    return buffer


def sample_batch(
    buffer: TaskBuffer,
    batch_size: int,
    rng: np.random.Generator,
    config: OracleConfig = DEFAULT_ORACLE,
) -> Batch:
    """Uniform draw over the stored progress steps, each paired with its trajectory's goal embedding.

    Only timesteps on a trajectory's loop-free path are drawn (see ``Trajectory.training_steps``).
    """
    lengths = np.array([len(t.training_steps) for t in buffer.trajectories], dtype=np.int64)
    total = int(lengths.sum()) if lengths.size else 0
    if total == 0:
        raise EmptyBufferError("task buffer holds no progress steps")
    ends = np.cumsum(lengths)
    flat = rng.integers(total, size=batch_size)
    which = np.searchsorted(ends, flat, side="right")
    offsets = flat - (ends[which] - lengths[which])

    goals_by_label: Dict[str, np.ndarray] = {}
    feats = np.empty((batch_size, FEATURE_DIM))
    goals = np.empty((batch_size, config.dimension))
    cells = np.empty(batch_size, dtype=np.int64)
    for i, (t, k) in enumerate(zip(which, offsets)):
        traj = buffer.trajectories[t]
        record = traj.records[traj.training_steps[k]]
        if traj.label not in goals_by_label:
            goals_by_label[traj.label] = embed_label(traj.label, config)
        feats[i] = record.features
        goals[i] = goals_by_label[traj.label]
        cells[i] = record.action_cell
    return Batch(features=feats, goals=goals, cells=cells)
