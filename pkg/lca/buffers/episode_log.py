"""JSON-lines episode log: one entry per collected episode, replayable into records."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field

from lca.buffers.records import EpisodeRecord, TimestepRecord
from lca.llm.decomposer import parse_task
from lca.policy.network import action_cell, features
from lca.semantics.captions import Caption
from lca.world.env import reset, snapshot, step
from lca.world.types import DEFAULT_WORLD, Action, WorldConfig


logger = logging.getLogger(__name__)


class EpisodeLogEntry(BaseModel):
    seed: int = Field(..., description="Seed passed to reset")
    task: str
    cells: List[int] = Field(..., description="Canonical action cell per timestep")
    targets: List[Tuple[float, float]] = Field(..., description="Executed action targets")
    goals: List[str] = Field(..., description="Goal label active at each timestep")
    reward: int
    subgoals: List[Tuple[int, str]] = Field(default_factory=list, description="(frame, caption) detections")


def entry_from_episode(ep: EpisodeRecord, detected: Sequence[Tuple[int, Caption]] = ()) -> EpisodeLogEntry:
    if not ep.targets:
        raise ValueError("episode carries no executed targets and cannot be logged for replay")
    return EpisodeLogEntry(
        seed=ep.episode_seed,
        task=ep.task.text,
        cells=[r.action_cell for r in ep.records],
        targets=[tuple(t) for t in ep.targets],
        goals=[r.goal_label for r in ep.records],
        reward=ep.external_reward,
        subgoals=[(frame, caption.text) for frame, caption in detected],
    )


def replay(entry: EpisodeLogEntry, config: WorldConfig = DEFAULT_WORLD) -> EpisodeRecord:
    state = reset(entry.seed, config)
    records = []
    for target, goal in zip(entry.targets, entry.goals):
        action = Action(target=(target[0], target[1]))
        nxt = step(state, action, config)
        records.append(TimestepRecord(features(state, config), snapshot(state), action_cell(state, action, nxt, config), goal))
        state = nxt
    replayed = EpisodeRecord(
        records=tuple(records),
        final_snapshot=snapshot(state),
        task=parse_task(entry.task),
        external_reward=entry.reward,
        episode_seed=entry.seed,
        targets=tuple((t[0], t[1]) for t in entry.targets),
    )
    cells = [r.action_cell for r in replayed.records]
    if cells != entry.cells:
        logger.warning("replayed cells differ from the log for seed %d", entry.seed)
    return replayed


def append_entries(path: Union[str, Path], entries: Iterable[EpisodeLogEntry]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("a", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.model_dump_json() + "\n")
            count += 1
    return count


def read_entries(path: Union[str, Path]) -> List[EpisodeLogEntry]:
    entries = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(EpisodeLogEntry.model_validate_json(line))
    return entries


def replay_log(path: Union[str, Path], config: Optional[WorldConfig] = None) -> List[EpisodeRecord]:
    return [replay(entry, config or DEFAULT_WORLD) for entry in read_entries(path)]
