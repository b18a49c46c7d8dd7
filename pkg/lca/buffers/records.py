from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

from lca.policy.network import N_CELLS
from lca.world.types import Point, SceneSnapshot, Task


class EmptyBufferError(ValueError):
    """Sampling was requested from a buffer holding no timesteps."""


@dataclass(frozen=True)
class TimestepRecord:
    """One collected tuple: state features, observation, canonical action cell and active goal."""

    features: Tuple[float, ...]
    snapshot: SceneSnapshot
    action_cell: int
    goal_label: str

    def __post_init__(self) -> None:
        if not 0 <= self.action_cell < N_CELLS:
            raise ValueError(f"action cell {self.action_cell} outside 0..{N_CELLS - 1}")


@dataclass(frozen=True)
class EpisodeRecord:
    records: Tuple[TimestepRecord, ...]
    final_snapshot: SceneSnapshot
    task: Task
    external_reward: int
    episode_seed: int
    # executed action targets, kept so the episode replays exactly
    targets: Tuple[Point, ...] = ()

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("an episode holds at least one timestep")
        if self.external_reward not in (0, 1):
            raise ValueError(f"external reward is 0 or 1, got {self.external_reward}")
        if self.targets and len(self.targets) != len(self.records):
            raise ValueError("one executed target per timestep")

    def __len__(self) -> int:
        return len(self.records)

    def frames(self) -> List[SceneSnapshot]:
        """Observations o_0 .. o_T."""
        return [r.snapshot for r in self.records] + [self.final_snapshot]


def progress_steps(frames: Sequence[SceneSnapshot]) -> Tuple[int, ...]:
    """Timesteps on the loop-free path through ``frames`` (observations o_0 .. o_T).

    A step whose observation repeats an earlier one closes a loop; the loop is
    cut and the path continues from the latest visit, so no-ops and
    pick-then-drop detours are never kept. Returns the timestep indices whose
    action leaves the path's current observation for the next one.
    """
    path: List[int] = []
    for t, frame in enumerate(frames):
        for j, seen in enumerate(path):
            if frames[seen] == frame:
                del path[j:]
                break
        path.append(t)
    return tuple(path[:-1])


@dataclass(frozen=True)
class Trajectory:
    """Goal-labeled episode prefix; ``final_snapshot`` is the observation after its last action."""

    records: Tuple[TimestepRecord, ...]
    label: str
    final_snapshot: SceneSnapshot

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def training_steps(self) -> Tuple[int, ...]:
        """Indices of the records that make symbolic progress toward ``final_snapshot``."""
        return progress_steps([r.snapshot for r in self.records] + [self.final_snapshot])


def _digest(episode: EpisodeRecord) -> bytes:
    return hashlib.blake2b(repr(episode).encode(), digest_size=16).digest()


class LifelongBuffer:
    """Append-only store of every collected episode, across tasks."""

    def __init__(self, episodes: Iterable[EpisodeRecord] = ()) -> None:
        self._episodes: List[EpisodeRecord] = []
        self._digests: List[bytes] = []
        self.extend(episodes)

    def append(self, episode: EpisodeRecord) -> None:
        self._episodes.append(episode)
        self._digests.append(_digest(episode))

    def extend(self, episodes: Iterable[EpisodeRecord]) -> None:
        for episode in episodes:
            self.append(episode)

    @property
    def episodes(self) -> Tuple[EpisodeRecord, ...]:
        return tuple(self._episodes)

    def fingerprint(self, upto: Optional[int] = None) -> str:
        """Chained hash of the first ``upto`` episodes (all by default)."""
        h = hashlib.blake2b(digest_size=16)
        for digest in self._digests[:upto]:
            h.update(digest)
        return h.hexdigest()

    def __len__(self) -> int:
        return len(self._episodes)

    def __iter__(self) -> Iterator[EpisodeRecord]:
        return iter(self._episodes)


@dataclass
class TaskBuffer:
    """Goal-labeled trajectories for the task currently being learned."""

    trajectories: List[Trajectory] = field(default_factory=list)

    def add(self, trajectories: Iterable[Trajectory]) -> None:
        self.trajectories.extend(trajectories)

    @property
    def timestep_count(self) -> int:
        return sum(len(t) for t in self.trajectories)

    @property
    def trainable_count(self) -> int:
        return sum(len(t.training_steps) for t in self.trajectories)

    def labels(self) -> List[str]:
        return sorted({t.label for t in self.trajectories})

    def __len__(self) -> int:
        return len(self.trajectories)
