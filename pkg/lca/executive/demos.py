"""Demonstration files: a JSON list of observed frames."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field, TypeAdapter, field_validator

from lca.world.env import reset, scripted_expert, snapshot, step
from lca.world.types import DEFAULT_WORLD, ObjectId, SceneSnapshot, Task, WorldConfig


logger = logging.getLogger(__name__)


class DemoFrame(BaseModel):
    grasping: Optional[ObjectId] = None
    on_top: List[Tuple[ObjectId, ObjectId]] = Field(default_factory=list)

    @field_validator("on_top")
    @classmethod
    def _distinct(cls, pairs: List[Tuple[ObjectId, ObjectId]]) -> List[Tuple[ObjectId, ObjectId]]:
        for top, bottom in pairs:
            if top is bottom:
                raise ValueError(f"{top.value} cannot be on top of itself")
        return pairs

    @classmethod
    def from_snapshot(cls, snap: SceneSnapshot) -> "DemoFrame":
        pairs = sorted(snap.on_top, key=lambda p: (p[0].index, p[1].index))
        return cls(grasping=snap.grasping, on_top=pairs)

    def to_snapshot(self) -> SceneSnapshot:
        return SceneSnapshot(grasping=self.grasping, on_top=frozenset(self.on_top))


_FRAMES = TypeAdapter(List[DemoFrame])


def parse_demo(text: Union[str, bytes]) -> List[SceneSnapshot]:
    frames = _FRAMES.validate_json(text)
    if not frames:
        raise ValueError("a demonstration needs at least one frame")
    return [f.to_snapshot() for f in frames]


def load_demo(path: Union[str, Path]) -> List[SceneSnapshot]:
    return parse_demo(Path(path).read_bytes())


def dump_demo(frames: Sequence[SceneSnapshot]) -> str:
    return _FRAMES.dump_json([DemoFrame.from_snapshot(s) for s in frames], indent=2).decode()


def save_demo(path: Union[str, Path], frames: Sequence[SceneSnapshot]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_demo(frames) + "\n", encoding="utf-8")
    return path


def record_demo(task: Task, reset_seed: int, config: WorldConfig = DEFAULT_WORLD) -> List[SceneSnapshot]:
    """Frames o_0 .. o_T of the scripted expert solving ``task`` from ``reset(reset_seed)``."""
    state = reset(reset_seed, config)
    frames = [snapshot(state)]
    for action in scripted_expert(task, state, config):
        state = step(state, action, config)
        frames.append(snapshot(state))
    logger.debug("recorded %d frames of %r (seed %d)", len(frames), task.text, reset_seed)
    return frames
