from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Tuple, Union

from lca.world.types import OBJECTS, ObjectId, SceneSnapshot


class GrammarError(ValueError):
    """Text outside the task, caption or instruction grammar."""


@dataclass(frozen=True, slots=True)
class Grasping:
    obj: ObjectId

    @property
    def text(self) -> str:
        return f"The robot is grasping the {self.obj.value} object"

    @property
    def objects(self) -> Tuple[ObjectId, ...]:
        return (self.obj,)


@dataclass(frozen=True, slots=True)
class OnTop:
    top: ObjectId
    bottom: ObjectId

    def __post_init__(self) -> None:
        if self.top is self.bottom:
            raise ValueError(f"an object cannot be on top of itself ({self.top.value})")

    @property
    def text(self) -> str:
        return f"The {self.top.value} object is on top of the {self.bottom.value} object"

    @property
    def objects(self) -> Tuple[ObjectId, ...]:
        return (self.top, self.bottom)


Caption = Union[Grasping, OnTop]

ALL_CAPTIONS: Tuple[Caption, ...] = tuple(Grasping(obj) for obj in OBJECTS) + tuple(
    OnTop(top, bottom) for top in OBJECTS for bottom in OBJECTS if top is not bottom
)

_COLOR = r"(red|green|blue)"
_GRASPING_RE = re.compile(rf"^the robot is grasping the {_COLOR} object\.?$", re.IGNORECASE)
_ON_TOP_RE = re.compile(rf"^the {_COLOR} object is on top of the {_COLOR} object\.?$", re.IGNORECASE)

CAPTION_FORMS = (
    "The robot is grasping the {color} object",
    "The {color} object is on top of the {color} object",
)


def parse_caption(text: str) -> Caption:
    cleaned = " ".join(text.split())
    match = _GRASPING_RE.match(cleaned)
    if match:
        return Grasping(ObjectId.from_color(match.group(1)))
    match = _ON_TOP_RE.match(cleaned)
    if match:
        top, bottom = (ObjectId.from_color(c) for c in match.groups())
        if top is bottom:
            raise GrammarError(f"caption names the same object twice: {text!r}")
        return OnTop(top, bottom)
    raise GrammarError(f"not a caption: {text!r}; expected one of {list(CAPTION_FORMS)}")


def holds(caption: Caption, snapshot: SceneSnapshot) -> bool:
    """Annotator truth of ``caption`` in ``snapshot``."""
    if isinstance(caption, Grasping):
        return snapshot.grasping is caption.obj
    return (caption.top, caption.bottom) in snapshot.on_top


def true_captions(snapshot: SceneSnapshot) -> Tuple[Caption, ...]:
    return tuple(c for c in ALL_CAPTIONS if holds(c, snapshot))
