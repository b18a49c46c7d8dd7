from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, List, Tuple

from pydantic import BaseModel, Field

from lca.semantics.captions import Caption


@dataclass(frozen=True)
class Curriculum:
    """Ordered subgoal captions for one task or instruction."""

    captions: Tuple[Caption, ...]

    def __post_init__(self) -> None:
        if not self.captions:
            raise ValueError("a curriculum needs at least one subgoal")
        for prev, cur in zip(self.captions, self.captions[1:]):
            if prev == cur:
                raise ValueError(f"consecutive duplicate subgoal {cur.text!r}")

    @classmethod
    def collapsed(cls, captions: List[Caption]) -> "Curriculum":
        """Build from a list that may repeat a caption back to back."""
        kept: List[Caption] = []
        for caption in captions:
            if not kept or kept[-1] != caption:
                kept.append(caption)
        return cls(tuple(kept))

    @property
    def final(self) -> Caption:
        return self.captions[-1]

    def texts(self) -> List[str]:
        return [c.text for c in self.captions]

    def render(self) -> str:
        """Bracketed, comma-separated list of quoted captions."""
        return json.dumps(self.texts())

    def __iter__(self) -> Iterator[Caption]:
        return iter(self.captions)

    def __len__(self) -> int:
        return len(self.captions)


class WorkedExample(BaseModel):
    task: str = Field(..., description="Task instruction given to the model")
    subgoals: List[str] = Field(..., description="Desired decomposition, in order")


class DecompositionPrompt(BaseModel):
    preamble: str
    examples: List[WorkedExample] = Field(..., min_length=2, max_length=2)
    query: str = Field(
        default="Task: {task}\nSub-goals:",
        description="Query slot; {task} is replaced by the task string",
    )


# Environment setting plus two worked examples; the queried task follows.
DEFAULT_PROMPT = DecompositionPrompt(
    preamble=(
        "A robot arm is in front of a basket containing a red, a green and a blue object. "
        "The robot can pick up one object at a time and place it on the floor of the basket "
        "or on top of another object. Decompose the task into a list of short sub-goals the "
        "robot should achieve in order. Each sub-goal must be one of: "
        "\"The robot is grasping the X object\" or \"The X object is on top of the Y object\"."
    ),
    examples=[
        WorkedExample(
            task="Stack the green object on top of the red object",
            subgoals=[
                "The robot is grasping the green object",
                "The green object is on top of the red object",
            ],
        ),
        WorkedExample(
            task="Stack the blue object on top of the green object",
            subgoals=[
                "The robot is grasping the blue object",
                "The blue object is on top of the green object",
            ],
        ),
    ],
)
